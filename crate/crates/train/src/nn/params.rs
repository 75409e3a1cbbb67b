use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// An ordered collection of named parameter tensors.
///
/// Layers refer to their parameters by index; gradient buffers are parameter
/// sets with the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    pub params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "parameter shape");
        self.params.push(Param { name: name.into(), shape, data });
        self.params.len() - 1
    }

    /// Weights drawn from N(0, std^2).
    pub fn push_normal(&mut self, name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> usize {
        let n = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
        self.push(name, shape, data)
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let n = shape.iter().product();
        self.push(name, shape, vec![T::zero(); n])
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), data: vec![T::zero(); p.data.len()] })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), data: p.data.iter().map(|v| U::of(v.f64())).collect() })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    #[inline]
    pub fn data(&self, index: usize) -> &[T] {
        &self.params[index].data
    }

    #[inline]
    pub fn data_mut(&mut self, index: usize) -> &mut [T] {
        &mut self.params[index].data
    }

    pub fn find(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Scalar at flat position `i` across all parameters in order.
    pub fn flat_get(&self, mut i: usize) -> T {
        for p in &self.params {
            if i < p.data.len() {
                return p.data[i];
            }
            i -= p.data.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut i: usize, v: T) {
        for p in &mut self.params {
            if i < p.data.len() {
                p.data[i] = v;
                return;
            }
            i -= p.data.len();
        }
        panic!("flat index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    /// Same names and shapes in the same order.
    pub fn same_layout<U>(&self, other: &ParamSet<U>) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}
