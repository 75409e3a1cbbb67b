use asp_core::{EmbeddingStack, LayerEmbeddings};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetworkError, INIT_STD};
use crate::nn::{gemm, ParamSet, Scalar, Tensor, View};

/// Added to every component before normalization so all-zero features still
/// map to a unit vector.
pub const NORM_EPS: f64 = 1e-8;

/// One two-layer perceptron head per tap: `C -> D -> D`, then unit normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSpec {
    pub in_channels: Vec<usize>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    cin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub spec: ProjectorSpec,
    heads: Vec<Head>,
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    gathered: Vec<T>,
    hidden: Vec<T>,
    unit: Vec<T>,
    norms: Vec<T>,
    locations: Vec<usize>,
    shape: (usize, usize, usize),
}

/// Activations kept by [`Projector::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ProjectorCache<T> {
    heads: Vec<HeadCache<T>>,
}

impl Projector {
    pub fn new<T: Scalar>(spec: ProjectorSpec, rng: &mut impl Rng) -> Result<(Self, ParamSet<T>), NetworkError> {
        if spec.dim == 0 || spec.in_channels.is_empty() {
            return Err(NetworkError::Spec("projector needs a positive dimension and at least one head".into()));
        }
        let mut p = ParamSet::new();
        let d = spec.dim;
        let heads = spec
            .in_channels
            .iter()
            .enumerate()
            .map(|(i, &cin)| Head {
                w1: p.push_normal(format!("head{i}.fc0.weight"), vec![d, cin], INIT_STD, rng),
                b1: p.push_zeros(format!("head{i}.fc0.bias"), vec![d]),
                w2: p.push_normal(format!("head{i}.fc1.weight"), vec![d, d], INIT_STD, rng),
                b2: p.push_zeros(format!("head{i}.fc1.bias"), vec![d]),
                cin,
            })
            .collect();
        Ok((Self { spec, heads }, p))
    }

    /// Embeds the feature columns at `locations[l]` of each tap `l`.
    ///
    /// `layer_ids` label the stack layers. A row depends only on its own
    /// feature column.
    pub fn forward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        features: &[Tensor<T>],
        locations: &[Vec<usize>],
        layer_ids: &[usize],
    ) -> Result<(EmbeddingStack, ProjectorCache<T>), NetworkError> {
        if features.len() != self.heads.len() || locations.len() != self.heads.len() || layer_ids.len() != self.heads.len() {
            return Err(NetworkError::Shape(format!(
                "{} heads, {} feature maps, {} location sets",
                self.heads.len(),
                features.len(),
                locations.len()
            )));
        }
        let d = self.spec.dim;
        let mut layers = Vec::with_capacity(self.heads.len());
        let mut caches = Vec::with_capacity(self.heads.len());
        for (((head, f), locs), &id) in self.heads.iter().zip(features).zip(locations).zip(layer_ids) {
            if f.c != head.cin {
                return Err(NetworkError::Shape(format!("head expects {} channels, got {}", head.cin, f.c)));
            }
            let plane = f.plane();
            if let Some(bad) = locs.iter().find(|&&s| s >= plane) {
                return Err(NetworkError::Range(format!("location {bad} outside a {}x{} grid", f.h, f.w)));
            }
            let s = locs.len();
            let mut gathered = vec![T::zero(); s * head.cin];
            for (row, &loc) in locs.iter().enumerate() {
                for c in 0..head.cin {
                    gathered[row * head.cin + c] = f.data[c * plane + loc];
                }
            }
            let mut hidden = bias_rows(params.data(head.b1), s);
            gemm(T::one(), View::new(&gathered, s, head.cin), View::new(params.data(head.w1), d, head.cin).t(), T::one(), &mut hidden, d);
            let mut relu = hidden.clone();
            relu.iter_mut().for_each(|v| *v = v.max(T::zero()));
            let mut out = bias_rows(params.data(head.b2), s);
            gemm(T::one(), View::new(&relu, s, d), View::new(params.data(head.w2), d, d).t(), T::one(), &mut out, d);
            let eps = T::of(NORM_EPS);
            let mut norms = Vec::with_capacity(s);
            for row in out.chunks_mut(d) {
                row.iter_mut().for_each(|v| *v += eps);
                let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
                row.iter_mut().for_each(|v| *v = *v / n);
                norms.push(n);
            }
            let data: Vec<f64> = out.iter().map(|v| v.f64()).collect();
            let layer = LayerEmbeddings::new(id, (f.h, f.w), locs.clone(), d, data).map_err(|e| NetworkError::Shape(e.to_string()))?;
            layers.push(layer);
            caches.push(HeadCache { gathered, hidden, unit: out, norms, locations: locs.clone(), shape: f.shape() });
        }
        let stack = EmbeddingStack::new(layers).map_err(|e| NetworkError::Shape(e.to_string()))?;
        Ok((stack, ProjectorCache { heads: caches }))
    }

    /// Gradients of the embedding rows (`grad_rows[l]` is `S_l x D`, as
    /// returned by the core losses) back to the feature maps.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &ProjectorCache<T>,
        grad_rows: &[Vec<f64>],
        grads: &mut ParamSet<T>,
    ) -> Vec<Tensor<T>> {
        let d = self.spec.dim;
        let mut out = Vec::with_capacity(self.heads.len());
        for ((head, hc), g) in self.heads.iter().zip(&cache.heads).zip(grad_rows) {
            let s = hc.locations.len();
            // Through z = u / |u|.
            let mut du = vec![T::zero(); s * d];
            for r in 0..s {
                let z = &hc.unit[r * d..(r + 1) * d];
                let gz: Vec<T> = g[r * d..(r + 1) * d].iter().map(|&v| T::of(v)).collect();
                let proj = z.iter().zip(&gz).map(|(&a, &b)| a * b).sum::<T>();
                for ((o, &zi), &gi) in du[r * d..(r + 1) * d].iter_mut().zip(z).zip(&gz) {
                    *o = (gi - zi * proj) / hc.norms[r];
                }
            }
            add_column_sums(grads.data_mut(head.b2), &du, d);
            let mut relu = hc.hidden.clone();
            relu.iter_mut().for_each(|v| *v = v.max(T::zero()));
            gemm(T::one(), View::new(&du, s, d).t(), View::new(&relu, s, d), T::one(), grads.data_mut(head.w2), d);
            let mut dh = vec![T::zero(); s * d];
            gemm(T::one(), View::new(&du, s, d), View::new(params.data(head.w2), d, d), T::zero(), &mut dh, d);
            dh.iter_mut().zip(&hc.hidden).for_each(|(g, &h)| {
                if h <= T::zero() {
                    *g = T::zero()
                }
            });
            add_column_sums(grads.data_mut(head.b1), &dh, d);
            gemm(T::one(), View::new(&dh, s, d).t(), View::new(&hc.gathered, s, head.cin), T::one(), grads.data_mut(head.w1), head.cin);
            let mut dx = vec![T::zero(); s * head.cin];
            gemm(T::one(), View::new(&dh, s, d), View::new(params.data(head.w1), d, head.cin), T::zero(), &mut dx, head.cin);
            let (c, h, w) = hc.shape;
            let mut map = Tensor::zeros(c, h, w);
            let plane = h * w;
            for (row, &loc) in hc.locations.iter().enumerate() {
                for ch in 0..c {
                    map.data[ch * plane + loc] += dx[row * c + ch];
                }
            }
            out.push(map);
        }
        out
    }
}

fn bias_rows<T: Scalar>(bias: &[T], rows: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        v.extend_from_slice(bias);
    }
    v
}

fn add_column_sums<T: Scalar>(acc: &mut [T], m: &[T], cols: usize) {
    for row in m.chunks(cols) {
        acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
    }
}
