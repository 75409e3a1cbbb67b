//! Multi-layer sets of unit-norm patch embeddings.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation of an embedding row norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// Patch embeddings sampled from one feature layer.
///
/// Row `s` of `data` is the embedding at grid cell `locations[s]`
/// (row-major index into a `grid.0 x grid.1` feature map).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEmbeddings {
    layer_id: usize,
    grid: (usize, usize),
    locations: Vec<usize>,
    dim: usize,
    data: Vec<f64>,
}

impl LayerEmbeddings {
    /// Builds a layer, checking shape, location bounds and the unit-norm invariant.
    pub fn new(layer_id: usize, grid: (usize, usize), locations: Vec<usize>, dim: usize, data: Vec<f64>) -> Result<Self> {
        let layer = Self { layer_id, grid, locations, dim, data };
        layer.check_shape()?;
        for s in 0..layer.len() {
            let norm = norm(layer.row(s));
            if !norm.is_finite() || norm < 1e-12 {
                return Err(Error::InvalidEmbedding(format!("layer {layer_id} row {s} has zero or non-finite norm")));
            }
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidEmbedding(format!("layer {layer_id} row {s} has norm {norm}, expected 1")));
            }
        }
        Ok(layer)
    }

    /// Builds a layer from arbitrary rows, L2-normalizing each one.
    pub fn normalized(layer_id: usize, grid: (usize, usize), locations: Vec<usize>, dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape(format!("layer {layer_id} has zero embedding dimension")));
        }
        for row in data.chunks_mut(dim) {
            let n = norm(row);
            if !n.is_finite() || n < 1e-12 {
                return Err(Error::InvalidEmbedding(format!("layer {layer_id} contains a zero-norm row")));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Self::new(layer_id, grid, locations, dim, data)
    }

    fn check_shape(&self) -> Result<()> {
        let id = self.layer_id;
        if self.dim == 0 {
            return Err(Error::Shape(format!("layer {id} has zero embedding dimension")));
        }
        if self.data.len() != self.locations.len() * self.dim {
            return Err(Error::Shape(format!(
                "layer {id}: {} values for {} locations of dimension {}",
                self.data.len(),
                self.locations.len(),
                self.dim
            )));
        }
        if self.locations.len() < 2 {
            return Err(Error::Config(format!(
                "layer {id} has {} locations; at least 2 are needed so a negative exists",
                self.locations.len()
            )));
        }
        let cells = self.grid.0 * self.grid.1;
        if let Some(&bad) = self.locations.iter().find(|&&l| l >= cells) {
            return Err(Error::Range(format!("layer {id}: location {bad} outside a {}x{} grid", self.grid.0, self.grid.1)));
        }
        Ok(())
    }

    pub fn layer_id(&self) -> usize {
        self.layer_id
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn locations(&self) -> &[usize] {
        &self.locations
    }

    /// Embedding dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sampled locations `S_l`.
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Row-major `S_l x D` embedding matrix.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }
}

/// Embeddings for every tapped layer of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStack {
    layers: Vec<LayerEmbeddings>,
}

impl EmbeddingStack {
    pub fn new(layers: Vec<LayerEmbeddings>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("embedding stack has no layers"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerEmbeddings] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Looks a layer up by its `layer_id`.
    pub fn layer(&self, layer_id: usize) -> Option<&LayerEmbeddings> {
        self.layers.iter().find(|l| l.layer_id == layer_id)
    }

    /// Checks that two stacks share layers, grids, locations and dimensions.
    pub fn check_aligned(&self, other: &EmbeddingStack) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Alignment(format!("{} layers vs {} layers", self.layers.len(), other.layers.len())));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.layer_id != b.layer_id {
                return Err(Error::Alignment(format!("layer ids {} vs {}", a.layer_id, b.layer_id)));
            }
            if a.dim != b.dim {
                return Err(Error::Alignment(format!("layer {}: dimension {} vs {}", a.layer_id, a.dim, b.dim)));
            }
            if a.grid != b.grid || a.locations != b.locations {
                return Err(Error::Alignment(format!("layer {}: sampled locations differ", a.layer_id)));
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
