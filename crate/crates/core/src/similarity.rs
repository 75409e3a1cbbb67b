//! Anchor-positive similarity heat maps and histograms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingStack};
use crate::error::{Error, Result};

/// Cosine similarity between output and groundtruth embeddings on one layer's grid.
///
/// `values` is the dense row-major grid; cells that were not sampled are `None`
/// (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub layer_id: usize,
    pub grid_shape: [usize; 2],
    pub values: Vec<Option<f64>>,
}

impl SimilarityMap {
    /// Similarities at the sampled cells, in row-major cell order.
    pub fn sampled(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.grid_shape[0] || col >= self.grid_shape[1] {
            return None;
        }
        self.values[row * self.grid_shape[1] + col]
    }
}

/// `C_s = z_out^s . z_gt^s` for every sampled location of `layer_id`.
pub fn similarity_heatmap(output: &EmbeddingStack, groundtruth: &EmbeddingStack, layer_id: usize) -> Result<SimilarityMap> {
    output.check_aligned(groundtruth)?;
    let (a, b) = match (output.layer(layer_id), groundtruth.layer(layer_id)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Range(format!("no layer with id {layer_id}"))),
    };
    let (h, w) = a.grid();
    let mut values = vec![None; h * w];
    for (s, &loc) in a.locations().iter().enumerate() {
        values[loc] = Some(dot(a.row(s), b.row(s)).clamp(-1.0, 1.0));
    }
    Ok(SimilarityMap { layer_id, grid_shape: [h, w], values })
}

/// Counts of similarity values in uniform bins over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin edges from -1 to 1 (`bins + 1` values).
    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
    }
}

/// Histogram of every sampled similarity in `maps`; 1.0 falls in the last bin.
pub fn similarity_histogram(maps: &[SimilarityMap], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    let mut seen = false;
    for v in maps.iter().flat_map(|m| m.sampled()) {
        seen = true;
        let pos = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64) as usize;
        counts[pos.min(bins - 1)] += 1;
    }
    if !seen {
        return Err(Error::EmptyInput("no similarity values to histogram"));
    }
    Ok(Histogram { counts })
}
