#![allow(dead_code)]

pub mod oracle;

use asp_core::{EmbeddingStack, LayerEmbeddings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random unit rows as nested vectors: `[layer][location][dim]`.
pub fn random_rows(rng: &mut impl Rng, layers: usize, locations: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    (0..layers).map(|_| (0..locations).map(|_| unit_vector(rng, dim)).collect()).collect()
}

/// Rows that lean toward `base`, so similarities span a useful range.
pub fn correlated_rows(rng: &mut impl Rng, base: &[Vec<Vec<f64>>], mix: f64) -> Vec<Vec<Vec<f64>>> {
    base.iter()
        .map(|layer| {
            layer
                .iter()
                .map(|row| {
                    let noise = unit_vector(rng, row.len());
                    let v: Vec<f64> = row.iter().zip(&noise).map(|(a, b)| mix * a + (1.0 - mix) * b).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        })
        .collect()
}

pub fn stack(rows: &[Vec<Vec<f64>>]) -> EmbeddingStack {
    let layers = rows
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let dim = layer[0].len();
            let data = layer.iter().flatten().copied().collect();
            LayerEmbeddings::new(l, (1, layer.len()), (0..layer.len()).collect(), dim, data).unwrap()
        })
        .collect();
    EmbeddingStack::new(layers).unwrap()
}

/// Inverse of [`stack`] for gradient bookkeeping.
pub fn flatten(rows: &[Vec<Vec<f64>>]) -> Vec<f64> {
    rows.iter().flatten().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], layers: usize, locations: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    (0..layers).map(|l| (0..locations).map(|s| flat[(l * locations + s) * dim..(l * locations + s + 1) * dim].to_vec()).collect()).collect()
}
