use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::embedding::dot;
use crate::error::{Error, Result};

/// KID averaged over random subsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidEstimate {
    pub mean: f64,
    pub std: f64,
}

impl KidEstimate {
    /// The value as tabulated (raw estimate times 1000).
    pub fn x1000(&self) -> f64 {
        self.mean * 1000.0
    }
}

fn kernel(x: &[f64], y: &[f64], dim: f64) -> f64 {
    let k = dot(x, y) / dim + 1.0;
    k * k * k
}

fn mmd2(a: &FeatureSet, ia: &[usize], b: &FeatureSet, ib: &[usize]) -> f64 {
    let m = ia.len() as f64;
    let d = a.dim() as f64;
    let off_diagonal = |set: &FeatureSet, idx: &[usize]| {
        let mut s = 0.0;
        for (p, &i) in idx.iter().enumerate() {
            for &j in &idx[p + 1..] {
                s += kernel(set.row(i), set.row(j), d);
            }
        }
        2.0 * s
    };
    let kxx = off_diagonal(a, ia);
    let kyy = off_diagonal(b, ib);
    // Cross terms pair the p-th draw of one set with every other draw of the
    // other set (U-statistic form).
    let mut kxy = 0.0;
    for (p, &i) in ia.iter().enumerate() {
        for (q, &j) in ib.iter().enumerate() {
            if p != q {
                kxy += kernel(a.row(i), b.row(j), d);
            }
        }
    }
    (kxx + kyy - 2.0 * kxy) / (m * (m - 1.0))
}

/// Unbiased (U-statistic) MMD^2 with the cubic polynomial kernel
/// `(x.y / dim + 1)^3`, averaged over `num_subsets` subsets of `subset_size`
/// rows from each set.
///
/// Subset indices for both sets are drawn from identically seeded streams, so
/// equal-sized sets are subsampled at the same positions and `kid(A, A)` is
/// exactly zero.
pub fn kid(a: &FeatureSet, b: &FeatureSet, subset_size: usize, num_subsets: usize, seed: u64) -> Result<KidEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(alloc::format!("feature dimensions {} vs {}", a.dim(), b.dim())));
    }
    let available = a.len().min(b.len());
    if subset_size > available {
        return Err(Error::Capacity { requested: subset_size, available });
    }
    if subset_size < 2 || num_subsets == 0 {
        return Err(Error::Config("KID needs subsets of at least 2 rows and at least one subset".into()));
    }
    let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(num_subsets);
    for _ in 0..num_subsets {
        let ia = rand::seq::index::sample(&mut rng_a, a.len(), subset_size).into_vec();
        let ib = rand::seq::index::sample(&mut rng_b, b.len(), subset_size).into_vec();
        values.push(mmd2(a, &ia, b, &ib));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(KidEstimate { mean, std: libm::sqrt(var) })
}
