//! Paired (SSIM, PHV) and unpaired (FID, KID) image-quality metrics.

mod fid;
mod kid;
mod phv;
mod ssim;
mod table;

pub use fid::fid;
pub use kid::{kid, KidEstimate};
pub use phv::{phv, FeatureMap, PhvScores};
pub use ssim::ssim;
pub use table::MetricRow;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A set of feature vectors of equal dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of dimension {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature set"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyInput("feature set has no rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.as_ref().len() != dim {
                return Err(Error::Shape(format!("row of dimension {} in a set of dimension {dim}", r.as_ref().len())));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}
