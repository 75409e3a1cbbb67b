use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stage of staged features, channel-major (`channels x height x width`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width || data.is_empty() {
            return Err(Error::Shape(format!("{} values for a {channels}x{height}x{width} feature map", data.len())));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Divides every spatial position's channel vector by its L2 norm.
    fn channel_normalized(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        for p in 0..hw {
            let n = libm::sqrt((0..self.channels).map(|c| out[c * hw + p] * out[c * hw + p]).sum::<f64>());
            let inv = 1.0 / (n + 1e-10);
            for c in 0..self.channels {
                out[c * hw + p] *= inv;
            }
        }
        out
    }
}

/// Per-stage PHV and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhvScores {
    pub per_layer: Vec<f64>,
    pub average: f64,
}

/// Fraction of channel-normalized feature elements whose absolute difference
/// exceeds `threshold`, per stage, plus the average across stages.
pub fn phv(a: &[FeatureMap], b: &[FeatureMap], threshold: f64) -> Result<PhvScores> {
    if a.is_empty() {
        return Err(Error::EmptyInput("no feature stages"));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} stages vs {} stages", a.len(), b.len())));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Config(format!("PHV threshold must be non-negative, got {threshold}")));
    }
    let mut per_layer = Vec::with_capacity(a.len());
    for (fa, fb) in a.iter().zip(b) {
        if (fa.channels, fa.height, fa.width) != (fb.channels, fb.height, fb.width) {
            return Err(Error::Shape("feature stage shapes differ".into()));
        }
        let na = fa.channel_normalized();
        let nb = fb.channel_normalized();
        let over = na.iter().zip(&nb).filter(|(x, y)| (*x - *y).abs() > threshold).count();
        per_layer.push(over as f64 / na.len() as f64);
    }
    let average = per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    Ok(PhvScores { per_layer, average })
}
