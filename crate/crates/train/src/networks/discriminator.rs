use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conv_params, NetworkError};
use crate::nn::{Cache, Op, ParamSet, Scalar, Sequential, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

/// PatchGAN layout: `layers` 4x4 convolutions with padding 1. The first
/// `layers - 2` have stride 2, the last two stride 1; width doubles up to 8x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    pub base_width: usize,
    pub layers: usize,
}

impl DiscriminatorSpec {
    pub fn default_preset() -> Self {
        Self { in_channels: 3, base_width: 64, layers: 5 }
    }

    pub fn tiny() -> Self {
        Self { in_channels: 3, base_width: 8, layers: 5 }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.layers < 2 || self.base_width == 0 {
            return Err(NetworkError::Spec("discriminator needs at least two layers and a positive width".into()));
        }
        Ok(())
    }

    /// Logit grid size for an `h x w` input.
    pub fn output_size(&self, mut h: usize, mut w: usize) -> Option<(usize, usize)> {
        for i in 0..self.layers {
            let stride = if i + 2 < self.layers { 2 } else { 1 };
            if h + 2 < 4 || w + 2 < 4 {
                return None;
            }
            h = (h + 2 - 4) / stride + 1;
            w = (w + 2 - 4) / stride + 1;
        }
        Some((h, w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub net: Sequential,
}

impl Discriminator {
    pub fn new<T: Scalar>(spec: DiscriminatorSpec, rng: &mut impl Rng) -> Result<(Self, ParamSet<T>), NetworkError> {
        spec.validate()?;
        let mut p = ParamSet::new();
        let mut ops = Vec::new();
        let mut cin = spec.in_channels;
        for i in 0..spec.layers {
            let last = i + 1 == spec.layers;
            let stride = if i + 2 < spec.layers { 2 } else { 1 };
            let cout = if last { 1 } else { spec.base_width << i.min(3) };
            ops.push(conv_params(&mut p, rng, &format!("conv{i}"), cin, cout, 4, stride, 1));
            if !last {
                if i > 0 {
                    ops.push(Op::InstanceNorm);
                }
                ops.push(Op::LeakyRelu(LEAKY_SLOPE));
            }
            cin = cout;
        }
        Ok((Self { spec, net: Sequential { ops } }, p))
    }

    fn check<T>(&self, x: &Tensor<T>) -> Result<(), NetworkError> {
        if x.c != self.spec.in_channels {
            return Err(NetworkError::Shape(format!("expected {} channels, got {}", self.spec.in_channels, x.c)));
        }
        if self.spec.output_size(x.h, x.w).is_none() {
            return Err(NetworkError::Shape(format!("{}x{} is too small for the discriminator", x.h, x.w)));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check(x)?;
        Ok(self.net.run(params, x, self.net.ops.len(), &[], false).output)
    }

    pub fn forward_cached<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<Cache<T>>), NetworkError> {
        self.check(x)?;
        let run = self.net.run(params, x, self.net.ops.len(), &[], true);
        Ok((run.output, run.caches))
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        caches: &[Cache<T>],
        dlogits: Tensor<T>,
        grads: &mut ParamSet<T>,
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        self.net.backward(params, caches, Some(dlogits), &[], grads, want_dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_output_sizes() {
        let spec = DiscriminatorSpec::default_preset();
        assert_eq!(spec.output_size(512, 512), Some((62, 62)));
        assert_eq!(spec.output_size(256, 256), Some((30, 30)));
        assert_eq!(DiscriminatorSpec::tiny().output_size(64, 64), Some((6, 6)));
        assert_eq!(spec.output_size(8, 8), None);
    }
}
