use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conv_params, NetworkError};
use crate::nn::{Cache, Op, ParamSet, Scalar, Sequential, Tensor};

/// ResNet generator layout.
///
/// Encoder layer ids: 0 is the stem, `1..=n_down` the downsampling stages and
/// `n_down + b` the `b`-th residual block (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub n_blocks: usize,
    pub n_down: usize,
    pub taps: Vec<usize>,
}

impl GeneratorSpec {
    pub fn default_preset() -> Self {
        Self::with_default_taps(64, 6, 2)
    }

    pub fn tiny() -> Self {
        Self::with_default_taps(8, 2, 2)
    }

    pub fn with_default_taps(base_width: usize, n_blocks: usize, n_down: usize) -> Self {
        let mut spec = Self { in_channels: 3, out_channels: 3, base_width, n_blocks, n_down, taps: Vec::new() };
        spec.taps = default_taps(spec.last_encoder_id());
        spec
    }

    pub fn last_encoder_id(&self) -> usize {
        self.n_down + self.n_blocks
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.n_blocks == 0 {
            return Err(NetworkError::Spec("generator needs at least one residual block".into()));
        }
        if self.base_width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(NetworkError::Spec("generator widths must be positive".into()));
        }
        if self.taps.is_empty() {
            return Err(NetworkError::Spec("generator needs at least one tap layer".into()));
        }
        self.check_taps(&self.taps)
    }

    pub fn check_taps(&self, taps: &[usize]) -> Result<(), NetworkError> {
        if taps.is_empty() {
            return Err(NetworkError::Range("empty tap list".into()));
        }
        if let Some(bad) = taps.iter().find(|&&t| t > self.last_encoder_id()) {
            return Err(NetworkError::Range(format!("tap {bad} is past the last encoder layer {}", self.last_encoder_id())));
        }
        Ok(())
    }

    /// Channels of encoder layer `id`.
    pub fn tap_channels(&self, id: usize) -> usize {
        self.base_width << id.min(self.n_down)
    }

    /// Stride of encoder layer `id` relative to the input.
    pub fn tap_stride(&self, id: usize) -> usize {
        1 << id.min(self.n_down)
    }
}

/// `count` ids spread evenly over `0..=last`, deduplicated.
fn default_taps(last: usize) -> Vec<usize> {
    let count = 5.min(last + 1);
    let mut taps: Vec<usize> = (0..count).map(|i| (i * last + (count - 1) / 2) / (count - 1).max(1)).collect();
    taps.dedup();
    taps
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub net: Sequential,
    /// Boundary (in `net`) at which each encoder id's activation is read.
    boundaries: Vec<usize>,
}

impl Generator {
    pub fn new<T: Scalar>(spec: GeneratorSpec, rng: &mut impl Rng) -> Result<(Self, ParamSet<T>), NetworkError> {
        spec.validate()?;
        let mut p = ParamSet::new();
        let mut ops = Vec::new();
        let mut boundaries = Vec::new();
        let nf = spec.base_width;
        ops.push(conv_params(&mut p, rng, "stem", spec.in_channels, nf, 7, 1, 3));
        ops.extend([Op::InstanceNorm, Op::Relu]);
        boundaries.push(ops.len());
        for i in 0..spec.n_down {
            let (cin, cout) = (nf << i, nf << (i + 1));
            ops.push(conv_params(&mut p, rng, &format!("down{i}"), cin, cout, 3, 2, 1));
            ops.extend([Op::InstanceNorm, Op::Relu]);
            boundaries.push(ops.len());
        }
        let width = nf << spec.n_down;
        for b in 0..spec.n_blocks {
            let body = vec![
                conv_params(&mut p, rng, &format!("block{b}.conv0"), width, width, 3, 1, 1),
                Op::InstanceNorm,
                Op::Relu,
                conv_params(&mut p, rng, &format!("block{b}.conv1"), width, width, 3, 1, 1),
                Op::InstanceNorm,
            ];
            ops.push(Op::Residual(body));
            boundaries.push(ops.len());
        }
        for i in (0..spec.n_down).rev() {
            let (cin, cout) = (nf << (i + 1), nf << i);
            ops.push(Op::Upsample2);
            ops.push(conv_params(&mut p, rng, &format!("up{i}"), cin, cout, 3, 1, 1));
            ops.extend([Op::InstanceNorm, Op::Relu]);
        }
        ops.push(conv_params(&mut p, rng, "head", nf, spec.out_channels, 7, 1, 3));
        ops.push(Op::Tanh);
        Ok((Self { spec, net: Sequential { ops }, boundaries }, p))
    }

    pub fn check_input<T>(&self, x: &Tensor<T>) -> Result<(), NetworkError> {
        let f = 1 << self.spec.n_down;
        if x.c != self.spec.in_channels {
            return Err(NetworkError::Shape(format!("expected {} channels, got {}", self.spec.in_channels, x.c)));
        }
        if !x.h.is_multiple_of(f) || !x.w.is_multiple_of(f) || x.h == 0 || x.w == 0 {
            return Err(NetworkError::Shape(format!("{}x{} is not divisible by {f}", x.h, x.w)));
        }
        Ok(())
    }

    fn tap_boundaries(&self, taps: &[usize]) -> Result<Vec<usize>, NetworkError> {
        self.spec.check_taps(taps)?;
        Ok(taps.iter().map(|&t| self.boundaries[t]).collect())
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check_input(x)?;
        Ok(self.net.run(params, x, self.net.ops.len(), &[], false).output)
    }

    /// Full forward pass keeping caches and the activations at `taps` (which may be empty).
    pub fn forward_cached<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        taps: &[usize],
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>, Vec<Cache<T>>), NetworkError> {
        self.check_input(x)?;
        let b = if taps.is_empty() { Vec::new() } else { self.tap_boundaries(taps)? };
        let run = self.net.run(params, x, self.net.ops.len(), &b, true);
        Ok((run.output, run.taps, run.caches))
    }

    /// Encoder activations at `taps`, running only as deep as needed.
    pub fn encode<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        taps: &[usize],
        keep: bool,
    ) -> Result<(Vec<Tensor<T>>, Vec<Cache<T>>), NetworkError> {
        self.check_input(x)?;
        let b = self.tap_boundaries(taps)?;
        let end = *b.iter().max().expect("non-empty taps");
        let run = self.net.run(params, x, end, &b, keep);
        Ok((run.taps, run.caches))
    }

    /// Backward through a full cached forward; returns nothing (the input is data).
    pub fn backward<T: Scalar>(&self, params: &ParamSet<T>, caches: &[Cache<T>], dy: Tensor<T>, grads: &mut ParamSet<T>) {
        self.net.backward(params, caches, Some(dy), &[], grads, false);
    }

    /// Backward through [`Generator::encode`] with gradients at each tap;
    /// returns the input gradient.
    pub fn encode_backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        caches: &[Cache<T>],
        taps: &[usize],
        tap_grads: &[Tensor<T>],
        grads: &mut ParamSet<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let b = self.tap_boundaries(taps)?;
        let inject: Vec<(usize, &Tensor<T>)> = b.into_iter().zip(tap_grads).collect();
        Ok(self.net.backward(params, caches, None, &inject, grads, true).expect("taps receive gradients"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_tap_ids() {
        assert_eq!(GeneratorSpec::default_preset().taps, vec![0, 2, 4, 6, 8]);
        assert_eq!(GeneratorSpec::tiny().taps, vec![0, 1, 2, 3, 4]);
        assert_eq!(GeneratorSpec::with_default_taps(4, 1, 1).taps, vec![0, 1, 2]);
    }

    #[test]
    fn tap_shapes_follow_strides() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (g, p) = Generator::new::<f32>(GeneratorSpec::tiny(), &mut rng).unwrap();
        let x = Tensor::zeros(3, 32, 32);
        let (taps, _) = g.encode(&p, &x, &[0, 1, 2, 4], false).unwrap();
        let shapes: Vec<_> = taps.iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, vec![(8, 32, 32), (16, 16, 16), (32, 8, 8), (32, 8, 8)]);
        for id in 0..=4 {
            assert_eq!(g.spec.tap_channels(id), g.net.trace_size(32, 32, g.boundaries[id]).unwrap().0);
        }
        assert!(matches!(g.encode(&p, &x, &[], false), Err(NetworkError::Range(_))));
        assert!(matches!(g.encode(&p, &x, &[5], false), Err(NetworkError::Range(_))));
        assert!(matches!(g.forward(&p, &Tensor::zeros(3, 30, 32)), Err(NetworkError::Shape(_))));
    }
}
