//! Feature extractors for FID, KID and PHV.
//!
//! `tiny_random_conv` is four stride-2 3x3 convolutions with ReLU and fixed,
//! seeded He-normal weights; it needs no downloads. A pretrained stack with
//! the same layout can be supplied as a safetensors file (tensors
//! `stage{i}.weight` of shape `[cout, cin, 3, 3]` and `stage{i}.bias`) through
//! `ASP_PRETRAINED_FEATURES`.

use std::path::Path;

use asp_core::metrics::FeatureMap;
use asp_core::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors};

use crate::nn::Conv;
use crate::nn::{Op, ParamSet, Sequential, Tensor};

pub const PRETRAINED_ENV: &str = "ASP_PRETRAINED_FEATURES";
pub const TINY_SEED: u64 = 0x7E47_F00D;
pub const TINY_WIDTHS: [usize; 4] = [16, 32, 64, 128];
pub const STAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Tiny,
    Pretrained,
}

impl std::str::FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tiny" => Ok(FeatureKind::Tiny),
            "pretrained" => Ok(FeatureKind::Pretrained),
            _ => Err(format!("unknown feature extractor `{s}` (expected tiny or pretrained)")),
        }
    }
}

/// Per-image output: the four stages (for PHV) and the pooled last stage
/// (for FID and KID).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub stages: Vec<FeatureMap>,
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub name: String,
    net: Sequential,
    params: ParamSet<f32>,
    /// Stage output boundaries in `net`.
    taps: Vec<usize>,
    /// Length of [`Features::pooled`].
    pub dim: usize,
}

fn stage_conv(params: &ParamSet<f32>, i: usize, cin: usize, cout: usize) -> Op {
    let weight = params.params.iter().position(|p| p.name == format!("stage{i}.weight")).expect("stage weight");
    let bias = params.params.iter().position(|p| p.name == format!("stage{i}.bias"));
    Op::Conv(Conv { weight, bias, cin, cout, k: 3, stride: 2, pad: 1 })
}

impl FeatureExtractor {
    fn from_params(name: String, params: ParamSet<f32>, widths: &[usize]) -> Self {
        let mut ops = Vec::new();
        let mut taps = Vec::new();
        let mut cin = 3;
        for (i, &cout) in widths.iter().enumerate() {
            ops.push(stage_conv(&params, i, cin, cout));
            ops.push(Op::Relu);
            taps.push(ops.len());
            cin = cout;
        }
        Self { name, net: Sequential { ops }, params, taps, dim: cin }
    }

    /// The fixed-seed random extractor (identical on every run).
    pub fn tiny() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(TINY_SEED);
        let mut params = ParamSet::new();
        let mut cin = 3;
        for (i, &cout) in TINY_WIDTHS.iter().enumerate() {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            params.push_normal(format!("stage{i}.weight"), vec![cout, cin, 3, 3], std, &mut rng);
            params.push_zeros(format!("stage{i}.bias"), vec![cout]);
            cin = cout;
        }
        Self::from_params("tiny_random_conv".into(), params, &TINY_WIDTHS)
    }

    pub fn load_pretrained(path: &Path) -> Result<Self, String> {
        let buf = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file = SafeTensors::deserialize(&buf).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut params = ParamSet::new();
        let mut widths = Vec::new();
        let mut cin = 3;
        for i in 0..STAGES {
            let read = |name: &str| -> Result<(Vec<usize>, Vec<f32>), String> {
                let v = file.tensor(name).map_err(|_| format!("missing tensor `{name}`"))?;
                if v.dtype() != Dtype::F32 {
                    return Err(format!("tensor `{name}` is {:?}, expected F32", v.dtype()));
                }
                let data = v.data().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                Ok((v.shape().to_vec(), data))
            };
            let (shape, data) = read(&format!("stage{i}.weight"))?;
            if shape.len() != 4 || shape[1] != cin || shape[2] != 3 || shape[3] != 3 {
                return Err(format!("stage{i}.weight has shape {shape:?}, expected [cout, {cin}, 3, 3]"));
            }
            let cout = shape[0];
            params.push(format!("stage{i}.weight"), shape, data);
            let (bshape, bias) = read(&format!("stage{i}.bias"))?;
            if bshape != [cout] {
                return Err(format!("stage{i}.bias has shape {bshape:?}, expected [{cout}]"));
            }
            params.push(format!("stage{i}.bias"), bshape, bias);
            widths.push(cout);
            cin = cout;
        }
        Ok(Self::from_params(format!("pretrained:{}", path.display()), params, &widths))
    }

    /// The requested extractor. A missing or unreadable pretrained file falls
    /// back to [`FeatureExtractor::tiny`] with a warning.
    pub fn select(kind: FeatureKind) -> Self {
        if kind == FeatureKind::Tiny {
            return Self::tiny();
        }
        match std::env::var_os(PRETRAINED_ENV) {
            None => log::warn!("{PRETRAINED_ENV} is not set; using tiny_random_conv features"),
            Some(path) => match Self::load_pretrained(Path::new(&path)) {
                Ok(x) => return x,
                Err(e) => log::warn!("pretrained features unavailable ({e}); using tiny_random_conv features"),
            },
        }
        Self::tiny()
    }

    /// Smallest accepted side length.
    pub fn min_side(&self) -> usize {
        1 << STAGES
    }

    pub fn extract(&self, image: &Image) -> Result<Features, String> {
        if image.channels() != 3 || image.height() < self.min_side() || image.width() < self.min_side() {
            return Err(format!("feature extractor needs RGB images of at least {0}x{0}, got {1:?}", self.min_side(), image.shape()));
        }
        let x = Tensor::<f32>::from_image(image);
        let run = self.net.run(&self.params, &x, self.net.ops.len(), &self.taps, false);
        let pooled = {
            let last = run.taps.last().expect("four stages");
            let plane = last.plane();
            (0..last.c).map(|c| last.data[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>() / plane as f64).collect()
        };
        let stages =
            run.taps.into_iter().map(|t| FeatureMap::new(t.c, t.h, t.w, t.data).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        Ok(Features { stages, pooled })
    }
}
