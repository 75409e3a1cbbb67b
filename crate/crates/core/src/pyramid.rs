//! Gaussian-pyramid reconstruction loss.
//!
//! Level 0 is the image itself; level `k` is level `k - 1` blurred with the
//! separable 5x5 binomial kernel (reflect-101 borders) and decimated by 2.
//! The loss is `sum_k weight_k * mean |a_k - b_k|`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub levels: usize,
    pub level_weights: Vec<f64>,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self::uniform(3)
    }
}

impl PyramidConfig {
    /// `levels` levels with unit weights.
    pub fn uniform(levels: usize) -> Self {
        Self { levels, level_weights: vec![1.0; levels] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("pyramid needs at least one level".into()));
        }
        if self.level_weights.len() != self.levels {
            return Err(Error::Config(format!("{} level weights for {} levels", self.level_weights.len(), self.levels)));
        }
        if self.level_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("pyramid level weights must be positive".into()));
        }
        Ok(())
    }

    fn check_image(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if self.levels == 1 {
            return Ok(());
        }
        let factor = 1usize << (self.levels - 1);
        if !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
            return Err(Error::Shape(format!(
                "{height}x{width} is not divisible by 2^{} for a {}-level pyramid",
                self.levels - 1,
                self.levels
            )));
        }
        let min_side = height.min(width);
        let max_levels = (usize::BITS - 1 - min_side.leading_zeros()) as usize;
        if self.levels + 2 > max_levels {
            return Err(Error::Shape(format!(
                "{} levels is too deep for a {height}x{width} image (at most log2(min side) - 2)",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_image(img: &Image) -> Self {
        Self { h: img.height(), w: img.width(), c: img.channels(), data: img.data().iter().map(|&v| v as f64).collect() }
    }

    fn to_image(&self) -> Image {
        Image::new(self.h, self.w, self.c, self.data.iter().map(|&v| v as f32).collect()).expect("plane dimensions are consistent")
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Blur then keep every other row and column.
fn downsample(p: &Plane) -> Plane {
    let (h, w, c) = (p.h, p.w, p.c);
    let (oh, ow) = (h / 2, w / 2);
    // Horizontal pass evaluated only at even columns.
    let mut tmp = vec![0.0; h * ow * c];
    for y in 0..h {
        for ox in 0..ow {
            let x = 2 * ox as isize;
            for (t, k) in BINOMIAL.iter().enumerate() {
                let sx = reflect(x + t as isize - 2, w);
                let src = (y * w + sx) * c;
                let dst = (y * ow + ox) * c;
                for ch in 0..c {
                    tmp[dst + ch] += k * p.data[src + ch];
                }
            }
        }
    }
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        let y = 2 * oy as isize;
        for (t, k) in BINOMIAL.iter().enumerate() {
            let sy = reflect(y + t as isize - 2, h);
            for ox in 0..ow {
                let src = (sy * ow + ox) * c;
                let dst = (oy * ow + ox) * c;
                for ch in 0..c {
                    out[dst + ch] += k * tmp[src + ch];
                }
            }
        }
    }
    Plane { h: oh, w: ow, c, data: out }
}

/// Adjoint of [`downsample`] for a level of size `h x w`.
fn downsample_adjoint(g: &Plane, h: usize, w: usize) -> Plane {
    let c = g.c;
    let (oh, ow) = (g.h, g.w);
    let mut tmp = vec![0.0; h * ow * c];
    for oy in 0..oh {
        let y = 2 * oy as isize;
        for (t, k) in BINOMIAL.iter().enumerate() {
            let sy = reflect(y + t as isize - 2, h);
            for ox in 0..ow {
                let src = (oy * ow + ox) * c;
                let dst = (sy * ow + ox) * c;
                for ch in 0..c {
                    tmp[dst + ch] += k * g.data[src + ch];
                }
            }
        }
    }
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for ox in 0..ow {
            let x = 2 * ox as isize;
            for (t, k) in BINOMIAL.iter().enumerate() {
                let sx = reflect(x + t as isize - 2, w);
                let src = (y * ow + ox) * c;
                let dst = (y * w + sx) * c;
                for ch in 0..c {
                    out[dst + ch] += k * tmp[src + ch];
                }
            }
        }
    }
    Plane { h, w, c, data: out }
}

fn build(img: &Image, levels: usize) -> Vec<Plane> {
    build_plane(Plane::from_image(img), levels)
}

fn build_plane(base: Plane, levels: usize) -> Vec<Plane> {
    let mut out = Vec::with_capacity(levels);
    out.push(base);
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// The pyramid levels of `image`, finest first.
pub fn gaussian_pyramid(image: &Image, cfg: &PyramidConfig) -> Result<Vec<Image>> {
    cfg.check_image(image.height(), image.width())?;
    Ok(build(image, cfg.levels).iter().map(Plane::to_image).collect())
}

/// Weighted sum over levels of the mean absolute difference.
pub fn gp_loss(generated: &Image, groundtruth: &Image, cfg: &PyramidConfig) -> Result<f64> {
    Ok(gp_loss_with_grad(generated, groundtruth, cfg)?.0)
}

/// [`gp_loss`] and its (sub)gradient with respect to `generated`, laid out like
/// the image data.
pub fn gp_loss_with_grad(generated: &Image, groundtruth: &Image, cfg: &PyramidConfig) -> Result<(f64, Vec<f64>)> {
    generated.check_same_shape(groundtruth)?;
    let (h, w, c) = generated.shape();
    let widen = |img: &Image| img.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
    gp_loss_planar(h, w, c, &widen(generated), &widen(groundtruth), cfg)
}

/// [`gp_loss_with_grad`] on interleaved `f64` buffers of shape `height x width x channels`.
pub fn gp_loss_planar(
    height: usize,
    width: usize,
    channels: usize,
    generated: &[f64],
    groundtruth: &[f64],
    cfg: &PyramidConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = height * width * channels;
    if generated.len() != n || groundtruth.len() != n || n == 0 {
        return Err(Error::Shape(format!("expected {n} values, got {} and {}", generated.len(), groundtruth.len())));
    }
    cfg.check_image(height, width)?;
    let plane = |data: &[f64]| Plane { h: height, w: width, c: channels, data: data.to_vec() };
    let a = build_plane(plane(generated), cfg.levels);
    let b = build_plane(plane(groundtruth), cfg.levels);
    let mut value = 0.0;
    let mut level_grads = Vec::with_capacity(cfg.levels);
    for ((pa, pb), &weight) in a.iter().zip(&b).zip(&cfg.level_weights) {
        let n = pa.data.len() as f64;
        let mut sum = 0.0;
        let mut g = vec![0.0; pa.data.len()];
        for ((x, y), gi) in pa.data.iter().zip(&pb.data).zip(g.iter_mut()) {
            let d = x - y;
            sum += d.abs();
            *gi = weight * sign(d) / n;
        }
        value += weight * sum / n;
        level_grads.push(g);
    }
    // Accumulate from the coarsest level back to level 0.
    let mut acc: Option<Plane> = None;
    for k in (0..cfg.levels).rev() {
        let lvl = &a[k];
        let mut here = Plane { h: lvl.h, w: lvl.w, c: lvl.c, data: core::mem::take(&mut level_grads[k]) };
        if let Some(coarser) = acc.take() {
            let up = downsample_adjoint(&coarser, lvl.h, lvl.w);
            here.data.iter_mut().zip(&up.data).for_each(|(h, u)| *h += u);
        }
        acc = Some(here);
    }
    if !value.is_finite() {
        return Err(Error::Numeric("gp_loss"));
    }
    Ok((value, acc.expect("at least one level").data))
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}
