//! InfoNCE and its patch-level forms.
//!
//! Every patch loss shares one layer kernel: for anchors `q_s` and keys `k_j`
//! of one layer, location `s` contributes
//! `-log softmax_j(q_s . k_j / tau)[s]`, i.e. the key at the same location is
//! the positive and the other `S_l - 1` sampled keys are the negatives. The
//! layer value is a coefficient-weighted sum of these terms and the stack
//! value is the mean over layers.
//!
//! * PatchNCE: keys from the input image, coefficients `1 / S_l`.
//! * SP: keys from the groundtruth image, coefficients `1 / S_l`.
//! * ASP: keys from the groundtruth image, coefficients `w^{l,s} / W^l`, with
//!   the scheduled weights treated as constants.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveConfig, WeightNormalization};
use crate::embedding::{dot, norm, EmbeddingStack};
use crate::error::{Error, Result};

/// Temperature and sampling budget of the contrastive objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// `tau`.
    pub temperature: f64,
    /// Upper bound on `N`; patch losses use every other sampled location.
    pub negatives_per_anchor: usize,
    /// Locations sampled per layer.
    pub num_locations: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self::new(0.07, 256)
    }
}

impl ContrastiveConfig {
    /// Config with `N = num_locations - 1`.
    pub fn new(temperature: f64, num_locations: usize) -> Self {
        Self { temperature, negatives_per_anchor: num_locations.saturating_sub(1).max(1), num_locations }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.negatives_per_anchor == 0 {
            return Err(Error::Config("negatives_per_anchor must be at least 1".into()));
        }
        if self.num_locations < 2 {
            return Err(Error::Config("num_locations must be at least 2".into()));
        }
        if self.negatives_per_anchor > self.num_locations - 1 {
            return Err(Error::Config(format!(
                "negatives_per_anchor {} exceeds num_locations - 1 = {}",
                self.negatives_per_anchor,
                self.num_locations - 1
            )));
        }
        Ok(())
    }
}

/// Value and gradients of a single InfoNCE term.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrad {
    pub value: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    /// Row-major `N x D`, matching the `negatives` argument.
    pub negatives: Vec<f64>,
}

fn check_info_nce_inputs(anchor: &[f64], positive: &[f64], negatives: &[f64], cfg: &ContrastiveConfig) -> Result<usize> {
    if !(cfg.temperature > 0.0 && cfg.temperature.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {}", cfg.temperature)));
    }
    let d = anchor.len();
    if d == 0 || positive.len() != d {
        return Err(Error::Shape(format!("anchor has dimension {d}, positive has {}", positive.len())));
    }
    if negatives.is_empty() {
        return Err(Error::Config("InfoNCE needs at least one negative".into()));
    }
    if !negatives.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("{} negative values is not a multiple of dimension {d}", negatives.len())));
    }
    let n = negatives.len() / d;
    if n > cfg.negatives_per_anchor {
        return Err(Error::Config(format!("{n} negatives exceed negatives_per_anchor = {}", cfg.negatives_per_anchor)));
    }
    let zero = |v: &[f64]| {
        let n = norm(v);
        !n.is_finite() || n < 1e-12
    };
    if zero(anchor) || zero(positive) || negatives.chunks(d).any(zero) {
        return Err(Error::InvalidEmbedding("zero-norm or non-finite vector".into()));
    }
    Ok(n)
}

/// `-log[exp(v.v+/tau) / (exp(v.v+/tau) + sum_n exp(v.v-_n/tau))]`.
///
/// `negatives` is a row-major `N x D` matrix.
pub fn info_nce(anchor: &[f64], positive: &[f64], negatives: &[f64], cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(info_nce_with_grad(anchor, positive, negatives, cfg)?.value)
}

/// [`info_nce`] together with its gradient with respect to every input.
pub fn info_nce_with_grad(anchor: &[f64], positive: &[f64], negatives: &[f64], cfg: &ContrastiveConfig) -> Result<InfoNceGrad> {
    let n = check_info_nce_inputs(anchor, positive, negatives, cfg)?;
    let d = anchor.len();
    let tau = cfg.temperature;

    let mut logits = Vec::with_capacity(n + 1);
    logits.push(dot(anchor, positive) / tau);
    logits.extend(negatives.chunks(d).map(|neg| dot(anchor, neg) / tau));
    let (lse, probs) = log_softmax_parts(&logits);
    let value = lse - logits[0];

    // dL/dlogit_0 = p_0 - 1, dL/dlogit_n = p_n.
    let mut g_anchor = vec![0.0; d];
    let g0 = (probs[0] - 1.0) / tau;
    let g_positive: Vec<f64> = anchor.iter().map(|a| g0 * a).collect();
    axpy(&mut g_anchor, g0, positive);
    let mut g_negatives = vec![0.0; negatives.len()];
    for (i, neg) in negatives.chunks(d).enumerate() {
        let gi = probs[i + 1] / tau;
        axpy(&mut g_anchor, gi, neg);
        axpy(&mut g_negatives[i * d..(i + 1) * d], gi, anchor);
    }
    if !value.is_finite() {
        return Err(Error::Numeric("info_nce"));
    }
    Ok(InfoNceGrad { value, anchor: g_anchor, positive: g_positive, negatives: g_negatives })
}

/// Value and gradients of a layer-weighted patch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLoss {
    /// `sum_s coefficient_s * InfoNCE_s`.
    pub value: f64,
    /// Unweighted InfoNCE value at every location.
    pub per_location: Vec<f64>,
    /// Gradient with respect to the `S x D` anchor matrix.
    pub grad_queries: Vec<f64>,
    /// Gradient with respect to the `S x D` key matrix.
    pub grad_keys: Vec<f64>,
}

/// Layer kernel on raw row-major `S x D` matrices.
///
/// The positive of anchor `s` is key `s`; all other keys are its negatives.
/// No unit-norm check is made, which lets finite-difference audits perturb
/// inputs freely.
pub fn weighted_layer_loss(queries: &[f64], keys: &[f64], dim: usize, temperature: f64, coefficients: &[f64]) -> Result<LayerLoss> {
    let s_count = coefficients.len();
    if dim == 0 || queries.len() != s_count * dim || keys.len() != s_count * dim {
        return Err(Error::Shape(format!(
            "expected {s_count} rows of dimension {dim}, got {} queries and {} keys",
            queries.len(),
            keys.len()
        )));
    }
    if s_count < 2 {
        return Err(Error::Config("patch losses need at least two locations".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let tau = temperature;
    let mut per_location = Vec::with_capacity(s_count);
    let mut value = 0.0;
    let mut grad_queries = vec![0.0; queries.len()];
    let mut grad_keys = vec![0.0; keys.len()];
    let mut logits = vec![0.0; s_count];
    for s in 0..s_count {
        let q = &queries[s * dim..(s + 1) * dim];
        for (j, k) in keys.chunks(dim).enumerate() {
            logits[j] = dot(q, k) / tau;
        }
        let (lse, probs) = log_softmax_parts(&logits);
        let term = lse - logits[s];
        per_location.push(term);
        let c = coefficients[s];
        value += c * term;
        if c == 0.0 {
            continue;
        }
        let gq = &mut grad_queries[s * dim..(s + 1) * dim];
        for j in 0..s_count {
            let g = c * (probs[j] - if j == s { 1.0 } else { 0.0 }) / tau;
            if g == 0.0 {
                continue;
            }
            axpy(gq, g, &keys[j * dim..(j + 1) * dim]);
            axpy(&mut grad_keys[j * dim..(j + 1) * dim], g, q);
        }
    }
    if !value.is_finite() {
        return Err(Error::Numeric("patch contrastive loss"));
    }
    Ok(LayerLoss { value, per_location, grad_queries, grad_keys })
}

/// Value and gradients of a stack-level patch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct StackLoss {
    /// Mean over layers of the per-layer weighted sums.
    pub value: f64,
    /// Per-layer weighted sums (before the mean over layers).
    pub layer_values: Vec<f64>,
    /// Per-layer, per-location InfoNCE values.
    pub per_location: Vec<Vec<f64>>,
    /// Per-layer coefficients applied to `per_location`.
    pub coefficients: Vec<Vec<f64>>,
    /// Gradient with respect to each layer's anchor matrix.
    pub grad_anchors: Vec<Vec<f64>>,
    /// Gradient with respect to each layer's key matrix (positives and negatives).
    pub grad_keys: Vec<Vec<f64>>,
}

fn check_stacks(anchors: &EmbeddingStack, keys: &EmbeddingStack, cfg: &ContrastiveConfig) -> Result<()> {
    cfg.validate()?;
    anchors.check_aligned(keys)?;
    for layer in anchors.layers() {
        if layer.len() - 1 > cfg.negatives_per_anchor {
            return Err(Error::Config(format!(
                "layer {} has {} locations, needing {} negatives but negatives_per_anchor = {}",
                layer.layer_id(),
                layer.len(),
                layer.len() - 1,
                cfg.negatives_per_anchor
            )));
        }
    }
    Ok(())
}

fn stack_loss(anchors: &EmbeddingStack, keys: &EmbeddingStack, cfg: &ContrastiveConfig, coefficients: Vec<Vec<f64>>) -> Result<StackLoss> {
    let num_layers = anchors.num_layers() as f64;
    let mut out = StackLoss {
        value: 0.0,
        layer_values: Vec::new(),
        per_location: Vec::new(),
        coefficients: Vec::new(),
        grad_anchors: Vec::new(),
        grad_keys: Vec::new(),
    };
    for ((a, k), coeffs) in anchors.layers().iter().zip(keys.layers()).zip(coefficients) {
        let mut layer = weighted_layer_loss(a.data(), k.data(), a.dim(), cfg.temperature, &coeffs)?;
        out.value += layer.value / num_layers;
        out.layer_values.push(layer.value);
        layer.grad_queries.iter_mut().for_each(|g| *g /= num_layers);
        layer.grad_keys.iter_mut().for_each(|g| *g /= num_layers);
        out.per_location.push(layer.per_location);
        out.coefficients.push(coeffs);
        out.grad_anchors.push(layer.grad_queries);
        out.grad_keys.push(layer.grad_keys);
    }
    Ok(out)
}

fn uniform_coefficients(stack: &EmbeddingStack) -> Vec<Vec<f64>> {
    stack.layers().iter().map(|l| vec![1.0 / l.len() as f64; l.len()]).collect()
}

/// PatchNCE: anchors from the output image, keys from the input image.
pub fn patch_nce_loss(output: &EmbeddingStack, input: &EmbeddingStack, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(patch_nce_loss_with_grad(output, input, cfg)?.value)
}

pub fn patch_nce_loss_with_grad(output: &EmbeddingStack, input: &EmbeddingStack, cfg: &ContrastiveConfig) -> Result<StackLoss> {
    check_stacks(output, input, cfg)?;
    stack_loss(output, input, cfg, uniform_coefficients(output))
}

/// Supervised PatchNCE: anchors from the output image, keys from the groundtruth.
pub fn sp_loss(output: &EmbeddingStack, groundtruth: &EmbeddingStack, cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(sp_loss_with_grad(output, groundtruth, cfg)?.value)
}

pub fn sp_loss_with_grad(output: &EmbeddingStack, groundtruth: &EmbeddingStack, cfg: &ContrastiveConfig) -> Result<StackLoss> {
    check_stacks(output, groundtruth, cfg)?;
    stack_loss(output, groundtruth, cfg, uniform_coefficients(output))
}

/// Raw scheduled weights `w_t^{l,s}` for every layer and location.
pub fn asp_weights(output: &EmbeddingStack, groundtruth: &EmbeddingStack, adaptive: &AdaptiveConfig) -> Result<Vec<Vec<f64>>> {
    output.check_aligned(groundtruth)?;
    adaptive.validate()?;
    let g = adaptive.schedule_value()?;
    output
        .layers()
        .iter()
        .zip(groundtruth.layers())
        .map(|(a, k)| {
            (0..a.len())
                .map(|s| {
                    let h = adaptive.weight_family.weight(dot(a.row(s), k.row(s)))?;
                    Ok(crate::adaptive::mix(g, h))
                })
                .collect()
        })
        .collect()
}

/// Turns raw weights into per-location coefficients `w / W` (or `S w / W`).
pub fn normalize_weights(
    raw: &[Vec<f64>],
    layer_ids: impl IntoIterator<Item = usize>,
    normalization: WeightNormalization,
) -> Result<Vec<Vec<f64>>> {
    raw.iter()
        .zip(layer_ids)
        .map(|(w, layer)| {
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateWeights { layer });
            }
            let scale = match normalization {
                WeightNormalization::SumToOne => 1.0,
                WeightNormalization::MeanToOne => w.len() as f64,
            };
            // Equal weights are exactly uniform; dividing by a rounded sum
            // would not reproduce 1 / S bit for bit.
            if w.iter().all(|&x| x == w[0]) {
                return Ok(vec![scale / w.len() as f64; w.len()]);
            }
            Ok(w.iter().map(|x| scale * x / total).collect())
        })
        .collect()
}

/// Patch loss with caller-supplied raw weights, which are held constant.
pub fn weighted_patch_loss_with_grad(
    output: &EmbeddingStack,
    keys: &EmbeddingStack,
    cfg: &ContrastiveConfig,
    raw_weights: &[Vec<f64>],
    normalization: WeightNormalization,
) -> Result<StackLoss> {
    check_stacks(output, keys, cfg)?;
    if raw_weights.len() != output.num_layers() || raw_weights.iter().zip(output.layers()).any(|(w, l)| w.len() != l.len()) {
        return Err(Error::Shape("weights do not match the stack layout".into()));
    }
    let coeffs = normalize_weights(raw_weights, output.layers().iter().map(|l| l.layer_id()), normalization)?;
    stack_loss(output, keys, cfg, coeffs)
}

/// Adaptive supervised PatchNCE.
pub fn asp_loss(output: &EmbeddingStack, groundtruth: &EmbeddingStack, cfg: &ContrastiveConfig, adaptive: &AdaptiveConfig) -> Result<f64> {
    Ok(asp_loss_with_grad(output, groundtruth, cfg, adaptive)?.value)
}

/// [`asp_loss`] with gradients; the weights receive no gradient.
pub fn asp_loss_with_grad(
    output: &EmbeddingStack,
    groundtruth: &EmbeddingStack,
    cfg: &ContrastiveConfig,
    adaptive: &AdaptiveConfig,
) -> Result<StackLoss> {
    check_stacks(output, groundtruth, cfg)?;
    let raw = asp_weights(output, groundtruth, adaptive)?;
    weighted_patch_loss_with_grad(output, groundtruth, cfg, &raw, adaptive.normalization)
}

/// Returns `(logsumexp(x), softmax(x))`.
fn log_softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    (max + libm::log(sum), probs)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}
