use asp_core::adversarial::{adversarial_d_loss_with_grad, adversarial_g_loss_with_grad};
use asp_core::contrastive::{asp_weights, patch_nce_loss_with_grad, weighted_patch_loss_with_grad};
use asp_core::pyramid::gp_loss_planar;
use asp_core::sampling::{derive_seed, sample_locations};
use asp_core::schedule::lr_schedule;
use asp_core::EmbeddingStack;
use serde::{Deserialize, Serialize};

use super::{ModelParams, Models, TrainError, TrainState};
use crate::config::{Config, Seeds};
use crate::data::PairedSample;
use crate::networks::{Discriminator, GeneratorSpec};
use crate::nn::{Adam, Cache, ParamSet, Scalar, Tensor};

/// Version of the [`LossReport`] record layout.
pub const LOG_SCHEMA: u32 = 1;

/// Unweighted loss terms of the generator objective and their weighted sum.
/// Terms whose weight is zero are not evaluated and read 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub adv_g: f64,
    pub patchnce: f64,
    pub asp: f64,
    pub gp: f64,
    pub total_g: f64,
}

/// Min / mean / max of the raw (unnormalized) adaptive weights of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub layer: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub schema: u32,
    /// The step index `t` (0-based) that produced this record.
    pub iter: u64,
    pub pair_id: String,
    pub lr: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub patchnce: f64,
    pub asp: f64,
    pub gp: f64,
    pub total_g: f64,
    pub weights: Vec<WeightSummary>,
}

/// What gets written when a step produces a non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortDump {
    pub iter: u64,
    pub pair_id: String,
    pub reason: String,
    pub seeds: Seeds,
    pub lr: f64,
    pub adv_d: Option<f64>,
    pub terms: Option<Terms>,
    /// `[min, max, mean]` of the H&E and IHC crops.
    pub he_stats: [f64; 3],
    pub ihc_stats: [f64; 3],
    #[serde(skip)]
    pub pair: Option<PairedSample>,
}

/// Output of the generator's forward pass on `x`.
#[derive(Debug, Clone)]
pub struct GeneratorPass<T> {
    pub fake: Tensor<T>,
    /// Encoder activations of `x` at the configured taps (empty if not requested).
    pub x_taps: Vec<Tensor<T>>,
    pub caches: Vec<Cache<T>>,
}

/// Quantities the generator gradient treats as constants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frozen {
    pub locations: Vec<Vec<usize>>,
    pub keys_x: Option<EmbeddingStack>,
    pub keys_y: Option<EmbeddingStack>,
    pub raw_weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub terms: Terms,
    pub grads_g: ParamSet<T>,
    pub grads_f: ParamSet<T>,
    pub frozen: Frozen,
    /// Output-side embeddings, when a contrastive term is active.
    pub queries: Option<EmbeddingStack>,
}

pub fn generator_pass<T: Scalar>(
    models: &Models,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    with_taps: bool,
) -> Result<GeneratorPass<T>, TrainError> {
    let g = &models.generator;
    let taps: &[usize] = if with_taps { &g.spec.taps } else { &[] };
    let (fake, x_taps, caches) = g.forward_cached(params, x, taps)?;
    Ok(GeneratorPass { fake, x_taps, caches })
}

/// Locations shared by every embedding of step `t`, one set per tap.
pub fn sample_tap_locations(
    spec: &GeneratorSpec,
    height: usize,
    width: usize,
    count: usize,
    location_seed: u64,
    t: u64,
) -> Result<Vec<Vec<usize>>, TrainError> {
    let step_seed = derive_seed(location_seed, t);
    spec.taps
        .iter()
        .enumerate()
        .map(|(l, &id)| {
            let s = spec.tap_stride(id);
            let (gh, gw) = (height / s, width / s);
            Ok(sample_locations(gh, gw, count.min(gh * gw), derive_seed(step_seed, l as u64))?)
        })
        .collect()
}

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data.iter().map(|v| v.f64()).collect()
}

fn tensor_like<T: Scalar>(shape: &Tensor<T>, values: &[f64], scale: f64) -> Tensor<T> {
    Tensor::from_vec(shape.c, shape.h, shape.w, values.iter().map(|&v| T::of(scale * v)).collect())
}

fn chw_to_hwc<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    let plane = t.plane();
    let mut out = vec![0.0; t.data.len()];
    for c in 0..t.c {
        for p in 0..plane {
            out[p * t.c + c] = t.data[c * plane + p].f64();
        }
    }
    out
}

fn hwc_to_chw<T: Scalar>(c: usize, h: usize, w: usize, data: &[f64], scale: f64) -> Tensor<T> {
    let plane = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for p in 0..plane {
            out.data[ch * plane + p] = T::of(scale * data[p * c + ch]);
        }
    }
    out
}

fn accumulate(rows: &mut [Vec<f64>], grads: &[Vec<f64>], scale: f64) {
    for (r, g) in rows.iter_mut().zip(grads) {
        r.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
    }
}

/// The generator objective and its gradients for G and the projector.
///
/// `pass` must come from [`generator_pass`] on `x` with the same generator
/// parameters (with taps when PatchNCE is active). With `frozen`, sampled
/// locations, keys and adaptive weights are taken from it instead of being
/// recomputed, so the value is a smooth function of the generator parameters
/// alone.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective<T: Scalar>(
    models: &Models,
    params: &ModelParams<T>,
    cfg: &Config,
    t: u64,
    x: &Tensor<T>,
    y: &Tensor<T>,
    pass: GeneratorPass<T>,
    location_seed: u64,
    frozen: Option<&Frozen>,
) -> Result<Objective<T>, TrainError> {
    let g = &models.generator;
    let fake = &pass.fake;
    let mut grads_g = params.g.zeros_like();
    let mut grads_f = params.f.zeros_like();
    let mut dfake = Tensor::<T>::zeros(fake.c, fake.h, fake.w);
    let mut terms = Terms::default();

    if cfg.lambda_adv > 0.0 {
        let (logits, caches) = models.discriminator.forward_cached(&params.d, fake)?;
        let (value, grad) = adversarial_g_loss_with_grad(&to_f64(&logits))?;
        terms.adv_g = value;
        // Discriminator gradients from the generator step are discarded.
        let mut scratch = params.d.zeros_like();
        let dl = tensor_like(&logits, &grad, cfg.lambda_adv);
        let dx = models.discriminator.backward(&params.d, &caches, dl, &mut scratch, true).expect("input gradient requested");
        dfake.add_assign(&dx);
    }

    if cfg.lambda_gp > 0.0 {
        let (value, grad) = gp_loss_planar(fake.h, fake.w, fake.c, &chw_to_hwc(fake), &chw_to_hwc(y), &cfg.pyramid())?;
        terms.gp = value;
        dfake.add_assign(&hwc_to_chw(fake.c, fake.h, fake.w, &grad, cfg.lambda_gp));
    }

    let mut frozen_out = Frozen::default();
    let mut queries_out = None;
    if cfg.lambda_patchnce > 0.0 || cfg.lambda_asp > 0.0 {
        let taps = &g.spec.taps;
        let ids = taps.clone();
        let contrastive = cfg.contrastive();
        let (locations, keys_x, keys_y) = match frozen {
            Some(f) => (f.locations.clone(), f.keys_x.clone(), f.keys_y.clone()),
            None => {
                let locations = sample_tap_locations(&g.spec, x.h, x.w, cfg.num_locations, location_seed, t)?;
                let keys_x = if cfg.lambda_patchnce > 0.0 {
                    if pass.x_taps.len() != taps.len() {
                        return Err(TrainError::Config(crate::config::ConfigError::Invalid(
                            "PatchNCE needs the input taps from the generator pass".into(),
                        )));
                    }
                    Some(models.projector.forward(&params.f, &pass.x_taps, &locations, &ids)?.0)
                } else {
                    None
                };
                let keys_y = if cfg.lambda_asp > 0.0 {
                    let (y_taps, _) = g.encode(&params.g, y, taps, false)?;
                    Some(models.projector.forward(&params.f, &y_taps, &locations, &ids)?.0)
                } else {
                    None
                };
                (locations, keys_x, keys_y)
            }
        };
        let (q_taps, encode_caches) = g.encode(&params.g, fake, taps, true)?;
        let (queries, proj_cache) = models.projector.forward(&params.f, &q_taps, &locations, &ids)?;
        let mut rows: Vec<Vec<f64>> = queries.layers().iter().map(|l| vec![0.0; l.data().len()]).collect();
        if let Some(kx) = &keys_x {
            let loss = patch_nce_loss_with_grad(&queries, kx, &contrastive)?;
            terms.patchnce = loss.value;
            accumulate(&mut rows, &loss.grad_anchors, cfg.lambda_patchnce);
        }
        let mut raw_weights = None;
        if let Some(ky) = &keys_y {
            let adaptive = cfg.adaptive_at(t)?;
            let raw = match frozen.and_then(|f| f.raw_weights.clone()) {
                Some(w) => w,
                None => asp_weights(&queries, ky, &adaptive)?,
            };
            let loss = weighted_patch_loss_with_grad(&queries, ky, &contrastive, &raw, adaptive.normalization)?;
            terms.asp = loss.value;
            accumulate(&mut rows, &loss.grad_anchors, cfg.lambda_asp);
            raw_weights = Some(raw);
        }
        let tap_grads = models.projector.backward(&params.f, &proj_cache, &rows, &mut grads_f);
        let dx = g.encode_backward(&params.g, &encode_caches, taps, &tap_grads, &mut grads_g)?;
        dfake.add_assign(&dx);
        frozen_out = Frozen { locations, keys_x, keys_y, raw_weights };
        queries_out = Some(queries);
    }

    g.backward(&params.g, &pass.caches, dfake, &mut grads_g);
    terms.total_g =
        cfg.lambda_adv * terms.adv_g + cfg.lambda_patchnce * terms.patchnce + cfg.lambda_asp * terms.asp + cfg.lambda_gp * terms.gp;
    Ok(Objective { terms, grads_g, grads_f, frozen: frozen_out, queries: queries_out })
}

fn discriminator_step(
    d: &Discriminator,
    params: &mut ParamSet<f32>,
    opt: &mut Adam,
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    lr: f64,
) -> Result<f64, TrainError> {
    let (real_logits, real_caches) = d.forward_cached(params, real)?;
    let (fake_logits, fake_caches) = d.forward_cached(params, fake)?;
    let loss = adversarial_d_loss_with_grad(&to_f64(&real_logits), &to_f64(&fake_logits))?;
    let mut grads = params.zeros_like();
    d.backward(params, &real_caches, tensor_like(&real_logits, &loss.grad_real, 1.0), &mut grads, false);
    d.backward(params, &fake_caches, tensor_like(&fake_logits, &loss.grad_fake, 1.0), &mut grads, false);
    opt.update(params, &grads, lr);
    Ok(loss.value)
}

fn stats(data: &[f32]) -> [f64; 3] {
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in data {
        let v = v as f64;
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    [lo, hi, sum / data.len().max(1) as f64]
}

fn summarize(layers: &EmbeddingStack, raw: &[Vec<f64>]) -> Vec<WeightSummary> {
    layers
        .layers()
        .iter()
        .zip(raw)
        .map(|(l, w)| WeightSummary {
            layer: l.layer_id(),
            min: w.iter().copied().fold(f64::INFINITY, f64::min),
            mean: w.iter().sum::<f64>() / w.len() as f64,
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// One discriminator update followed by one generator/projector update at
/// `t = state.iter`. `pair` must already be cropped.
pub fn train_step(state: &mut TrainState, pair: &PairedSample) -> Result<LossReport, TrainError> {
    let t = state.iter;
    let cfg = &state.config;
    let seeds = cfg.seeds();
    let lr = lr_schedule(t, cfg.total_iters, cfg.learning_rate);
    let mut dump = AbortDump {
        iter: t,
        pair_id: pair.sample_id.clone(),
        reason: String::new(),
        seeds,
        lr,
        adv_d: None,
        terms: None,
        he_stats: stats(pair.he_image.data()),
        ihc_stats: stats(pair.ihc_image.data()),
        pair: Some(pair.clone()),
    };
    let abort = |mut dump: AbortDump, reason: String| {
        dump.reason = reason;
        TrainError::Numeric(Box::new(dump))
    };
    let numeric = |dump: &AbortDump, e: TrainError| match e {
        TrainError::Core(asp_core::Error::Numeric(what)) => abort(dump.clone(), format!("non-finite {what}")),
        other => other,
    };

    let x = Tensor::<f32>::from_image(&pair.he_image);
    let y = Tensor::<f32>::from_image(&pair.ihc_image);
    let pass = generator_pass(&state.models, &state.params.g, &x, cfg.lambda_patchnce > 0.0)?;
    if !pass.fake.is_finite() {
        return Err(abort(dump, "non-finite generator output".into()));
    }
    let adv_d = discriminator_step(&state.models.discriminator, &mut state.params.d, &mut state.opt_d, &y, &pass.fake, lr)
        .map_err(|e| numeric(&dump, e))?;
    dump.adv_d = Some(adv_d);
    if !adv_d.is_finite() || !state.params.d.all_finite() {
        return Err(abort(dump, "non-finite discriminator update".into()));
    }
    let objective =
        generator_objective(&state.models, &state.params, cfg, t, &x, &y, pass, seeds.location, None).map_err(|e| numeric(&dump, e))?;
    let terms = objective.terms;
    dump.terms = Some(terms);
    if ![terms.adv_g, terms.patchnce, terms.asp, terms.gp, terms.total_g].iter().all(|v| v.is_finite()) {
        return Err(abort(dump, "non-finite generator loss".into()));
    }
    state.opt_g.update(&mut state.params.g, &objective.grads_g, lr);
    state.opt_f.update(&mut state.params.f, &objective.grads_f, lr);
    if !state.params.g.all_finite() || !state.params.f.all_finite() {
        return Err(abort(dump, "non-finite generator or projector parameters".into()));
    }
    let weights = match (&objective.frozen.keys_y, &objective.frozen.raw_weights) {
        (Some(keys), Some(raw)) => summarize(keys, raw),
        _ => Vec::new(),
    };
    state.iter += 1;
    Ok(LossReport {
        schema: LOG_SCHEMA,
        iter: t,
        pair_id: pair.sample_id.clone(),
        lr,
        adv_g: terms.adv_g,
        adv_d,
        patchnce: terms.patchnce,
        asp: terms.asp,
        gp: terms.gp,
        total_g: terms.total_g,
        weights,
    })
}
