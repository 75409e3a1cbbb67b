use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generator_objective, generator_pass, Models, Terms, TrainError};
use crate::config::Config;
use crate::data::PairedSample;
use crate::nn::Tensor;

/// Analytic versus central-difference derivatives of the full generator
/// objective with respect to randomly chosen generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAudit {
    pub indices: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|analytic - numeric|_2 / |numeric|_2`.
    pub relative_error: f64,
    pub terms: Terms,
}

/// Runs in `f64` on freshly initialized networks. Keys, locations and
/// adaptive weights are frozen at their unperturbed values, matching the
/// detached quantities of the training gradient.
pub fn audit_generator_gradient(
    cfg: &Config,
    pair: &PairedSample,
    t: u64,
    num_params: usize,
    step: f64,
    seed: u64,
) -> Result<GradientAudit, TrainError> {
    let (models, params) = Models::build::<f64>(cfg, cfg.seeds().init)?;
    let x = Tensor::<f32>::from_image(&pair.he_image).cast::<f64>();
    let y = Tensor::<f32>::from_image(&pair.ihc_image).cast::<f64>();
    let with_taps = cfg.lambda_patchnce > 0.0;
    let location_seed = cfg.seeds().location;
    let pass = generator_pass(&models, &params.g, &x, with_taps)?;
    let base = generator_objective(&models, &params, cfg, t, &x, &y, pass, location_seed, None)?;

    let total = params.g.num_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..num_params).map(|_| rng.random_range(0..total)).collect();
    let mut probe = params.clone();
    let value_at = |probe: &mut super::ModelParams<f64>, i: usize, v: f64| -> Result<f64, TrainError> {
        probe.g.flat_set(i, v);
        let pass = generator_pass(&models, &probe.g, &x, with_taps)?;
        let out = generator_objective(&models, probe, cfg, t, &x, &y, pass, location_seed, Some(&base.frozen))?;
        Ok(out.terms.total_g)
    };
    let mut analytic = Vec::with_capacity(num_params);
    let mut numeric = Vec::with_capacity(num_params);
    for &i in &indices {
        let v = params.g.flat_get(i);
        let plus = value_at(&mut probe, i, v + step)?;
        let minus = value_at(&mut probe, i, v - step)?;
        probe.g.flat_set(i, v);
        numeric.push((plus - minus) / (2.0 * step));
        analytic.push(base.grads_g.flat_get(i));
    }
    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    Ok(GradientAudit { indices, analytic, numeric, relative_error: diff / scale.max(f64::MIN_POSITIVE), terms: base.terms })
}
