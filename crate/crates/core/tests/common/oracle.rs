// Loop-based reference implementations used to check the library.
//
// Every function here evaluates the defining formulas directly (no
// log-sum-exp, no shared kernels with the library), so agreement is
// meaningful evidence rather than a tautology.

#![allow(dead_code, clippy::needless_range_loop, clippy::manual_clamp)]

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `-log[exp(v.v+/t) / (exp(v.v+/t) + sum exp(v.v-/t))]`, written out verbatim.
pub fn info_nce(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], tau: f64) -> f64 {
    let pos = (dot(anchor, positive) / tau).exp();
    let mut denom = pos;
    for n in negatives {
        denom += (dot(anchor, n) / tau).exp();
    }
    -(pos / denom).ln()
}

/// Per-location InfoNCE values of one layer: anchor `s` against key `s`,
/// with every other key collected explicitly as a negative.
pub fn layer_terms(queries: &[Vec<f64>], keys: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for s in 0..queries.len() {
        let mut negatives = Vec::new();
        for j in 0..keys.len() {
            if j != s {
                negatives.push(keys[j].clone());
            }
        }
        out.push(info_nce(&queries[s], &keys[s], &negatives, tau));
    }
    out
}

/// Mean over layers of mean over locations.
pub fn patch_loss(queries: &[Vec<Vec<f64>>], keys: &[Vec<Vec<f64>>], tau: f64) -> f64 {
    let mut total = 0.0;
    for l in 0..queries.len() {
        let terms = layer_terms(&queries[l], &keys[l], tau);
        total += terms.iter().sum::<f64>() / terms.len() as f64;
    }
    total / queries.len() as f64
}

pub fn weight_h(family: &str, c: f64) -> f64 {
    match family {
        "zero" => 1.0,
        "linear" => (c + 1.0) / 2.0,
        "sigmoid" => 1.0 / (1.0 + (-10.0 * c).exp()),
        "lambda" => {
            let v = (c - 0.0) / (0.5 - 0.0);
            if v < 0.0 {
                0.0
            } else if v > 1.0 {
                1.0
            } else {
                v
            }
        }
        other => panic!("unknown family {other}"),
    }
}

pub fn schedule_g(family: &str, u: f64) -> f64 {
    match family {
        "uniform" => 0.0,
        "linear" => u,
        "top" => {
            if u < 0.5 {
                0.0
            } else {
                (u - 0.5) / 0.5
            }
        }
        other => panic!("unknown schedule {other}"),
    }
}

/// Scheduled weights for every layer and location.
pub fn asp_weights(queries: &[Vec<Vec<f64>>], keys: &[Vec<Vec<f64>>], family: &str, schedule: &str, t: u64, total: u64) -> Vec<Vec<f64>> {
    let g = schedule_g(schedule, t as f64 / total as f64);
    let mut out = Vec::new();
    for l in 0..queries.len() {
        let mut w = Vec::new();
        for s in 0..queries[l].len() {
            let c = dot(&queries[l][s], &keys[l][s]).clamp(-1.0, 1.0);
            w.push((1.0 - g) * 1.0 + g * weight_h(family, c));
        }
        out.push(w);
    }
    out
}

/// Weighted loss with the given raw weights, normalized to sum to one per layer.
pub fn weighted_loss(queries: &[Vec<Vec<f64>>], keys: &[Vec<Vec<f64>>], weights: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for l in 0..queries.len() {
        let terms = layer_terms(&queries[l], &keys[l], tau);
        let wsum: f64 = weights[l].iter().sum();
        let mut layer = 0.0;
        for s in 0..terms.len() {
            layer += weights[l][s] / wsum * terms[s];
        }
        total += layer;
    }
    total / queries.len() as f64
}

pub fn asp_loss(queries: &[Vec<Vec<f64>>], keys: &[Vec<Vec<f64>>], family: &str, schedule: &str, t: u64, total: u64, tau: f64) -> f64 {
    let w = asp_weights(queries, keys, family, schedule, t, total);
    weighted_loss(queries, keys, &w, tau)
}

/// Relative error between two gradient vectors, measured in the 2-norm.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for i in 0..analytic.len() {
        diff += (analytic[i] - numeric[i]).powi(2);
        na += analytic[i].powi(2);
        nn += numeric[i].powi(2);
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-300)
}

/// Central finite differences of `f` at `x`.
pub fn central_differences(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Closed-form Frechet distance between two isotropic unit-variance Gaussians.
pub fn isotropic_frechet(mean_distance: f64) -> f64 {
    mean_distance * mean_distance
}
