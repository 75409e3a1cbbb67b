mod common;

use asp_core::adaptive::{AdaptiveConfig, ScheduleFamily, WeightFamily};
use asp_core::contrastive::{asp_loss_with_grad, info_nce, info_nce_with_grad, sp_loss_with_grad, ContrastiveConfig};
use asp_core::{asp_loss, patch_nce_loss, sp_loss};
use common::oracle;

const FAMILIES: [&str; 4] = ["zero", "linear", "sigmoid", "lambda"];
const SCHEDULES: [&str; 3] = ["uniform", "linear", "top"];

fn adaptive(family: &str, schedule: &str, t: u64, total: u64) -> AdaptiveConfig {
    AdaptiveConfig::new(family.parse().unwrap(), schedule.parse().unwrap(), t, total).unwrap()
}

#[test]
fn info_nce_matches_scalar_oracle() {
    let mut rng = common::rng(5);
    for n in [1usize, 3, 17] {
        let a = common::unit_vector(&mut rng, 6);
        let p = common::unit_vector(&mut rng, 6);
        let negs: Vec<Vec<f64>> = (0..n).map(|_| common::unit_vector(&mut rng, 6)).collect();
        let flat: Vec<f64> = negs.iter().flatten().copied().collect();
        for tau in [0.07, 0.5, 1.0] {
            let got = info_nce(&a, &p, &flat, &ContrastiveConfig::new(tau, n + 1)).unwrap();
            let want = oracle::info_nce(&a, &p, &negs, tau);
            assert!((got - want).abs() < 1e-9 * want.max(1.0), "n={n} tau={tau}: {got} vs {want}");
        }
    }
    // Fixed examples.
    let e1 = [1.0, 0.0];
    let e2 = [0.0, 1.0];
    assert!((oracle::info_nce(&e1, &e1, &[e2.to_vec()], 1.0) - 0.31326).abs() < 1e-5);
    assert!((oracle::info_nce(&e1, &e2, &[e1.to_vec()], 1.0) - 1.31326).abs() < 1e-5);
}

#[test]
fn sp_matches_brute_force_with_seed_zero() {
    let mut rng = common::rng(0);
    let q = common::random_rows(&mut rng, 1, 8, 4);
    let k = common::random_rows(&mut rng, 1, 8, 4);
    let cfg = ContrastiveConfig::new(0.07, 8);
    let got = sp_loss(&common::stack(&q), &common::stack(&k), &cfg).unwrap();
    let want = oracle::patch_loss(&q, &k, 0.07);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn composite_losses_match_oracles_over_seeds() {
    for seed in 0..30u64 {
        let mut rng = common::rng(1000 + seed);
        let layers = 1 + (seed as usize % 3);
        let s = 2 + (seed as usize % 7);
        let d = 2 + (seed as usize % 7);
        let q = common::random_rows(&mut rng, layers, s, d);
        let k = common::correlated_rows(&mut rng, &q, 0.6);
        let x = common::random_rows(&mut rng, layers, s, d);
        let cfg = ContrastiveConfig::new(0.1, 8);
        let (qs, ks, xs) = (common::stack(&q), common::stack(&k), common::stack(&x));
        let nce = patch_nce_loss(&qs, &xs, &cfg).unwrap();
        assert!((nce - oracle::patch_loss(&q, &x, 0.1)).abs() < 1e-6);
        let sp = sp_loss(&qs, &ks, &cfg).unwrap();
        assert!((sp - oracle::patch_loss(&q, &k, 0.1)).abs() < 1e-6);
        for fam in FAMILIES {
            for sched in SCHEDULES {
                let t = seed * 7 % 101;
                let ad = adaptive(fam, sched, t, 100);
                let got = match asp_loss(&qs, &ks, &cfg, &ad) {
                    Ok(v) => v,
                    Err(asp_core::Error::DegenerateWeights { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let want = oracle::asp_loss(&q, &k, fam, sched, t, 100, 0.1);
                assert!((got - want).abs() < 1e-6, "seed {seed} {fam}/{sched}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn asp_with_lambda_weights_at_full_schedule() {
    let mut rng = common::rng(77);
    let q = common::random_rows(&mut rng, 2, 8, 5);
    let k = common::correlated_rows(&mut rng, &q, 0.4);
    let cfg = ContrastiveConfig::new(0.07, 8);
    let ad = adaptive("lambda", "linear", 40, 40);
    let got = asp_loss(&common::stack(&q), &common::stack(&k), &cfg, &ad).unwrap();
    let want = oracle::asp_loss(&q, &k, "lambda", "linear", 40, 40, 0.07);
    assert!((got - want).abs() < 1e-6);
    // Weights at full schedule are h itself; they must actually vary here.
    let w = oracle::asp_weights(&q, &k, "lambda", "linear", 40, 40);
    assert!(w[0].iter().any(|&x| x < 1.0));
}

#[test]
fn info_nce_gradient_matches_finite_differences() {
    let mut rng = common::rng(9);
    let d = 8;
    let n = 3;
    let a = common::unit_vector(&mut rng, d);
    let p = common::unit_vector(&mut rng, d);
    let negs: Vec<f64> = (0..n).flat_map(|_| common::unit_vector(&mut rng, d)).collect();
    let tau = 0.5;
    let cfg = ContrastiveConfig::new(tau, n + 1);
    let g = info_nce_with_grad(&a, &p, &negs, &cfg).unwrap();

    let mut packed = a.clone();
    packed.extend(&p);
    packed.extend(&negs);
    let f = |x: &[f64]| {
        let negs: Vec<Vec<f64>> = x[2 * d..].chunks(d).map(|c| c.to_vec()).collect();
        oracle::info_nce(&x[..d], &x[d..2 * d], &negs, tau)
    };
    let numeric = oracle::central_differences(&packed, 1e-4, f);
    let mut analytic = g.anchor.clone();
    analytic.extend(&g.positive);
    analytic.extend(&g.negatives);
    let err = oracle::relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn sp_and_asp_gradients_match_finite_differences() {
    let (layers, s, d) = (2, 4, 8);
    let tau = 0.2;
    let mut rng = common::rng(21);
    let q = common::random_rows(&mut rng, layers, s, d);
    let k = common::correlated_rows(&mut rng, &q, 0.5);
    let cfg = ContrastiveConfig::new(tau, s);
    let (qs, ks) = (common::stack(&q), common::stack(&k));
    let qf = common::flatten(&q);
    let kf = common::flatten(&k);

    // SP: anchors and keys.
    let sp = sp_loss_with_grad(&qs, &ks, &cfg).unwrap();
    let num_q = oracle::central_differences(&qf, 1e-4, |x| oracle::patch_loss(&common::unflatten(x, layers, s, d), &k, tau));
    let num_k = oracle::central_differences(&kf, 1e-4, |x| oracle::patch_loss(&q, &common::unflatten(x, layers, s, d), tau));
    let ana_q: Vec<f64> = sp.grad_anchors.concat();
    let ana_k: Vec<f64> = sp.grad_keys.concat();
    assert!(oracle::relative_error(&ana_q, &num_q) < 1e-4);
    assert!(oracle::relative_error(&ana_k, &num_k) < 1e-4);

    // ASP: weights frozen at the unperturbed inputs.
    let ad = adaptive("linear", "linear", 3, 4);
    let asp = asp_loss_with_grad(&qs, &ks, &cfg, &ad).unwrap();
    let w = oracle::asp_weights(&q, &k, "linear", "linear", 3, 4);
    let num_q = oracle::central_differences(&qf, 1e-4, |x| oracle::weighted_loss(&common::unflatten(x, layers, s, d), &k, &w, tau));
    let num_k = oracle::central_differences(&kf, 1e-4, |x| oracle::weighted_loss(&q, &common::unflatten(x, layers, s, d), &w, tau));
    assert!(oracle::relative_error(&asp.grad_anchors.concat(), &num_q) < 1e-4);
    assert!(oracle::relative_error(&asp.grad_keys.concat(), &num_k) < 1e-4);
}

#[test]
fn top_schedule_keeps_uniform_weights_before_start() {
    let mut rng = common::rng(3);
    let q = common::random_rows(&mut rng, 2, 6, 4);
    let k = common::random_rows(&mut rng, 2, 6, 4);
    let cfg = ContrastiveConfig::new(0.07, 6);
    for t in 0..50 {
        let ad = AdaptiveConfig::new(WeightFamily::DEFAULT_SIGMOID, ScheduleFamily::DEFAULT_TOP, t, 100).unwrap();
        let out = asp_loss_with_grad(&common::stack(&q), &common::stack(&k), &cfg, &ad).unwrap();
        for layer in &out.coefficients {
            assert!(layer.iter().all(|&c| c == 1.0 / 6.0));
        }
    }
}
