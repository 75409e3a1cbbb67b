// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//
//     cargo test -p asp-train --test acceptance [-- name ...]
//
// Names select a subset (`infonce`, `oracle`, `gradients`, `degeneracy`,
// `weights`, `metrics`, `fid`, `e2e`, `ablation`, `determinism`).

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use asp_core::adaptive::AdaptiveConfig;
use asp_core::contrastive::{asp_loss_with_grad, asp_weights, info_nce_with_grad, sp_loss_with_grad, ContrastiveConfig};
use asp_core::metrics::{fid, kid, phv, ssim, FeatureMap, FeatureSet};
use asp_core::pyramid::{gp_loss_planar, PyramidConfig};
use asp_core::{asp_loss, info_nce, patch_nce_loss, sp_loss, EmbeddingStack, Image, LayerEmbeddings};
use asp_train::config::Config;
use asp_train::data::{load_paired_dataset, synth_generate, Split};
use asp_train::eval::{evaluate, Translator};
use asp_train::features::FeatureExtractor;
use asp_train::train::{audit_generator_gradient, fit, load_checkpoint, FitOptions, Loaded, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

const FAMILIES: [&str; 4] = ["zero", "linear", "sigmoid", "lambda"];
const SCHEDULES: [&str; 3] = ["uniform", "linear", "top"];

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "infonce", budget: Duration::from_secs(1), run: infonce_uniform_logits },
        Criterion { name: "oracle", budget: Duration::from_secs(10), run: oracle_equivalence },
        Criterion { name: "gradients", budget: Duration::from_secs(120), run: gradient_audit },
        Criterion { name: "degeneracy", budget: Duration::from_secs(60), run: sp_asp_degeneracy },
        Criterion { name: "weights", budget: Duration::from_secs(60), run: weight_schedule_contract },
        Criterion { name: "metrics", budget: Duration::from_secs(60), run: metric_sanity },
        Criterion { name: "fid", budget: Duration::from_secs(30), run: fid_oracle },
        Criterion { name: "determinism", budget: Duration::from_secs(600), run: determinism },
        Criterion { name: "e2e", budget: Duration::from_secs(600), run: end_to_end },
        Criterion { name: "ablation", budget: Duration::from_secs(2400), run: robustness_ablation },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.iter().any(|s| s == c.name)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!("{detail}; over budget {:.0?}", c.budget)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {:<12} {:>8.2}s  {detail}", c.name, took.as_secs_f64());
        failed += outcome.is_err() as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `[layer][location][dim]`, every layer with `locations` rows.
fn rows(rng: &mut impl Rng, layers: usize, locations: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    (0..layers).map(|_| (0..locations).map(|_| unit_vector(rng, dim)).collect()).collect()
}

/// Rows pulled toward `base` so that similarities cover both signs.
fn near(rng: &mut impl Rng, base: &[Vec<Vec<f64>>], mix: f64) -> Vec<Vec<Vec<f64>>> {
    base.iter()
        .map(|layer| {
            layer
                .iter()
                .map(|r| {
                    let noise = unit_vector(rng, r.len());
                    let v: Vec<f64> = r.iter().zip(&noise).map(|(a, b)| mix * a + (1.0 - mix) * b).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        })
        .collect()
}

fn stack(rows: &[Vec<Vec<f64>>]) -> EmbeddingStack {
    let layers = rows
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let data = layer.iter().flatten().copied().collect();
            LayerEmbeddings::new(l, (1, layer.len()), (0..layer.len()).collect(), layer[0].len(), data).unwrap()
        })
        .collect();
    EmbeddingStack::new(layers).unwrap()
}

fn unflatten(flat: &[f64], layers: usize, locations: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    (0..layers).map(|l| (0..locations).map(|s| flat[(l * locations + s) * dim..][..dim].to_vec()).collect()).collect()
}

fn adaptive(family: &str, schedule: &str, t: u64, total: u64) -> AdaptiveConfig {
    AdaptiveConfig::new(family.parse().unwrap(), schedule.parse().unwrap(), t, total).unwrap()
}

fn infonce_uniform_logits() -> Outcome {
    // Orthogonal anchor: the positive and all 255 negatives share logit 0.
    let anchor = [1.0, 0.0];
    let other = [0.0, 1.0];
    let negatives: Vec<f64> = other.repeat(255);
    let loss = info_nce(&anchor, &other, &negatives, &ContrastiveConfig::new(0.07, 256)).map_err(|e| e.to_string())?;
    let err = (loss - 256f64.ln()).abs();
    ensure(err <= 1e-6, || format!("loss {loss} vs ln 256, error {err:e}"))?;
    Ok(format!("loss {loss:.8}, error {err:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut degenerate = 0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let layers = r.random_range(1..=3);
        let s = r.random_range(2..=8);
        let d = r.random_range(2..=8);
        let tau = [0.07, 0.1, 0.5][seed as usize % 3];
        let q = rows(&mut r, layers, s, d);
        let k = near(&mut r, &q, 0.6);
        let x = rows(&mut r, layers, s, d);
        let cfg = ContrastiveConfig::new(tau, s);
        let (qs, ks, xs) = (stack(&q), stack(&k), stack(&x));
        let mut check = |what: String, got: f64, want: f64| -> Result<(), String> {
            let err = (got - want).abs();
            worst = worst.max(err);
            checks += 1;
            ensure(err <= 1e-6, || format!("seed {seed} {what}: {got} vs oracle {want}"))
        };
        check("patch_nce".into(), patch_nce_loss(&qs, &xs, &cfg).unwrap(), oracle::patch_loss(&q, &x, tau))?;
        check("sp".into(), sp_loss(&qs, &ks, &cfg).unwrap(), oracle::patch_loss(&q, &k, tau))?;
        let total = r.random_range(1..=1000u64);
        let t = r.random_range(0..=total);
        for fam in FAMILIES {
            for sched in SCHEDULES {
                match asp_loss(&qs, &ks, &cfg, &adaptive(fam, sched, t, total)) {
                    Ok(got) => check(format!("asp {fam}/{sched}"), got, oracle::asp_loss(&q, &k, fam, sched, t, total, tau))?,
                    Err(asp_core::Error::DegenerateWeights { .. }) => degenerate += 1,
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
    }
    Ok(format!("{checks} comparisons ({degenerate} all-zero weight cases skipped), max error {worst:.1e}"))
}

fn gradient_audit() -> Outcome {
    let mut r = rng(31);
    let mut parts = Vec::new();
    let mut record = |name: &str, err: f64| -> Result<(), String> {
        parts.push(format!("{name} {err:.1e}"));
        ensure(err < 1e-3, || format!("{name} relative error {err}"))
    };

    // info_nce: anchor, positive and negatives.
    let (d, n, tau) = (8, 5, 0.2);
    let mut packed = unit_vector(&mut r, d);
    packed.extend(unit_vector(&mut r, d));
    for _ in 0..n {
        packed.extend(unit_vector(&mut r, d));
    }
    let cfg = ContrastiveConfig::new(tau, n + 1);
    let g = info_nce_with_grad(&packed[..d], &packed[d..2 * d], &packed[2 * d..], &cfg).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = [g.anchor, g.positive, g.negatives].concat();
    let numeric = oracle::central_differences(&packed, 1e-6, |p| {
        let negs: Vec<Vec<f64>> = p[2 * d..].chunks(d).map(|c| c.to_vec()).collect();
        oracle::info_nce(&p[..d], &p[d..2 * d], &negs, tau)
    });
    record("info_nce", oracle::relative_error(&analytic, &numeric))?;

    // sp_loss and asp_loss on both arguments; ASP weights frozen.
    let (layers, s) = (3, 6);
    let q = rows(&mut r, layers, s, d);
    let k = near(&mut r, &q, 0.5);
    let cfg = ContrastiveConfig::new(tau, s);
    let qf: Vec<f64> = q.iter().flatten().flatten().copied().collect();
    let kf: Vec<f64> = k.iter().flatten().flatten().copied().collect();
    let sp = sp_loss_with_grad(&stack(&q), &stack(&k), &cfg).map_err(|e| e.to_string())?;
    let mut num = oracle::central_differences(&qf, 1e-6, |x| oracle::patch_loss(&unflatten(x, layers, s, d), &k, tau));
    num.extend(oracle::central_differences(&kf, 1e-6, |x| oracle::patch_loss(&q, &unflatten(x, layers, s, d), tau)));
    record("sp_loss", oracle::relative_error(&[sp.grad_anchors.concat(), sp.grad_keys.concat()].concat(), &num))?;

    let ad = adaptive("lambda", "linear", 3, 4);
    let asp = asp_loss_with_grad(&stack(&q), &stack(&k), &cfg, &ad).map_err(|e| e.to_string())?;
    let w = oracle::asp_weights(&q, &k, "lambda", "linear", 3, 4);
    let mut num = oracle::central_differences(&qf, 1e-6, |x| oracle::weighted_loss(&unflatten(x, layers, s, d), &k, &w, tau));
    num.extend(oracle::central_differences(&kf, 1e-6, |x| oracle::weighted_loss(&q, &unflatten(x, layers, s, d), &w, tau)));
    record("asp_loss", oracle::relative_error(&[asp.grad_anchors.concat(), asp.grad_keys.concat()].concat(), &num))?;

    // gp_loss on a 32x32 RGB pair, three levels.
    let a: Vec<f64> = (0..32 * 32 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..32 * 32 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let pyr = PyramidConfig::uniform(3);
    let (_, grad) = gp_loss_planar(32, 32, 3, &a, &b, &pyr).map_err(|e| e.to_string())?;
    let numeric = oracle::central_differences(&a, 1e-6, |p| gp_loss_planar(32, 32, 3, p, &b, &pyr).unwrap().0);
    record("gp_loss", oracle::relative_error(&grad, &numeric))?;

    // Full objective on the tiny preset at 64x64, mid-schedule.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = config(
        &dir.path().join("data"),
        &dir.path().join("run"),
        &[("synth_num_train", "2"), ("synth_num_test", "1"), ("total_iters", "10")],
    );
    synth_generate(&cfg.synth, &dir.path().join("data")).map_err(|e| e.to_string())?;
    let (m, _) = load_paired_dataset(&dir.path().join("data"), Split::Train).map_err(|e| e.to_string())?;
    let pair = m.load(&m.ids[0]).map_err(|e| e.to_string())?;
    let audit = audit_generator_gradient(&cfg, &pair, 6, 20, 1e-6, 17).map_err(|e| e.to_string())?;
    let t = &audit.terms;
    ensure(t.adv_g > 0.0 && t.patchnce > 0.0 && t.asp > 0.0 && t.gp > 0.0, || format!("inactive term in {t:?}"))?;
    record("objective", audit.relative_error)?;
    Ok(format!("relative errors: {}", parts.join(", ")))
}

fn sp_asp_degeneracy() -> Outcome {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let layers = 1 + case % 3;
        let s = 4 + case % 5;
        let q = rows(&mut r, layers, s, 8);
        let k = near(&mut r, &q, 0.5);
        let cfg = ContrastiveConfig::new(0.07, s);
        let sp = sp_loss(&stack(&q), &stack(&k), &cfg).unwrap();
        let total = r.random_range(1..=100_000u64);
        let t = r.random_range(0..=total);
        for sched in SCHEDULES {
            let v = asp_loss(&stack(&q), &stack(&k), &cfg, &adaptive("zero", sched, t, total)).map_err(|e| e.to_string())?;
            worst = worst.max((v - sp).abs());
            ensure((v - sp).abs() <= 1e-6, || format!("t={t} T={total} {sched}: asp {v} vs sp {sp}"))?;
        }
    }
    Ok(format!("10 (t, T) pairs x 3 schedules, max |asp - sp| {worst:.1e}"))
}

fn weight_schedule_contract() -> Outcome {
    let mut r = rng(505);
    let sims: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
    for fam in FAMILIES {
        for sched in SCHEDULES {
            let ad = adaptive(fam, sched, 0, 1000);
            for &c in &sims {
                let w = ad.weight_for_similarity(c).unwrap();
                ensure(w == 1.0, || format!("{fam}/{sched} at t=0, c={c}: w={w}"))?;
            }
        }
    }
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let q = rows(&mut r, 3, 8, 6);
        let k = near(&mut r, &q, 0.3 + 0.03 * seed as f64);
        let cfg = ContrastiveConfig::new(0.07, 8);
        for fam in FAMILIES {
            for sched in SCHEDULES {
                let total = 100;
                let t = r.random_range(0..=total);
                let ad = adaptive(fam, sched, t, total);
                let out = match asp_loss_with_grad(&stack(&q), &stack(&k), &cfg, &ad) {
                    Ok(o) => o,
                    Err(asp_core::Error::DegenerateWeights { .. }) => continue,
                    Err(e) => return Err(e.to_string()),
                };
                for layer in &out.coefficients {
                    let sum: f64 = layer.iter().sum();
                    worst = worst.max((sum - 1.0).abs());
                    ensure((sum - 1.0).abs() <= 1e-6, || format!("{fam}/{sched} t={t}: weights sum to {sum}"))?;
                }
                if sched == "top" && (t as f64) / (total as f64) < 0.5 {
                    let raw = asp_weights(&stack(&q), &stack(&k), &ad).unwrap();
                    ensure(raw.iter().flatten().all(|&w| w == 1.0), || format!("top/{fam} t={t}: weight below 1"))?;
                }
            }
        }
        // Every step of the first half, not just sampled ones.
        for t in 0..50 {
            for fam in FAMILIES {
                let raw = asp_weights(&stack(&q), &stack(&k), &adaptive(fam, "top", t, 100)).unwrap();
                ensure(raw.iter().flatten().all(|&w| w == 1.0), || format!("top/{fam} t={t}: weight below 1"))?;
            }
        }
    }
    Ok(format!("w_0 = 1 for 12 variants; max |sum - 1| {worst:.1e}; top exactly 1 before t/T = 0.5"))
}

fn gaussian_set(rng: &mut impl Rng, n: usize, dim: usize, shift: f64) -> FeatureSet {
    let data = (0..n * dim).map(|i| rng.sample::<f64, _>(StandardNormal) + if i % dim == 0 { shift } else { 0.0 }).collect();
    FeatureSet::new(dim, data).unwrap()
}

fn feature_stages(rng: &mut impl Rng) -> Vec<FeatureMap> {
    (0..4)
        .map(|s| {
            let c = 4 << s;
            FeatureMap::new(c, 4, 4, (0..c * 16).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
        })
        .collect()
}

fn metric_sanity() -> Outcome {
    let mut r = rng(606);
    let mut worst_ssim = 0.0f64;
    for size in [16, 64, 128] {
        let a = Image::from_fn(size, size, 3, |_, _, _| r.random_range(-1.0f32..1.0));
        let v = ssim(&a, &a).map_err(|e| e.to_string())?;
        worst_ssim = worst_ssim.max((v - 1.0).abs());
        ensure((v - 1.0).abs() <= 1e-6, || format!("ssim(a, a) = {v} at {size}px"))?;
    }
    let a = feature_stages(&mut r);
    for t in [0.0, 0.01, 0.5] {
        let p = phv(&a, &a, t).map_err(|e| e.to_string())?;
        ensure(p.average == 0.0 && p.per_layer.iter().all(|&v| v == 0.0), || format!("phv(a, a, {t}) = {p:?}"))?;
    }
    let set = gaussian_set(&mut r, 1000, 8, 0.0);
    let f = fid(&set, &set).map_err(|e| e.to_string())?;
    ensure(f <= 1e-6, || format!("fid(A, A) = {f}"))?;
    let same = kid(&set, &set, 100, 50, 3).map_err(|e| e.to_string())?;
    let independent = kid(&set, &gaussian_set(&mut r, 1000, 8, 0.0), 100, 50, 3).map_err(|e| e.to_string())?;
    let floor = independent.mean.abs() + independent.std;
    ensure(same.mean.abs() < floor, || format!("|kid(A, A)| = {} above noise floor {floor}", same.mean.abs()))?;
    let thresholds = [0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.5];
    for pair in 0..20 {
        let a = feature_stages(&mut r);
        let b = feature_stages(&mut r);
        let mut prev = f64::INFINITY;
        for &t in &thresholds {
            let v = phv(&a, &b, t).map_err(|e| e.to_string())?.average;
            ensure(v <= prev, || format!("pair {pair}: phv rose to {v} at T={t}"))?;
            prev = v;
        }
    }
    Ok(format!(
        "max |ssim - 1| {worst_ssim:.1e}; fid(A, A) {f:.1e}; |kid(A, A)| {:.1e} < floor {floor:.1e}; phv monotone on 20 pairs",
        same.mean.abs()
    ))
}

fn fid_oracle() -> Outcome {
    let mut r = rng(707);
    let mut parts = Vec::new();
    for d in [1.0, 2.0, 4.0] {
        let a = gaussian_set(&mut r, 10_000, 8, 0.0);
        let b = gaussian_set(&mut r, 10_000, 8, d);
        let got = fid(&a, &b).map_err(|e| e.to_string())?;
        let want = oracle::isotropic_frechet(d);
        let rel = (got - want).abs() / want;
        parts.push(format!("d={d}: {got:.3} ({:.1}%)", 100.0 * rel));
        ensure(rel < 0.05, || format!("d={d}: fid {got} vs {want}"))?;
    }
    Ok(parts.join(", "))
}

/// Tiny preset at 64x64 with 200 / 50 synthetic pairs, overridden by `extra`.
fn config(data: &Path, out: &Path, extra: &[(&str, &str)]) -> Config {
    let mut keys = std::collections::BTreeMap::new();
    for (k, v) in [
        ("preset", "tiny"),
        ("seed", "1"),
        ("crop", "64"),
        ("synth_image_size", "64"),
        ("synth_num_train", "200"),
        ("synth_num_test", "50"),
        ("synth_inconsistency_rate", "0"),
        ("total_iters", "2000"),
    ]
    .into_iter()
    .chain(extra.iter().copied())
    {
        keys.insert(k.to_string(), v.to_string());
    }
    keys.insert("data_root".into(), data.display().to_string());
    keys.insert("out_dir".into(), out.display().to_string());
    let text: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    Config::parse(&text).unwrap()
}

fn test_ssim(translator: &Translator, data: &Path) -> Result<f64, String> {
    let (manifest, _) = load_paired_dataset(data, Split::Test).map_err(|e| e.to_string())?;
    Ok(evaluate(translator, &manifest, &FeatureExtractor::tiny()).map_err(|e| e.to_string())?.row.ssim)
}

fn train_and_score(cfg: Config) -> Result<f64, String> {
    let data = cfg.data_root.clone().unwrap();
    let summary = fit(cfg, &FitOptions::default()).map_err(|e| e.to_string())?;
    let ckpt = summary.final_checkpoint.ok_or("run did not finish")?;
    test_ssim(&Translator::from_checkpoint(&ckpt).map_err(|e| e.to_string())?, &data)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let small = [("synth_num_train", "20"), ("synth_num_test", "2"), ("total_iters", "50")];
    let run = |name: &str| config(&data, &dir.path().join(name), &small);
    synth_generate(&run("a").synth, &data).map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| e.to_string());

    let a = fit(run("a"), &FitOptions::default()).map_err(|e| e.to_string())?;
    let b = fit(run("b"), &FitOptions::default()).map_err(|e| e.to_string())?;
    ensure(read(&a.log)? == read(&b.log)?, || "logs of identical runs differ".into())?;

    let first = fit(run("c"), &FitOptions { stop_after: Some(25), ..Default::default() }).map_err(|e| e.to_string())?;
    let resumed = fit(run("c"), &FitOptions { resume: first.last_checkpoint, ..Default::default() }).map_err(|e| e.to_string())?;
    ensure(read(&resumed.log)? == read(&a.log)?, || "resumed log differs from the unbroken run".into())?;
    let load = |p: Option<std::path::PathBuf>| match load_checkpoint(&p.unwrap()) {
        Ok(Loaded::Model(s)) => Ok(s),
        _ => Err("unreadable final checkpoint".to_string()),
    };
    let (x, y) = (load(a.final_checkpoint)?, load(resumed.final_checkpoint)?);
    ensure(x.params == y.params, || "resumed parameters differ".into())?;
    ensure((&x.opt_g, &x.opt_d, &x.opt_f) == (&y.opt_g, &y.opt_d, &y.opt_f), || "resumed optimizer state differs".into())?;
    Ok("two 50-step logs identical; resume at 25 bitwise equal (log, parameters, optimizer)".into())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let cfg = config(&data, &dir.path().join("run"), &[]);
    synth_generate(&cfg.synth, &data).map_err(|e| e.to_string())?;
    let untrained = TrainState::new(cfg.clone()).map_err(|e| e.to_string())?;
    let before = test_ssim(&Translator::from_state(&untrained), &data)?;
    let after = train_and_score(cfg)?;
    ensure(after - before >= 0.2, || format!("SSIM {before:.4} -> {after:.4}, gain below 0.2"))?;
    Ok(format!("test SSIM {before:.4} untrained -> {after:.4} trained (+{:.4})", after - before))
}

fn robustness_ablation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let noisy = [("synth_inconsistency_rate", "0.3"), ("synth_corruption", "erase_half"), ("synth_structure_seed", "11")];
    synth_generate(&config(&data, dir.path(), &noisy).synth, &data).map_err(|e| e.to_string())?;
    let arms: [(&str, &[(&str, &str)]); 3] = [
        ("asp", &[("weight_family", "lambda"), ("schedule_family", "linear")]),
        ("sp", &[("weight_family", "zero")]),
        ("baseline", &[("lambda_patchnce", "0"), ("lambda_asp", "0")]),
    ];
    let mut means = Vec::new();
    let mut parts = Vec::new();
    for (arm, keys) in arms {
        let mut scores = Vec::new();
        for seed in ["1", "2", "3"] {
            let out = dir.path().join(format!("{arm}_{seed}"));
            let mut extra = noisy.to_vec();
            extra.extend_from_slice(keys);
            // One artifact set at the end; no intermediate checkpoints.
            extra.extend([("seed", seed), ("histogram_interval", "2000"), ("checkpoint_interval", "2000")]);
            scores.push(train_and_score(config(&data, &out, &extra))?);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        parts.push(format!("{arm} {mean:.4} {:.4?}", scores));
        means.push(mean);
    }
    let (asp, sp, base) = (means[0], means[1], means[2]);
    let detail = format!("clean test SSIM: {}", parts.join(", "));
    ensure(asp >= sp && sp >= base && asp - base >= 0.02, || {
        format!("ordering ASP >= SP >= baseline, ASP - baseline >= 0.02 violated: {detail}")
    })?;
    Ok(detail)
}
