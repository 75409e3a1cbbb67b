mod common;

use asp_core::contrastive::sp_loss;
use asp_train::config::Config;
use asp_train::nn::Tensor;
use asp_train::train::*;
use common::*;

fn reports(text: &str) -> Vec<LossReport> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn fit_writes_one_record_per_step_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "histogram_interval = 3");
    make_data(&cfg);
    let summary = fit(cfg.clone(), &FitOptions::default()).unwrap();
    let log = reports(&read_log(&summary.log));
    assert_eq!(log.len(), 10);
    assert_eq!(log.iter().map(|r| r.iter).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    assert_eq!(summary.artifacts, 3);
    let jsons = std::fs::read_dir(dir.path().join("run/artifacts"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"))
        .count();
    assert_eq!(jsons, 10 / 3);
    assert!(summary.final_checkpoint.unwrap().exists());
}

#[test]
fn total_matches_weighted_terms_and_weights_start_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "lambda_asp = 3\nlambda_gp = 7\nlambda_patchnce = 2");
    make_data(&cfg);
    let summary = fit(cfg.clone(), &FitOptions::default()).unwrap();
    let log = reports(&read_log(&summary.log));
    for r in &log {
        let total = r.adv_g + 2.0 * r.patchnce + 3.0 * r.asp + 7.0 * r.gp;
        assert!((total - r.total_g).abs() < 1e-6, "{r:?}");
    }
    assert_eq!(log[0].weights.len(), cfg.taps.len());
    for w in &log[0].weights {
        assert_eq!((w.min, w.mean, w.max), (1.0, 1.0, 1.0));
    }
    assert!(log.iter().skip(1).any(|r| r.weights.iter().any(|w| w.min < 1.0)));
}

#[test]
fn top_schedule_keeps_unit_weights_in_first_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "schedule_family = top\ntotal_iters = 8");
    make_data(&cfg);
    let log = reports(&read_log(&fit(cfg, &FitOptions::default()).unwrap().log));
    for r in log.iter().filter(|r| (r.iter as f64) / 8.0 < 0.5) {
        assert!(r.weights.iter().all(|w| w.min == 1.0 && w.max == 1.0), "{r:?}");
    }
}

#[test]
fn zero_lambdas_leave_only_the_adversarial_term() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        &dir.path().join("data"),
        &dir.path().join("run"),
        "lambda_asp = 0\nlambda_gp = 0\nlambda_patchnce = 0\ntotal_iters = 3",
    );
    make_data(&cfg);
    for r in reports(&read_log(&fit(cfg, &FitOptions::default()).unwrap().log)) {
        assert_eq!(r.total_g, r.adv_g);
        assert_eq!((r.patchnce, r.asp, r.gp), (0.0, 0.0, 0.0));
        assert!(r.weights.is_empty());
    }
}

#[test]
fn zero_weight_family_reproduces_the_supervised_loss_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for schedule in ["uniform", "linear", "top"] {
        let cfg =
            small_config(&dir.path().join("data"), &dir.path().join("run"), &format!("weight_family = zero\nschedule_family = {schedule}"));
        if schedule == "uniform" {
            make_data(&cfg);
        }
        let pair = first_pair(&cfg);
        let (models, params) = Models::build::<f32>(&cfg, cfg.seeds().init).unwrap();
        let x = Tensor::<f32>::from_image(&pair.he_image);
        let y = Tensor::<f32>::from_image(&pair.ihc_image);
        for t in [0, 3, 7] {
            let pass = generator_pass(&models, &params.g, &x, true).unwrap();
            let obj = generator_objective(&models, &params, &cfg, t, &x, &y, pass, 11, None).unwrap();
            let sp = sp_loss(obj.queries.as_ref().unwrap(), obj.frozen.keys_y.as_ref().unwrap(), &cfg.contrastive()).unwrap();
            assert_eq!(obj.terms.asp.to_bits(), sp.to_bits(), "{schedule} t={t}");
        }
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(&dir.path().join("data"), &dir.path().join("a"), "");
    let b = small_config(&dir.path().join("data"), &dir.path().join("b"), "");
    make_data(&a);
    let la = read_log(&fit(a, &FitOptions::default()).unwrap().log);
    let lb = read_log(&fit(b, &FitOptions::default()).unwrap().log);
    assert_eq!(la, lb);
    let c = small_config(&dir.path().join("data"), &dir.path().join("c"), "seed = 99");
    let lc = read_log(&fit(c, &FitOptions::default()).unwrap().log);
    assert_ne!(la, lc);
}

#[test]
fn resume_reproduces_an_unbroken_run() {
    let dir = tempfile::tempdir().unwrap();
    let whole = small_config(&dir.path().join("data"), &dir.path().join("whole"), "");
    make_data(&whole);
    let unbroken = fit(whole, &FitOptions::default()).unwrap();

    let part = small_config(&dir.path().join("data"), &dir.path().join("part"), "");
    let first = fit(part.clone(), &FitOptions { stop_after: Some(5), ..Default::default() }).unwrap();
    let ckpt = first.last_checkpoint.unwrap();
    // A stale record past the checkpoint must be dropped on resume.
    std::fs::write(
        &first.log,
        read_log(&first.log) + &read_log(&unbroken.log).lines().nth(7).unwrap().replace("\"iter\":7", "\"iter\":5") + "\n",
    )
    .unwrap();
    let resumed = fit(part, &FitOptions { resume: Some(ckpt), ..Default::default() }).unwrap();
    assert_eq!(resumed.steps_run, 5);
    assert_eq!(read_log(&resumed.log), read_log(&unbroken.log));

    let (Loaded::Model(a), Loaded::Model(b)) =
        (load_checkpoint(&unbroken.final_checkpoint.unwrap()).unwrap(), load_checkpoint(&resumed.final_checkpoint.unwrap()).unwrap())
    else {
        panic!("model checkpoints expected")
    };
    assert_eq!(a.params, b.params);
    assert_eq!((a.opt_g.clone(), a.opt_d.clone(), a.opt_f.clone()), (b.opt_g.clone(), b.opt_d.clone(), b.opt_f.clone()));
    assert_eq!(a.iter, 10);
}

#[test]
fn resume_with_a_changed_config_reports_the_difference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "");
    make_data(&cfg);
    let first = fit(cfg, &FitOptions { stop_after: Some(2), ..Default::default() }).unwrap();
    let changed = small_config(&dir.path().join("data"), &dir.path().join("other"), "lambda_asp = 5\ncheckpoint_interval = 3");
    let err = fit(changed, &FitOptions { resume: first.last_checkpoint, ..Default::default() }).unwrap_err();
    match &err {
        TrainError::ConfigMismatch(diff) => assert_eq!(diff, &vec!["lambda_asp: 10 -> 5".to_string()]),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn non_finite_update_aborts_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "learning_rate = 1e300");
    make_data(&cfg);
    let err = fit(cfg, &FitOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let TrainError::Numeric(dump) = &err else { panic!("{err:?}") };
    assert_eq!(dump.iter, 0);
    let text = std::fs::read_to_string(dir.path().join("run/abort/dump.json")).unwrap();
    let back: AbortDump = serde_json::from_str(&text).unwrap();
    assert_eq!(back.seeds, dump.seeds);
    assert!(dir.path().join("run/abort/input_HE.png").exists());
}

#[test]
fn full_objective_gradient_matches_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("data"), &dir.path().join("run"), "lambda_adv = 1");
    make_data(&cfg);
    let audit = audit_generator_gradient(&cfg, &first_pair(&cfg), 4, 20, 1e-6, 5).unwrap();
    assert!(audit.terms.adv_g > 0.0 && audit.terms.patchnce > 0.0 && audit.terms.asp > 0.0 && audit.terms.gp > 0.0);
    assert!(audit.relative_error < 1e-3, "{audit:?}");
}

#[test]
fn missing_data_root_is_a_config_error() {
    let cfg = Config::parse("total_iters = 2").unwrap();
    assert_eq!(fit(cfg, &FitOptions::default()).unwrap_err().exit_code(), 2);
}
