#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use asp_train::config::Config;
use asp_train::data::{load_paired_dataset, synth_generate, PairedSample, Split};

/// A small, fast run: 32x32 synthetic pairs and 64 locations per layer.
/// `extra` lines override the defaults key by key.
pub fn small_config(root: &Path, out: &Path, extra: &str) -> Config {
    let mut keys: BTreeMap<String, String> = [
        ("data_root", root.display().to_string()),
        ("out_dir", out.display().to_string()),
        ("crop", "32".into()),
        ("synth_image_size", "32".into()),
        ("synth_num_train", "12".into()),
        ("synth_num_test", "4".into()),
        ("num_locations", "64".into()),
        ("total_iters", "10".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for line in extra.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').unwrap();
        keys.insert(k.trim().to_string(), v.trim().to_string());
    }
    let text: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    Config::parse(&text).unwrap()
}

pub fn make_data(cfg: &Config) {
    synth_generate(&cfg.synth, cfg.data_root.as_ref().unwrap()).unwrap();
}

pub fn first_pair(cfg: &Config) -> PairedSample {
    let (m, _) = load_paired_dataset(cfg.data_root.as_ref().unwrap(), Split::Train).unwrap();
    m.load(&m.ids[0]).unwrap()
}

pub fn read_log(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
