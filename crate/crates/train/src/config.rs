//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored, every key may appear once and
//! unknown keys are rejected. `ASP_SEED` in the environment replaces `seed`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asp_core::adaptive::{AdaptiveConfig, ScheduleFamily, WeightFamily, WeightNormalization};
use asp_core::pyramid::PyramidConfig;
use asp_core::sampling::derive_seed;
use asp_core::ContrastiveConfig;
use thiserror::Error;

use crate::data::{Corruption, StainMap, SynthConfig};
use crate::networks::{DiscriminatorSpec, GeneratorSpec, ProjectorSpec};

pub const SEED_ENV: &str = "ASP_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Default,
}

/// Every tunable of a run. Field names match the config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub data_root: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub preset: Preset,
    pub ngf: usize,
    pub n_blocks: usize,
    pub n_down: usize,
    pub taps: Vec<usize>,
    pub ndf: usize,
    pub d_layers: usize,
    pub embed_dim: usize,
    pub num_locations: usize,
    pub total_iters: u64,
    pub crop: usize,
    pub lambda_adv: f64,
    pub lambda_patchnce: f64,
    pub lambda_asp: f64,
    pub lambda_gp: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub temperature: f64,
    pub weight_family: WeightFamily,
    pub schedule_family: ScheduleFamily,
    pub weight_normalization: WeightNormalization,
    pub gp_levels: usize,
    pub gp_weights: Vec<f64>,
    pub checkpoint_interval: u64,
    pub histogram_interval: u64,
    pub histogram_bins: usize,
    pub synth: SynthConfig,
    pub synth_structure_seed_set: bool,
}

/// Keys that may differ between a checkpoint and a resumed run.
pub const RESUME_EXEMPT: &[&str] = &["out_dir", "checkpoint_interval"];

const KEYS: &[&str] = &[
    "seed",
    "data_root",
    "out_dir",
    "preset",
    "ngf",
    "n_blocks",
    "n_down",
    "taps",
    "ndf",
    "d_layers",
    "embed_dim",
    "num_locations",
    "total_iters",
    "crop",
    "lambda_adv",
    "lambda_patchnce",
    "lambda_asp",
    "lambda_gp",
    "learning_rate",
    "beta1",
    "beta2",
    "temperature",
    "weight_family",
    "sigmoid_k",
    "lambda_lower",
    "lambda_upper",
    "schedule_family",
    "top_start",
    "weight_normalization",
    "gp_levels",
    "gp_weights",
    "checkpoint_interval",
    "histogram_interval",
    "histogram_bins",
    "synth_num_train",
    "synth_num_test",
    "synth_image_size",
    "synth_structure_seed",
    "synth_inconsistency_rate",
    "synth_corruption",
    "synth_stain_gain",
    "synth_stain_offset",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), message: format!("`{v}`: {e}") })
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn triple(key: &str, v: &str) -> Result<[f64; 3], ConfigError> {
    let list: Vec<f64> = parse_list(key, v)?;
    list.try_into().map_err(|_| ConfigError::Value { key: key.into(), message: "expected three comma-separated numbers".into() })
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    /// Applies `ASP_SEED` when set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse(SEED_ENV, v.trim())?;
            if !self.synth_structure_seed_set {
                self.synth.structure_seed = derive_seed(self.seed, SYNTH_STREAM);
            }
        }
        Ok(())
    }

    /// Parses config text (without consulting the environment).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey { line: i + 1, key: k.to_string() });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }
        Self::from_entries(&entries)
    }

    fn from_entries(e: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let preset = match e.get("preset").map(String::as_str) {
            None | Some("tiny") => Preset::Tiny,
            Some("default") => Preset::Default,
            Some(other) => {
                return Err(ConfigError::Value { key: "preset".into(), message: format!("`{other}` (expected tiny or default)") })
            }
        };
        let mut c = Self::preset(preset);
        let mut sigmoid_k = None;
        let mut lambda_bounds = (None, None);
        let mut top_start = None;
        let mut taps_set = false;
        for (k, v) in e {
            let v = v.as_str();
            match k.as_str() {
                "seed" => c.seed = parse(k, v)?,
                "data_root" => c.data_root = Some(PathBuf::from(v)),
                "out_dir" => c.out_dir = PathBuf::from(v),
                "preset" => {}
                "ngf" => c.ngf = parse(k, v)?,
                "n_blocks" => c.n_blocks = parse(k, v)?,
                "n_down" => c.n_down = parse(k, v)?,
                "taps" => {
                    c.taps = parse_list(k, v)?;
                    taps_set = true;
                }
                "ndf" => c.ndf = parse(k, v)?,
                "d_layers" => c.d_layers = parse(k, v)?,
                "embed_dim" => c.embed_dim = parse(k, v)?,
                "num_locations" => c.num_locations = parse(k, v)?,
                "total_iters" => c.total_iters = parse(k, v)?,
                "crop" => c.crop = parse(k, v)?,
                "lambda_adv" => c.lambda_adv = parse(k, v)?,
                "lambda_patchnce" => c.lambda_patchnce = parse(k, v)?,
                "lambda_asp" => c.lambda_asp = parse(k, v)?,
                "lambda_gp" => c.lambda_gp = parse(k, v)?,
                "learning_rate" => c.learning_rate = parse(k, v)?,
                "beta1" => c.beta1 = parse(k, v)?,
                "beta2" => c.beta2 = parse(k, v)?,
                "temperature" => c.temperature = parse(k, v)?,
                "weight_family" => c.weight_family = parse(k, v)?,
                "sigmoid_k" => sigmoid_k = Some(parse(k, v)?),
                "lambda_lower" => lambda_bounds.0 = Some(parse(k, v)?),
                "lambda_upper" => lambda_bounds.1 = Some(parse(k, v)?),
                "schedule_family" => c.schedule_family = parse(k, v)?,
                "top_start" => top_start = Some(parse(k, v)?),
                "weight_normalization" => c.weight_normalization = parse(k, v)?,
                "gp_levels" => c.gp_levels = parse(k, v)?,
                "gp_weights" => c.gp_weights = parse_list(k, v)?,
                "checkpoint_interval" => c.checkpoint_interval = parse(k, v)?,
                "histogram_interval" => c.histogram_interval = parse(k, v)?,
                "histogram_bins" => c.histogram_bins = parse(k, v)?,
                "synth_num_train" => c.synth.num_train = parse(k, v)?,
                "synth_num_test" => c.synth.num_test = parse(k, v)?,
                "synth_image_size" => c.synth.image_size = parse(k, v)?,
                "synth_structure_seed" => {
                    c.synth.structure_seed = parse(k, v)?;
                    c.synth_structure_seed_set = true;
                }
                "synth_inconsistency_rate" => c.synth.inconsistency_rate = parse(k, v)?,
                "synth_corruption" => c.synth.corruption = parse::<Corruption>(k, v)?,
                "synth_stain_gain" => c.synth.stain.gain = triple(k, v)?,
                "synth_stain_offset" => c.synth.stain.offset = triple(k, v)?,
                _ => unreachable!("keys are checked while reading"),
            }
        }
        if let Some(steepness) = sigmoid_k {
            match &mut c.weight_family {
                WeightFamily::Sigmoid { steepness: s } => *s = steepness,
                _ => return Err(ConfigError::Invalid("sigmoid_k needs weight_family = sigmoid".into())),
            }
        }
        if lambda_bounds != (None, None) {
            match &mut c.weight_family {
                WeightFamily::Lambda { lower, upper } => {
                    *lower = lambda_bounds.0.unwrap_or(*lower);
                    *upper = lambda_bounds.1.unwrap_or(*upper);
                }
                _ => return Err(ConfigError::Invalid("lambda_lower/lambda_upper need weight_family = lambda".into())),
            }
        }
        if let Some(start) = top_start {
            match &mut c.schedule_family {
                ScheduleFamily::Top { start: s } => *s = start,
                _ => return Err(ConfigError::Invalid("top_start needs schedule_family = top".into())),
            }
        }
        if !taps_set {
            c.taps = GeneratorSpec::with_default_taps(c.ngf, c.n_blocks, c.n_down).taps;
        }
        if !e.contains_key("gp_weights") {
            c.gp_weights = vec![1.0; c.gp_levels];
        }
        if !c.synth_structure_seed_set {
            c.synth.structure_seed = derive_seed(c.seed, SYNTH_STREAM);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn preset(preset: Preset) -> Self {
        let (g, d, embed_dim, num_locations, crop) = match preset {
            Preset::Tiny => (GeneratorSpec::tiny(), DiscriminatorSpec::tiny(), 16, 256, 64),
            Preset::Default => (GeneratorSpec::default_preset(), DiscriminatorSpec::default_preset(), 256, 256, 512),
        };
        let synth = SynthConfig::default();
        Self {
            seed: 0,
            data_root: None,
            out_dir: PathBuf::from("runs/asp"),
            preset,
            ngf: g.base_width,
            n_blocks: g.n_blocks,
            n_down: g.n_down,
            taps: g.taps,
            ndf: d.base_width,
            d_layers: d.layers,
            embed_dim,
            num_locations,
            total_iters: 2000,
            crop,
            lambda_adv: 1.0,
            lambda_patchnce: 10.0,
            lambda_asp: 10.0,
            lambda_gp: 10.0,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            temperature: 0.07,
            weight_family: WeightFamily::DEFAULT_LAMBDA,
            schedule_family: ScheduleFamily::Linear,
            weight_normalization: WeightNormalization::SumToOne,
            gp_levels: 3,
            gp_weights: vec![1.0; 3],
            checkpoint_interval: 0,
            histogram_interval: 0,
            histogram_bins: 50,
            synth: SynthConfig { structure_seed: derive_seed(0, SYNTH_STREAM), ..synth },
            synth_structure_seed_set: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_patchnce", self.lambda_patchnce),
            ("lambda_asp", self.lambda_asp),
            ("lambda_gp", self.lambda_gp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.total_iters == 0 {
            return bad("total_iters must be positive".into());
        }
        if self.num_locations < 2 {
            return bad("num_locations must be at least 2".into());
        }
        if self.crop == 0 || !self.crop.is_multiple_of(1 << self.n_down) {
            return bad(format!("crop {} must be a positive multiple of {}", self.crop, 1 << self.n_down));
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive".into());
        }
        self.generator_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.discriminator_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.contrastive().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.adaptive_at(0).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pyramid().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Canonical `key -> value` view, used for echoing and diffing.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("data_root", self.data_root.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("out_dir", self.out_dir.display().to_string());
        put(
            "preset",
            match self.preset {
                Preset::Tiny => "tiny".into(),
                Preset::Default => "default".into(),
            },
        );
        put("ngf", self.ngf.to_string());
        put("n_blocks", self.n_blocks.to_string());
        put("n_down", self.n_down.to_string());
        put("taps", join(&self.taps));
        put("ndf", self.ndf.to_string());
        put("d_layers", self.d_layers.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("num_locations", self.num_locations.to_string());
        put("total_iters", self.total_iters.to_string());
        put("crop", self.crop.to_string());
        put("lambda_adv", self.lambda_adv.to_string());
        put("lambda_patchnce", self.lambda_patchnce.to_string());
        put("lambda_asp", self.lambda_asp.to_string());
        put("lambda_gp", self.lambda_gp.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("temperature", self.temperature.to_string());
        put("weight_family", self.weight_family.name().into());
        match self.weight_family {
            WeightFamily::Sigmoid { steepness } => put("sigmoid_k", steepness.to_string()),
            WeightFamily::Lambda { lower, upper } => {
                put("lambda_lower", lower.to_string());
                put("lambda_upper", upper.to_string());
            }
            _ => {}
        }
        put("schedule_family", self.schedule_family.name().into());
        if let ScheduleFamily::Top { start } = self.schedule_family {
            put("top_start", start.to_string());
        }
        put(
            "weight_normalization",
            match self.weight_normalization {
                WeightNormalization::SumToOne => "sum_to_one".into(),
                WeightNormalization::MeanToOne => "mean_to_one".into(),
            },
        );
        put("gp_levels", self.gp_levels.to_string());
        put("gp_weights", join(&self.gp_weights));
        put("checkpoint_interval", self.checkpoint_interval.to_string());
        put("histogram_interval", self.histogram_interval.to_string());
        put("histogram_bins", self.histogram_bins.to_string());
        put("synth_num_train", self.synth.num_train.to_string());
        put("synth_num_test", self.synth.num_test.to_string());
        put("synth_image_size", self.synth.image_size.to_string());
        put("synth_structure_seed", self.synth.structure_seed.to_string());
        put("synth_inconsistency_rate", self.synth.inconsistency_rate.to_string());
        put("synth_corruption", self.synth.corruption.name().into());
        put("synth_stain_gain", join(&self.synth.stain.gain));
        put("synth_stain_offset", join(&self.synth.stain.offset));
        m
    }

    /// Config text that parses back to `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().filter(|(k, v)| !(k == "data_root" && v.is_empty())).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            in_channels: 3,
            out_channels: 3,
            base_width: self.ngf,
            n_blocks: self.n_blocks,
            n_down: self.n_down,
            taps: self.taps.clone(),
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec { in_channels: 3, base_width: self.ndf, layers: self.d_layers }
    }

    pub fn projector_spec(&self) -> ProjectorSpec {
        let g = self.generator_spec();
        ProjectorSpec { in_channels: self.taps.iter().map(|&t| g.tap_channels(t)).collect(), dim: self.embed_dim }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig::new(self.temperature, self.num_locations)
    }

    pub fn adaptive_at(&self, t: u64) -> asp_core::Result<AdaptiveConfig> {
        Ok(AdaptiveConfig::new(self.weight_family, self.schedule_family, t, self.total_iters)?
            .with_normalization(self.weight_normalization))
    }

    pub fn pyramid(&self) -> PyramidConfig {
        PyramidConfig { levels: self.gp_levels, level_weights: self.gp_weights.clone() }
    }

    /// Steps between histogram/heatmap artifacts (default `T / 10`, at least 1).
    pub fn histogram_every(&self) -> u64 {
        if self.histogram_interval > 0 {
            self.histogram_interval
        } else {
            (self.total_iters / 10).max(1)
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    pub fn stain(&self) -> StainMap {
        self.synth.stain
    }
}

const SYNTH_STREAM: u64 = 5;

/// The seed lineage of one run, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub init: u64,
    pub data: u64,
    pub crop: u64,
    pub location: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            init: derive_seed(master, 1),
            data: derive_seed(master, 2),
            crop: derive_seed(master, 3),
            location: derive_seed(master, 4),
        }
    }
}

/// Keys whose values differ, as `key: old -> new` lines; `skip` keys are ignored.
pub fn diff_entries(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>, skip: &[&str]) -> Vec<String> {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| !skip.contains(&k.as_str()))
        .filter_map(|k| {
            let (x, y) = (a.get(k), b.get(k));
            (x != y).then(|| format!("{k}: {} -> {}", x.map_or("<unset>", |s| s), y.map_or("<unset>", |s| s)))
        })
        .collect()
}
