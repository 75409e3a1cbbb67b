use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use asp_core::sampling::derive_seed;

use super::{load_checkpoint, save_checkpoint, train_step, AbortDump, Loaded, LossReport, TrainError, TrainState};
use crate::config::{diff_entries, Config, ConfigError, RESUME_EXEMPT};
use crate::data::{load_paired_dataset, random_crop_pair, schedule_index, write_png, DatasetManifest, PairedSample, Split};
use crate::viz::{similarity_report, write_report};

pub const LOG_FILE: &str = "train_log.jsonl";
/// Datasets up to this many stored values are kept in memory.
const PRELOAD_VALUES: usize = 1 << 27;

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub resume: Option<PathBuf>,
    /// Stop once this many steps are complete (the run can be resumed later).
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub log: PathBuf,
    /// `checkpoints/final.safetensors` when the run reached `total_iters`.
    pub final_checkpoint: Option<PathBuf>,
    pub last_checkpoint: Option<PathBuf>,
    pub steps_run: u64,
    pub artifacts: usize,
    pub last_report: Option<LossReport>,
    pub seconds: f64,
}

enum Source {
    Memory(Vec<PairedSample>),
    Disk(DatasetManifest),
}

impl Source {
    fn open(root: &Path) -> Result<Self, TrainError> {
        let (manifest, warnings) = load_paired_dataset(root, Split::Train)?;
        for w in &warnings {
            log::warn!("skipping {w}");
        }
        let (h, w) = manifest.patch_size;
        if manifest.len() * h * w * 6 <= PRELOAD_VALUES {
            Ok(Source::Memory(manifest.load_all()?))
        } else {
            Ok(Source::Disk(manifest))
        }
    }

    fn len(&self) -> usize {
        match self {
            Source::Memory(v) => v.len(),
            Source::Disk(m) => m.len(),
        }
    }

    fn get(&self, i: usize) -> Result<std::borrow::Cow<'_, PairedSample>, TrainError> {
        match self {
            Source::Memory(v) => Ok(std::borrow::Cow::Borrowed(&v[i])),
            Source::Disk(m) => Ok(std::borrow::Cow::Owned(m.load(&m.ids[i])?)),
        }
    }
}

fn checkpoint_every(cfg: &Config) -> u64 {
    if cfg.checkpoint_interval > 0 {
        cfg.checkpoint_interval
    } else {
        (cfg.total_iters / 5).max(1)
    }
}

/// Keeps the records with `iter < keep_below` and returns the file opened for appending.
fn open_log(path: &Path, keep_below: u64) -> Result<std::fs::File, TrainError> {
    let mut kept = String::new();
    if keep_below > 0 && path.exists() {
        let file = std::fs::File::open(path).map_err(|e| TrainError::io(path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| TrainError::io(path, e))?;
            match serde_json::from_str::<LossReport>(&line) {
                Ok(r) if r.iter < keep_below => {
                    kept.push_str(&line);
                    kept.push('\n');
                }
                _ => {}
            }
        }
    }
    std::fs::write(path, kept).map_err(|e| TrainError::io(path, e))?;
    std::fs::OpenOptions::new().append(true).open(path).map_err(|e| TrainError::io(path, e))
}

fn write_dump(out_dir: &Path, dump: &AbortDump) {
    let dir = out_dir.join("abort");
    if std::fs::create_dir_all(&dir).is_err() {
        return;
    }
    if let Ok(text) = serde_json::to_string_pretty(dump) {
        let _ = std::fs::write(dir.join("dump.json"), text);
    }
    if let Some(pair) = &dump.pair {
        let _ = write_png(&dir.join("input_HE.png"), &pair.he_image);
        let _ = write_png(&dir.join("input_IHC.png"), &pair.ihc_image);
    }
    log::error!("diagnostic dump written to {}", dir.display());
}

/// Trains for `cfg.total_iters` steps (or up to `opts.stop_after`), writing
/// the loss log, checkpoints and similarity artifacts under `cfg.out_dir`.
pub fn fit(cfg: Config, opts: &FitOptions) -> Result<FitSummary, TrainError> {
    let started = Instant::now();
    let root =
        cfg.data_root.clone().ok_or_else(|| TrainError::Config(ConfigError::Invalid("data_root is required for training".into())))?;
    let mut state = match &opts.resume {
        Some(path) => match load_checkpoint(path)? {
            Loaded::Model(state) => {
                let diff = diff_entries(&state.config.entries(), &cfg.entries(), RESUME_EXEMPT);
                if !diff.is_empty() {
                    return Err(TrainError::ConfigMismatch(diff));
                }
                let mut state = *state;
                state.config = cfg.clone();
                state
            }
            Loaded::Identity => {
                return Err(TrainError::Checkpoint { path: path.clone(), message: "cannot resume from an identity stub".into() })
            }
        },
        None => TrainState::new(cfg.clone())?,
    };
    let source = Source::open(&root)?;
    let out = cfg.out_dir.clone();
    let ckpt_dir = out.join("checkpoints");
    let art_dir = out.join("artifacts");
    for d in [&out, &ckpt_dir, &art_dir] {
        std::fs::create_dir_all(d).map_err(|e| TrainError::io(d, e))?;
    }
    std::fs::write(out.join("config.txt"), cfg.to_text()).map_err(|e| TrainError::io(&out, e))?;
    let log_path = out.join(LOG_FILE);
    let mut log_file = open_log(&log_path, state.iter)?;

    let seeds = cfg.seeds();
    let total = cfg.total_iters;
    let end = opts.stop_after.map_or(total, |s| s.min(total));
    let hist_every = cfg.histogram_every();
    let ckpt_every = checkpoint_every(&cfg);
    let mut summary = FitSummary {
        log: log_path.clone(),
        final_checkpoint: None,
        last_checkpoint: None,
        steps_run: 0,
        artifacts: 0,
        last_report: None,
        seconds: 0.0,
    };
    while state.iter < end {
        let t = state.iter;
        let pair = source.get(schedule_index(source.len(), t, seeds.data))?;
        let crop = random_crop_pair(&pair, cfg.crop, derive_seed(seeds.crop, t))?;
        let report = match train_step(&mut state, &crop) {
            Ok(r) => r,
            Err(TrainError::Numeric(dump)) => {
                write_dump(&out, &dump);
                return Err(TrainError::Numeric(dump));
            }
            Err(e) => return Err(e),
        };
        let line = serde_json::to_string(&report).expect("report serializes");
        writeln!(log_file, "{line}").map_err(|e| TrainError::io(&log_path, e))?;
        let done = state.iter;
        if done % hist_every == 0 {
            let report = similarity_report(&state.models, &state.params, &cfg, &crop, done)?;
            write_report(&art_dir, &format!("similarity_{done:06}"), &report)?;
            summary.artifacts += 1;
        }
        if done % ckpt_every == 0 && done < total {
            let path = ckpt_dir.join(format!("ckpt_{done:06}.safetensors"));
            save_checkpoint(&state, &path)?;
            summary.last_checkpoint = Some(path);
        }
        if done % 100 == 0 || done == end {
            log::info!(
                "step {done}/{total} total_g {:.4} gp {:.4} asp {:.4} nce {:.4} adv_d {:.4}",
                report.total_g,
                report.gp,
                report.asp,
                report.patchnce,
                report.adv_d
            );
        }
        summary.steps_run += 1;
        summary.last_report = Some(report);
    }
    log_file.flush().map_err(|e| TrainError::io(&log_path, e))?;
    if state.iter == total {
        let path = ckpt_dir.join("final.safetensors");
        save_checkpoint(&state, &path)?;
        summary.final_checkpoint = Some(path.clone());
        summary.last_checkpoint = Some(path);
    } else if summary.last_checkpoint.as_ref().is_none_or(|_| state.iter % ckpt_every != 0) {
        let path = ckpt_dir.join(format!("ckpt_{:06}.safetensors", state.iter));
        save_checkpoint(&state, &path)?;
        summary.last_checkpoint = Some(path);
    }
    summary.seconds = started.elapsed().as_secs_f64();
    Ok(summary)
}
