use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asp_train::config::Config;
use asp_train::data::{load_paired_dataset, synth_generate, Split};
use asp_train::eval::{evaluate, translate_dir, write_metrics_csv, Translator};
use asp_train::features::{FeatureExtractor, FeatureKind};
use asp_train::train::{fit, load_checkpoint, FitOptions, Loaded, TrainError};
use asp_train::viz::{similarity_report, write_report};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asp", about = "Adaptive supervised PatchNCE stain translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many completed steps (resumable).
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Score a checkpoint on a dataset split and write a metrics CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "tiny")]
        features: FeatureKind,
    },
    /// Translate every PNG in a directory.
    Translate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity heat maps and histogram for one pair.
    Viz {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset root (defaults to the checkpoint's `data_root`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Generate a synthetic paired dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), TrainError> {
    match cli.command {
        Command::Train { config, resume, stop_after } => {
            let cfg = Config::from_file(&config)?;
            let summary = fit(cfg, &FitOptions { resume, stop_after })?;
            println!(
                "ran {} steps in {:.1}s; log {}; checkpoint {}",
                summary.steps_run,
                summary.seconds,
                summary.log.display(),
                summary.last_checkpoint.as_deref().map_or("-".into(), |p| p.display().to_string())
            );
        }
        Command::Eval { ckpt, data, split, out, features } => {
            let translator = Translator::from_checkpoint(&ckpt)?;
            let (manifest, warnings) = load_paired_dataset(&data, split)?;
            for w in &warnings {
                log::warn!("skipping {w}");
            }
            let extractor = FeatureExtractor::select(features);
            let result = evaluate(&translator, &manifest, &extractor)?;
            write_metrics_csv(&out, std::slice::from_ref(&result.row))?;
            let r = &result.row;
            println!(
                "{} {} ({} images, {}): SSIM {:.4} PHV {:.4} FID {:.4} KIDx1000 {:.4}",
                r.dataset,
                r.method,
                result.per_image_ssim.len(),
                result.extractor,
                r.ssim,
                r.phv_avg,
                r.fid,
                r.kid_x1000
            );
        }
        Command::Translate { ckpt, input, out } => {
            let translator = Translator::from_checkpoint(&ckpt)?;
            let outcomes = translate_dir(&translator, &input, &out)?;
            let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
            for o in &outcomes {
                if let Err(e) = &o.result {
                    log::error!("{}: {e}", o.input.display());
                }
            }
            println!("translated {} of {} images into {}", outcomes.len() - failed, outcomes.len(), out.display());
            if failed > 0 {
                return Err(TrainError::Data(asp_train::data::DataError::Shape(format!("{failed} images failed"))));
            }
        }
        Command::Viz { ckpt, pair, out, data } => {
            let Loaded::Model(state) = load_checkpoint(&ckpt)? else {
                return Err(TrainError::Checkpoint { path: ckpt, message: "viz needs a trained model, not an identity stub".into() });
            };
            let root = data.or_else(|| state.config.data_root.clone()).ok_or_else(|| {
                TrainError::Config(asp_train::config::ConfigError::Invalid("no --data given and the checkpoint has no data_root".into()))
            })?;
            let sample = find_pair(&root, &pair)?;
            let report = similarity_report(&state.models, &state.params, &state.config, &sample, state.iter)?;
            write_report(&out, &format!("{pair}_similarity"), &report)?;
            println!("wrote {} heat maps and a histogram to {}", report.maps.len(), out.display());
        }
        Command::Synth { config, out } => {
            let cfg = Config::from_file(&config)?;
            let (train, test) = synth_generate(&cfg.synth, &out)?;
            println!("wrote {} train and {} test pairs to {}", train.len(), test.len(), out.display());
        }
    }
    Ok(())
}

/// Looks the id up in the test split, then the train split.
fn find_pair(root: &Path, id: &str) -> Result<asp_train::data::PairedSample, TrainError> {
    for split in [Split::Test, Split::Train] {
        if let Ok((manifest, _)) = load_paired_dataset(root, split) {
            if manifest.ids.iter().any(|i| i == id) {
                return Ok(manifest.load(id)?);
            }
        }
    }
    Err(TrainError::Data(asp_train::data::DataError::UnknownId(id.to_string())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
