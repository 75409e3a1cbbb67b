//! Training state, the per-step update, checkpoints and the run driver.

mod audit;
mod checkpoint;
mod fit;
mod step;

pub use audit::{audit_generator_gradient, GradientAudit};
pub use checkpoint::{load_checkpoint, save_checkpoint, write_identity_stub, Loaded, CHECKPOINT_VERSION};
pub use fit::{fit, FitOptions, FitSummary, LOG_FILE};
pub use step::{
    generator_objective, generator_pass, sample_tap_locations, train_step, AbortDump, Frozen, GeneratorPass, LossReport, Objective, Terms,
    WeightSummary, LOG_SCHEMA,
};

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::data::DataError;
use crate::networks::{Discriminator, Generator, NetworkError, Projector};
use crate::nn::{Adam, AdamConfig, ParamSet, Scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("resumed config differs from the checkpoint:\n{}", .0.join("\n"))]
    ConfigMismatch(Vec<String>),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("non-finite value at step {}: {}", .0.iter, .0.reason)]
    Numeric(Box<AbortDump>),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("loss: {0}")]
    Core(#[from] asp_core::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl TrainError {
    /// Process exit code: 2 config, 3 data, 4 numeric abort, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Config(_) | TrainError::ConfigMismatch(_) => 2,
            TrainError::Data(_) | TrainError::Checkpoint { .. } => 3,
            TrainError::Numeric(_) | TrainError::Core(asp_core::Error::Numeric(_)) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        TrainError::Io { path: path.into(), message: e.to_string() }
    }
}

/// The three networks of a run (structure only).
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub projector: Projector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub g: ParamSet<T>,
    pub d: ParamSet<T>,
    pub f: ParamSet<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { g: self.g.cast(), d: self.d.cast(), f: self.f.cast() }
    }
}

impl Models {
    /// Builds all networks from one generator seeded with `init_seed`
    /// (generator, then discriminator, then projector).
    pub fn build<T: Scalar>(cfg: &Config, init_seed: u64) -> Result<(Self, ModelParams<T>), NetworkError> {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let (generator, g) = Generator::new(cfg.generator_spec(), &mut rng)?;
        let (discriminator, d) = Discriminator::new(cfg.discriminator_spec(), &mut rng)?;
        let (projector, f) = Projector::new(cfg.projector_spec(), &mut rng)?;
        Ok((Self { generator, discriminator, projector }, ModelParams { g, d, f }))
    }
}

/// Everything that a checkpoint stores.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: Config,
    pub models: Models,
    pub params: ModelParams<f32>,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub opt_f: Adam,
    /// Completed steps; the next step is `t = iter`.
    pub iter: u64,
}

impl TrainState {
    pub fn new(config: Config) -> Result<Self, TrainError> {
        let (models, params) = Models::build::<f32>(&config, config.seeds().init)?;
        let adam = AdamConfig { beta1: config.beta1, beta2: config.beta2, ..AdamConfig::default() };
        Ok(Self {
            opt_g: Adam::new(adam, &params.g),
            opt_d: Adam::new(adam, &params.d),
            opt_f: Adam::new(adam, &params.f),
            config,
            models,
            params,
            iter: 0,
        })
    }
}
