//! Similarity weight families `h`, schedule families `g`, and the scheduled
//! per-location weight `w_t = (1 - g(t/T)) + g(t/T) * h(v . v+)`.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::dot;
use crate::error::{Error, Result};

/// Slack allowed on inputs that should lie in a closed interval.
pub const DOMAIN_SLACK: f64 = 1e-6;

/// Monotone map from anchor-positive cosine similarity to a weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum WeightFamily {
    /// Constant 1; recovers the unweighted supervised loss.
    Zero,
    /// `(C + 1) / 2`.
    Linear,
    /// `1 / (1 + exp(-k C))`.
    Sigmoid { steepness: f64 },
    /// `clamp((C - lower) / (upper - lower), 0, 1)`.
    Lambda { lower: f64, upper: f64 },
}

impl WeightFamily {
    pub const DEFAULT_SIGMOID: WeightFamily = WeightFamily::Sigmoid { steepness: 10.0 };
    pub const DEFAULT_LAMBDA: WeightFamily = WeightFamily::Lambda { lower: 0.0, upper: 0.5 };

    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Zero => "zero",
            WeightFamily::Linear => "linear",
            WeightFamily::Sigmoid { .. } => "sigmoid",
            WeightFamily::Lambda { .. } => "lambda",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFamily::Sigmoid { steepness } if !(steepness > 0.0 && steepness.is_finite()) => {
                Err(Error::Config(format!("sigmoid steepness must be positive, got {steepness}")))
            }
            WeightFamily::Lambda { lower, upper } if !(upper > lower) => {
                Err(Error::Config(format!("lambda breakpoints must satisfy lower < upper, got {lower} and {upper}")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates `h(similarity)`.
    pub fn weight(&self, similarity: f64) -> Result<f64> {
        let c = clamp_to(similarity, -1.0, 1.0, "similarity")?;
        Ok(match *self {
            WeightFamily::Zero => 1.0,
            WeightFamily::Linear => (c + 1.0) / 2.0,
            WeightFamily::Sigmoid { steepness } => 1.0 / (1.0 + libm::exp(-steepness * c)),
            WeightFamily::Lambda { lower, upper } => ((c - lower) / (upper - lower)).clamp(0.0, 1.0),
        })
    }
}

impl FromStr for WeightFamily {
    type Err = Error;

    /// Parses a family name into its default parameterization.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(WeightFamily::Zero),
            "linear" => Ok(WeightFamily::Linear),
            "sigmoid" => Ok(WeightFamily::DEFAULT_SIGMOID),
            "lambda" => Ok(WeightFamily::DEFAULT_LAMBDA),
            other => Err(Error::Config(format!("unknown weight family `{other}`"))),
        }
    }
}

/// Non-decreasing map from training progress `t/T` to the mixing factor `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ScheduleFamily {
    /// Constant 0: weights stay uniform for the whole run.
    Uniform,
    /// Identity ramp.
    Linear,
    /// Zero until `start`, then a linear ramp reaching 1 at the end of training.
    Top { start: f64 },
}

impl ScheduleFamily {
    pub const DEFAULT_TOP: ScheduleFamily = ScheduleFamily::Top { start: 0.5 };

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleFamily::Uniform => "uniform",
            ScheduleFamily::Linear => "linear",
            ScheduleFamily::Top { .. } => "top",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScheduleFamily::Top { start } if !(0.0..1.0).contains(&start) => {
                Err(Error::Config(format!("top schedule start must lie in [0, 1), got {start}")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates `g(progress)`.
    pub fn value(&self, progress: f64) -> Result<f64> {
        let u = clamp_to(progress, 0.0, 1.0, "progress")?;
        Ok(match *self {
            ScheduleFamily::Uniform => 0.0,
            ScheduleFamily::Linear => u,
            ScheduleFamily::Top { start } => {
                if u < start {
                    0.0
                } else {
                    (u - start) / (1.0 - start)
                }
            }
        })
    }
}

impl FromStr for ScheduleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ScheduleFamily::Uniform),
            "linear" => Ok(ScheduleFamily::Linear),
            "top" => Ok(ScheduleFamily::DEFAULT_TOP),
            other => Err(Error::Config(format!("unknown schedule family `{other}`"))),
        }
    }
}

/// How the per-layer weights are normalized by `W_t^l = sum_s w_t^{l,s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNormalization {
    /// Normalized weights sum to 1 per layer (a weighted mean over locations).
    #[default]
    SumToOne,
    /// Normalized weights average to 1 per layer and per-location terms are summed.
    MeanToOne,
}

impl FromStr for WeightNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_to_one" => Ok(WeightNormalization::SumToOne),
            "mean_to_one" => Ok(WeightNormalization::MeanToOne),
            other => Err(Error::Config(format!("unknown weight normalization `{other}`"))),
        }
    }
}

/// Everything that determines one adaptive variant at one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub weight_family: WeightFamily,
    pub schedule_family: ScheduleFamily,
    pub current_iter: u64,
    pub total_iters: u64,
    #[serde(default)]
    pub normalization: WeightNormalization,
}

impl AdaptiveConfig {
    pub fn new(weight_family: WeightFamily, schedule_family: ScheduleFamily, current_iter: u64, total_iters: u64) -> Result<Self> {
        let cfg = Self { weight_family, schedule_family, current_iter, total_iters, normalization: WeightNormalization::SumToOne };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configuration that reduces the adaptive loss to the plain supervised one.
    pub fn uniform(total_iters: u64) -> Self {
        Self {
            weight_family: WeightFamily::Zero,
            schedule_family: ScheduleFamily::Uniform,
            current_iter: 0,
            total_iters: total_iters.max(1),
            normalization: WeightNormalization::SumToOne,
        }
    }

    pub fn with_normalization(mut self, normalization: WeightNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Same variant, evaluated at iteration `t`.
    pub fn at_iter(mut self, t: u64) -> Result<Self> {
        self.current_iter = t;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return Err(Error::Config("total_iters must be positive".into()));
        }
        if self.current_iter > self.total_iters {
            return Err(Error::Config(format!("current_iter {} exceeds total_iters {}", self.current_iter, self.total_iters)));
        }
        self.weight_family.validate()?;
        self.schedule_family.validate()
    }

    /// `t / T`.
    pub fn progress(&self) -> f64 {
        self.current_iter as f64 / self.total_iters as f64
    }

    /// `g(t / T)`.
    pub fn schedule_value(&self) -> Result<f64> {
        self.schedule_family.value(self.progress())
    }

    /// `w_t` for a given anchor-positive similarity.
    pub fn weight_for_similarity(&self, similarity: f64) -> Result<f64> {
        let g = self.schedule_value()?;
        let h = self.weight_family.weight(similarity)?;
        Ok(mix(g, h))
    }

    /// Short name such as `lambda_linear`.
    pub fn variant_name(&self) -> String {
        format!("{}_{}", self.weight_family.name(), self.schedule_family.name())
    }
}

impl fmt::Display for AdaptiveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.weight_family.name(), self.schedule_family.name())
    }
}

#[inline]
pub(crate) fn mix(g: f64, h: f64) -> f64 {
    (1.0 - g) * 1.0 + g * h
}

fn clamp_to(x: f64, lo: f64, hi: f64, what: &'static str) -> Result<f64> {
    if !x.is_finite() || x < lo - DOMAIN_SLACK || x > hi + DOMAIN_SLACK {
        return Err(Error::Domain { what, value: x });
    }
    Ok(x.clamp(lo, hi))
}

/// `h(similarity)` for the given family.
pub fn weight_fn(similarity: f64, family: &WeightFamily) -> Result<f64> {
    family.weight(similarity)
}

/// `g(progress)` for the given family.
pub fn schedule_fn(progress: f64, family: &ScheduleFamily) -> Result<f64> {
    family.value(progress)
}

/// Scheduled weight of one anchor-positive pair.
pub fn adaptive_weight(anchor: &[f64], positive: &[f64], adaptive: &AdaptiveConfig) -> Result<f64> {
    if anchor.len() != positive.len() {
        return Err(Error::Shape(format!("anchor has dimension {} but positive has {}", anchor.len(), positive.len())));
    }
    adaptive.validate()?;
    adaptive.weight_for_similarity(dot(anchor, positive))
}
