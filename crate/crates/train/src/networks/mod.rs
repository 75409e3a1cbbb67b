//! Generator, PatchGAN discriminator and patch projection heads.

mod discriminator;
mod generator;
mod projector;

pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use generator::{Generator, GeneratorSpec};
pub use projector::{Projector, ProjectorCache, ProjectorSpec};

use thiserror::Error;

/// Standard deviation of the normal weight initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("invalid spec: {0}")]
    Spec(String),
}

pub(crate) fn conv_params<T: crate::nn::Scalar>(
    params: &mut crate::nn::ParamSet<T>,
    rng: &mut impl rand::Rng,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> crate::nn::Op {
    let weight = params.push_normal(format!("{name}.weight"), vec![cout, cin, k, k], INIT_STD, rng);
    let bias = Some(params.push_zeros(format!("{name}.bias"), vec![cout]));
    crate::nn::Op::Conv(crate::nn::Conv { weight, bias, cin, cout, k, stride, pad })
}
