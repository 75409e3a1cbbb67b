//! Networks, data pipeline, training loop, evaluation and artifacts for
//! paired H&E to IHC translation with adaptive supervised PatchNCE.
//!
//! The losses themselves live in `asp-core`; this crate supplies a small CPU
//! tensor engine (`nn`) with hand-written backward passes, the ResNet
//! generator, PatchGAN discriminator and projection heads, and the `asp`
//! command-line tool.

// Layer code passes shapes and strides by hand and indexes channels in loops.
#![allow(clippy::too_many_arguments, clippy::type_complexity, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod eval;
pub mod features;
pub mod networks;
pub mod nn;
pub mod train;
pub mod viz;
