//! Patch-contrastive losses and image metrics for paired stain translation.
//!
//! Everything in this crate is a pure function over slices: the InfoNCE family
//! (PatchNCE, supervised PatchNCE and its adaptively weighted form), the
//! similarity weight and schedule families, Gaussian-pyramid and
//! least-squares adversarial losses, and the SSIM / PHV / FID / KID metrics.
//! Losses return analytic gradients alongside their values so that any
//! network framework can backpropagate them.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` style checks are how NaN gets rejected alongside the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adaptive;
pub mod adversarial;
pub mod contrastive;
pub mod embedding;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pyramid;
pub mod sampling;
pub mod schedule;
pub mod similarity;

pub use adaptive::{adaptive_weight, schedule_fn, weight_fn, AdaptiveConfig, ScheduleFamily, WeightFamily, WeightNormalization};
pub use contrastive::{asp_loss, info_nce, patch_nce_loss, sp_loss, ContrastiveConfig};
pub use embedding::{EmbeddingStack, LayerEmbeddings};
pub use error::{Error, Result};
pub use image::Image;
pub use similarity::{similarity_heatmap, similarity_histogram, Histogram, SimilarityMap};
