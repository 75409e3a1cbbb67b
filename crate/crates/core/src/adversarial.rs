//! Least-squares GAN objectives on patch logit grids.

use alloc::vec::Vec;

use crate::error::{Error, Result};

fn check(logits: &[f64], what: &'static str) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(what));
    }
    Ok(())
}

/// `mean (fake - 1)^2`.
pub fn adversarial_g_loss(fake_logits: &[f64]) -> Result<f64> {
    Ok(adversarial_g_loss_with_grad(fake_logits)?.0)
}

pub fn adversarial_g_loss_with_grad(fake_logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(fake_logits, "fake logits")?;
    let n = fake_logits.len() as f64;
    let value = fake_logits.iter().map(|f| (f - 1.0) * (f - 1.0)).sum::<f64>() / n;
    let grad = fake_logits.iter().map(|f| 2.0 * (f - 1.0) / n).collect();
    Ok((value, grad))
}

/// `0.5 mean (real - 1)^2 + 0.5 mean fake^2`.
pub fn adversarial_d_loss(real_logits: &[f64], fake_logits: &[f64]) -> Result<f64> {
    Ok(adversarial_d_loss_with_grad(real_logits, fake_logits)?.value)
}

/// Discriminator loss value with gradients for both logit grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorLoss {
    pub value: f64,
    pub grad_real: Vec<f64>,
    pub grad_fake: Vec<f64>,
}

pub fn adversarial_d_loss_with_grad(real_logits: &[f64], fake_logits: &[f64]) -> Result<DiscriminatorLoss> {
    check(real_logits, "real logits")?;
    check(fake_logits, "fake logits")?;
    let nr = real_logits.len() as f64;
    let nf = fake_logits.len() as f64;
    let real = real_logits.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / nr;
    let fake = fake_logits.iter().map(|f| f * f).sum::<f64>() / nf;
    Ok(DiscriminatorLoss {
        value: 0.5 * real + 0.5 * fake,
        grad_real: real_logits.iter().map(|r| (r - 1.0) / nr).collect(),
        grad_fake: fake_logits.iter().map(|f| f / nf).collect(),
    })
}
