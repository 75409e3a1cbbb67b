use alloc::format;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::FeatureSet;
use crate::error::{Error, Result};

const COV_EPS: f64 = 1e-6;

fn mean_and_cov(set: &FeatureSet) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (set.len(), set.dim());
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += DVector::from_row_slice(set.row(i));
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let c = DVector::from_row_slice(set.row(i)) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    for k in 0..d {
        cov[(k, k)] += COV_EPS;
    }
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Frechet distance between Gaussians fitted to two feature sets:
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// `1e-6` is added to both covariance diagonals. The cross term is evaluated
/// as `tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))`, which keeps every square root
/// symmetric.
pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyInput("FID needs at least two samples per set"));
    }
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("feature dimensions {} vs {}", a.dim(), b.dim())));
    }
    let (mu_a, cov_a) = mean_and_cov(a);
    let (mu_b, cov_b) = mean_and_cov(b);
    let root_a = sym_sqrt(&cov_a);
    let mut inner = &root_a * &cov_b * &root_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let cross: f64 = eig.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))).sum();
    let diff = (&mu_a - &mu_b).norm_squared();
    let value = diff + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::Numeric("fid"));
    }
    Ok(value)
}
