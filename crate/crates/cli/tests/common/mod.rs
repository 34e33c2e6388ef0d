#![allow(dead_code)]

use csviu_core::ops::{operator_matrix, spectral_radius, OperatorKind};
use csviu_core::CsviuModel;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn scalar_model() -> CsviuModel {
    CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0)
}

/// Gaussian model with `C = I`, then `A` and `σ̄_x` rescaled together so that
/// `r_σ(ℒ^α)` equals `target`.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, alpha: f64, target: f64) -> CsviuModel {
    let a = gaussian(rng, n, n);
    let sx = gaussian(rng, n, n) * 0.3;
    let sbx = gaussian(rng, n, n) * 0.5;
    let r = 1 + rng.random_range(0..n);
    let sigma = gaussian(rng, n, r) * 0.3;
    let c = DMatrix::identity(n, n);
    let raw = CsviuModel::new(a.clone(), sx.clone(), sbx.clone(), sigma.clone(), c.clone()).unwrap();
    let rho = spectral_radius(&operator_matrix(&raw, alpha, OperatorKind::LAlpha).unwrap()).unwrap();
    let s = (target / rho).sqrt();
    CsviuModel::new(a * s, sx, sbx * s, sigma, c).unwrap()
}
