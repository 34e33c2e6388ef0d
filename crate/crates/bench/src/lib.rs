//! Fixture models shared by the benchmarks.

use csviu_core::CsviuModel;
use nalgebra::DMatrix;

pub fn scalar_model() -> CsviuModel {
    CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0)
}

/// Deterministic n-state model with a tridiagonal `A` of spectral radius
/// below 0.8 and diagonal multiplicative noise.
pub fn banded_model(n: usize) -> CsviuModel {
    let a = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 0.4,
        1 => 0.15,
        _ => 0.0,
    });
    let sx = DMatrix::from_diagonal_element(n, n, 0.1);
    let sbx = DMatrix::from_fn(n, n, |i, j| if i == j { 0.2 } else if j == i + 1 { 0.05 } else { 0.0 });
    let sigma = DMatrix::from_fn(n, 1, |i, _| 0.1 + 0.01 * i as f64);
    CsviuModel::new(a, sx, sbx, sigma, DMatrix::identity(n, n)).expect("finite fixture")
}
