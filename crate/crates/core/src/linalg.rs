//! Dense symmetric-matrix utilities shared by the operator, solver and norm
//! modules.
//!
//! Symmetric matrices are vectorized in the scaled upper-triangular basis:
//! diagonal entries as-is, off-diagonal entries multiplied by √2. With this
//! scaling `⟨svec(U), svec(V)⟩ = tr(UV)`, so the matrix of a self-map on
//! symmetric matrices is expressed in an orthonormal basis.

use std::f64::consts::SQRT_2;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CsviuError, Result};

/// Tolerance used for positive-semidefiniteness queries, relative to
/// `max(1, max|u_ij|)`.
pub const PSD_TOL: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 10_000;

/// Symmetric `n×n` matrix. Construction averages `(U + Uᵀ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CsviuError::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CsviuError::Value(
                "symmetric matrix has non-finite entries".into(),
            ));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without validation; callers guarantee squareness.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows, "matrix")?)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix(DMatrix::from_diagonal(d))
    }

    /// `MᵀM`, the default output weight when `M = C`.
    pub fn gram(m: &DMatrix<f64>) -> Self {
        Self::symmetrize(m.transpose() * m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.n() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL * self.max_abs().max(1.0)
    }

    pub fn is_pd(&self) -> bool {
        self.min_eigenvalue() > PSD_TOL * self.max_abs().max(1.0)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// `xᵀ U x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    pub fn scale(&self, a: f64) -> Self {
        SymMatrix(&self.0 * a)
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.0
            .clone()
            .try_inverse()
            .ok_or_else(|| CsviuError::SingularOperator("symmetric matrix is singular".into()))
    }

    pub fn trace_with(&self, m: &DMatrix<f64>) -> f64 {
        (&self.0 * m).trace()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Builds a dense matrix from row arrays, rejecting ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(CsviuError::Dimension(format!(
            "{name}: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Dimension of the symmetric-vectorization space, `n(n+1)/2`.
pub fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Index pairs `(i, j)`, `i ≤ j`, in basis order.
pub fn svec_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i..n).map(move |j| (i, j)))
}

pub fn svec(u: &SymMatrix) -> DVector<f64> {
    let n = u.n();
    let m = u.as_matrix();
    DVector::from_iterator(
        svec_dim(n),
        svec_pairs(n).map(|(i, j)| if i == j { m[(i, i)] } else { SQRT_2 * m[(i, j)] }),
    )
}

pub fn smat(v: &DVector<f64>, n: usize) -> SymMatrix {
    debug_assert_eq!(v.len(), svec_dim(n));
    let mut m = DMatrix::zeros(n, n);
    for (idx, (i, j)) in svec_pairs(n).enumerate() {
        if i == j {
            m[(i, i)] = v[idx];
        } else {
            let x = v[idx] / SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    SymMatrix(m)
}

/// Orthonormal basis element `E_ij` of the symmetric matrices.
pub fn sym_basis(n: usize, i: usize, j: usize) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    if i == j {
        m[(i, i)] = 1.0;
    } else {
        m[(i, j)] = 1.0 / SQRT_2;
        m[(j, i)] = 1.0 / SQRT_2;
    }
    SymMatrix(m)
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    if m.nrows() != m.ncols() {
        return Err(CsviuError::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CsviuError::Convergence(
            "eigenvalue routine received non-finite entries".into(),
        ));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        CsviuError::Convergence(format!(
            "Schur decomposition of a {}x{} matrix did not converge",
            m.nrows(),
            m.ncols()
        ))
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `max |λ|` over the eigenvalues of `m`.
pub fn spectral_radius_of(m: &DMatrix<f64>) -> Result<f64> {
    Ok(complex_eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `m x = b` by LU, reporting singularity as [`CsviuError::SingularOperator`].
pub fn lu_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| CsviuError::SingularOperator(format!("{what} is singular")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CsviuError::SingularOperator(format!(
            "{what} is numerically singular"
        )));
    }
    Ok(x)
}

/// Sum with pairwise reduction; the result depends only on the order of
/// `values`, never on how a parallel schedule split the work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
