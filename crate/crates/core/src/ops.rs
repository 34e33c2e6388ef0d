//! Linear operators on symmetric matrices induced by a CSVIU model:
//!
//! * `𝒵(U) = Diag(σ̄_xᵀ U σ̄_x)`
//! * `𝒲(U) = Diag(σ̄_xᵀ U σ_x + σ_xᵀ U σ̄_x)` (not positive)
//! * `ϖ(U) = tr{U (σσᵀ + σ_xσ_xᵀ)}`
//! * `ℒ^α(U) = α (AᵀUA + 𝒵(U))`
//!
//! plus their matrix representations in the scaled symmetric basis of
//! [`crate::linalg`] and spectral radii.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CsviuError, Result};
use crate::linalg::{self, svec, svec_dim, svec_pairs, sym_basis, SymMatrix};
use crate::model::CsviuModel;

fn check_side(model: &CsviuModel, u: &SymMatrix) -> Result<()> {
    if u.n() != model.n() {
        return Err(CsviuError::Dimension(format!(
            "operator argument is {}x{}, model state dimension is {}",
            u.n(),
            u.n(),
            model.n()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CsviuError::Domain(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    Ok(())
}

/// `MᵀUM`
pub fn conjugate(m: &DMatrix<f64>, u: &SymMatrix) -> SymMatrix {
    SymMatrix::symmetrize(m.transpose() * u.as_matrix() * m)
}

fn diag_part(m: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_diagonal(&m.diagonal())
}

pub fn op_z(model: &CsviuModel, u: &SymMatrix) -> Result<SymMatrix> {
    check_side(model, u)?;
    let sb = model.sigma_bar_x();
    Ok(diag_part(&(sb.transpose() * u.as_matrix() * sb)))
}

/// Diagonal vector `𝒲_d(U)`.
pub fn op_w_diag(model: &CsviuModel, u: &SymMatrix) -> Result<DVector<f64>> {
    check_side(model, u)?;
    let cross = model.sigma_bar_x().transpose() * u.as_matrix() * model.sigma_x();
    Ok(cross.diagonal() * 2.0)
}

pub fn op_w(model: &CsviuModel, u: &SymMatrix) -> Result<SymMatrix> {
    Ok(SymMatrix::from_diagonal(&op_w_diag(model, u)?))
}

pub fn op_varpi(model: &CsviuModel, u: &SymMatrix) -> Result<f64> {
    check_side(model, u)?;
    Ok(u.trace_with(&model.additive_noise_covariance()))
}

pub fn op_l_alpha(model: &CsviuModel, alpha: f64, u: &SymMatrix) -> Result<SymMatrix> {
    check_alpha(alpha)?;
    let z = op_z(model, u)?;
    let conj = conjugate(model.a(), u);
    Ok((&conj + &z).scale(alpha))
}

/// Entrywise sign with `sign(0) = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&s| f64::from(s)))
    }
}

pub fn sign_vec(x: &[f64]) -> SignVector {
    SignVector(
        x.iter()
            .map(|&v| {
                if v > 0.0 {
                    1
                } else if v < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect(),
    )
}

/// Which operator [`operator_matrix`] should represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `ℒ^α`
    LAlpha,
    /// `α𝔸`, with `𝔸(U) = AᵀUA`
    AConj,
    /// `α𝒵`
    Z,
}

/// Matrix of a linear self-map of the symmetric `n×n` matrices, acting on
/// scaled symmetric vectorizations.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorRep {
    n: usize,
    matrix: DMatrix<f64>,
}

impl OperatorRep {
    /// Builds the representation column by column from the images of the
    /// basis elements.
    pub fn from_fn(n: usize, mut op: impl FnMut(&SymMatrix) -> Result<SymMatrix>) -> Result<Self> {
        let dim = svec_dim(n);
        let mut matrix = DMatrix::zeros(dim, dim);
        for (col, (i, j)) in svec_pairs(n).enumerate() {
            let image = op(&sym_basis(n, i, j))?;
            matrix.set_column(col, &svec(&image));
        }
        Ok(OperatorRep { n, matrix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, u: &SymMatrix) -> SymMatrix {
        linalg::smat(&(&self.matrix * svec(u)), self.n)
    }
}

pub fn operator_matrix(model: &CsviuModel, alpha: f64, kind: OperatorKind) -> Result<OperatorRep> {
    check_alpha(alpha)?;
    let n = model.n();
    match kind {
        OperatorKind::LAlpha => OperatorRep::from_fn(n, |u| op_l_alpha(model, alpha, u)),
        OperatorKind::AConj => OperatorRep::from_fn(n, |u| Ok(conjugate(model.a(), u).scale(alpha))),
        OperatorKind::Z => OperatorRep::from_fn(n, |u| Ok(op_z(model, u)?.scale(alpha))),
    }
}

/// Representation of `U ↦ α((A+GC)ᵀU(A+GC) + 𝒵(U))`.
pub fn closed_loop_matrix(model: &CsviuModel, alpha: f64, gain: &DMatrix<f64>) -> Result<OperatorRep> {
    check_alpha(alpha)?;
    if gain.nrows() != model.n() || gain.ncols() != model.p() {
        return Err(CsviuError::Dimension(format!(
            "gain G is {}x{}, expected {}x{}",
            gain.nrows(),
            gain.ncols(),
            model.n(),
            model.p()
        )));
    }
    let closed = model.a() + gain * model.c();
    OperatorRep::from_fn(model.n(), |u| {
        Ok((&conjugate(&closed, u) + &op_z(model, u)?).scale(alpha))
    })
}

/// `r_σ` of the represented operator.
pub fn spectral_radius(rep: &OperatorRep) -> Result<f64> {
    linalg::spectral_radius_of(rep.matrix())
}

/// Matrix of `(I − α𝔸)^{-1} ∘ 𝒵`; singular `I − α𝔸` is an error.
pub fn resolvent_z_matrix(model: &CsviuModel, alpha: f64) -> Result<DMatrix<f64>> {
    let a_rep = operator_matrix(model, alpha, OperatorKind::AConj)?;
    let z_rep = operator_matrix(model, 1.0, OperatorKind::Z)?;
    let dim = a_rep.dim();
    let lhs = DMatrix::identity(dim, dim) - a_rep.matrix();
    linalg::lu_solve(&lhs, z_rep.matrix(), "I − α𝔸")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar() -> CsviuModel {
        CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0)
    }

    fn one(v: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![v]]).unwrap()
    }

    #[test]
    fn z_operator_examples() {
        assert_abs_diff_eq!(op_z(&scalar(), &one(1.0)).unwrap().max_abs(), 0.09, epsilon = 1e-15);
        assert_eq!(op_z(&scalar(), &one(0.0)).unwrap().max_abs(), 0.0);

        let i2 = DMatrix::identity(2, 2);
        let m = CsviuModel::new(i2.clone(), i2.clone(), i2.clone(), i2.clone(), i2).unwrap();
        let u = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
        let z = op_z(&m, &u).unwrap();
        assert_eq!(z.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 5.0]]);
    }

    #[test]
    fn w_operator_examples() {
        assert_abs_diff_eq!(op_w(&scalar(), &one(1.0)).unwrap().max_abs(), 0.12, epsilon = 1e-15);
        assert_eq!(op_w(&scalar(), &one(0.0)).unwrap().max_abs(), 0.0);
        let flipped = CsviuModel::scalar(0.5, -0.2, 0.3, 0.1, 1.0);
        let w = op_w(&flipped, &one(1.0)).unwrap();
        assert_abs_diff_eq!(w.as_matrix()[(0, 0)], -0.12, epsilon = 1e-15);
    }

    #[test]
    fn varpi_examples() {
        assert_abs_diff_eq!(op_varpi(&scalar(), &one(1.0)).unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(op_varpi(&scalar(), &one(0.0)).unwrap(), 0.0);
        let l = 1.0 / (1.0 - 0.306);
        assert_abs_diff_eq!(op_varpi(&scalar(), &one(l)).unwrap(), 0.05 * l, epsilon = 1e-15);
    }

    #[test]
    fn l_alpha_examples() {
        let l = op_l_alpha(&scalar(), 0.9, &one(1.0)).unwrap();
        assert_abs_diff_eq!(l.as_matrix()[(0, 0)], 0.306, epsilon = 1e-15);
        assert_eq!(op_l_alpha(&scalar(), 0.0, &one(3.0)).unwrap().max_abs(), 0.0);
        let no_bar = CsviuModel::scalar(0.5, 0.2, 0.0, 0.1, 1.0);
        let l = op_l_alpha(&no_bar, 0.9, &one(2.0)).unwrap();
        assert_abs_diff_eq!(l.as_matrix()[(0, 0)], 0.9 * 0.25 * 2.0, epsilon = 1e-15);
        assert!(matches!(op_l_alpha(&scalar(), -0.1, &one(1.0)), Err(CsviuError::Domain(_))));
    }

    #[test]
    fn wrong_side_is_dimension_error() {
        let u = SymMatrix::identity(2);
        assert!(matches!(op_z(&scalar(), &u), Err(CsviuError::Dimension(_))));
        assert!(matches!(op_varpi(&scalar(), &u), Err(CsviuError::Dimension(_))));
    }

    #[test]
    fn sign_vector_examples() {
        assert_eq!(sign_vec(&[1.5, -0.2, 0.0]).entries(), &[1, -1, 0]);
        assert_eq!(sign_vec(&[0.0, 0.0]).entries(), &[0, 0]);
        assert_eq!(sign_vec(&[-3.0]).entries(), &[-1]);
        assert_eq!(sign_vec(&[-0.0]).entries(), &[0]);
    }

    #[test]
    fn operator_matrix_examples() {
        let rep = operator_matrix(&scalar(), 0.9, OperatorKind::LAlpha).unwrap();
        assert_eq!(rep.dim(), 1);
        assert_abs_diff_eq!(rep.matrix()[(0, 0)], 0.306, epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_radius(&rep).unwrap(), 0.306, epsilon = 1e-15);

        let no_bar = CsviuModel::scalar(0.5, 0.2, 0.0, 0.1, 1.0);
        let z = operator_matrix(&no_bar, 1.0, OperatorKind::Z).unwrap();
        assert_eq!(z.matrix().amax(), 0.0);
        assert_eq!(spectral_radius(&z).unwrap(), 0.0);
    }

    #[test]
    fn conjugation_radius_is_product_of_eigenvalues() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.8]));
        let z = DMatrix::zeros(2, 2);
        let m = CsviuModel::new(a, z.clone(), z, DMatrix::identity(2, 2), DMatrix::identity(2, 2))
            .unwrap();
        let rep = operator_matrix(&m, 1.0, OperatorKind::LAlpha).unwrap();
        assert_eq!(rep.dim(), 3);
        assert_abs_diff_eq!(spectral_radius(&rep).unwrap(), 0.64, epsilon = 1e-14);
    }

    #[test]
    fn closed_loop_with_zero_gain_is_l_alpha() {
        let g = DMatrix::zeros(1, 1);
        let cl = closed_loop_matrix(&scalar(), 0.7, &g).unwrap();
        let l = operator_matrix(&scalar(), 0.7, OperatorKind::LAlpha).unwrap();
        assert_eq!(cl, l);
        assert!(matches!(
            closed_loop_matrix(&scalar(), 0.7, &DMatrix::zeros(2, 1)),
            Err(CsviuError::Dimension(_))
        ));
    }

    #[test]
    fn resolvent_singularity_is_reported() {
        let m = CsviuModel::scalar(1.0, 0.0, 0.3, 0.1, 1.0);
        assert!(matches!(
            resolvent_z_matrix(&m, 1.0),
            Err(CsviuError::SingularOperator(_))
        ));
        let r = resolvent_z_matrix(&scalar(), 0.9).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 0.09 / (1.0 - 0.9 * 0.25), epsilon = 1e-15);
    }
}
