//! Perturbed Lyapunov equation `(I − ℒ^α)(U) = Q`, the critical parameter
//! ᾱ, and the finite-horizon backward recursions for `P_k` and `g_k`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CsviuError, Result};
use crate::linalg::{self, smat, svec, SymMatrix};
use crate::model::CsviuModel;
use crate::ops::{self, OperatorKind};

/// Reported as ᾱ when both conditions hold for every α tried.
pub const DEFAULT_ALPHA_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    Direct,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovSolution {
    #[serde(rename = "L")]
    pub l: SymMatrix,
    pub alpha: f64,
    pub method: SolveMethod,
    /// `max|L − ℒ^α(L) − Q|`
    pub residual: f64,
    pub iterations: usize,
    pub spectral_radius: f64,
}

fn check_weight(model: &CsviuModel, q: &SymMatrix, name: &str) -> Result<()> {
    if q.n() != model.n() {
        return Err(CsviuError::Dimension(format!(
            "{name} is {}x{}, expected {}x{}",
            q.n(),
            q.n(),
            model.n(),
            model.n()
        )));
    }
    if !q.is_psd() {
        return Err(CsviuError::Value(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

/// `max|L − ℒ^α(L) − Q|`, evaluated through the operator definition.
pub fn lyapunov_residual(model: &CsviuModel, alpha: f64, l: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    let image = ops::op_l_alpha(model, alpha, l)?;
    Ok((&(l - &image) - q).max_abs())
}

/// Solves `(I − ℒ^α)(U) = Q` by a dense linear solve without first checking
/// the spectral radius. The result need not be PSD when `r_σ(ℒ^α) ≥ 1`.
pub fn solve_direct_unchecked(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<SymMatrix> {
    let rep = ops::operator_matrix(model, alpha, OperatorKind::LAlpha)?;
    let dim = rep.dim();
    let lhs = DMatrix::identity(dim, dim) - rep.matrix();
    let rhs = DMatrix::from_column_slice(dim, 1, svec(q).as_slice());
    let x = linalg::lu_solve(&lhs, &rhs, "I − ℒ^α")?;
    Ok(smat(&x.column(0).into_owned(), model.n()))
}

pub fn solve_lyapunov(
    model: &CsviuModel,
    alpha: f64,
    q: &SymMatrix,
    method: SolveMethod,
    tol: f64,
    max_iter: usize,
) -> Result<LyapunovSolution> {
    check_weight(model, q, "Q")?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CsviuError::Domain("solver tolerance must be positive".into()));
    }
    let rep = ops::operator_matrix(model, alpha, OperatorKind::LAlpha)?;
    let radius = ops::spectral_radius(&rep)?;
    if radius >= 1.0 {
        return Err(CsviuError::NotStable {
            spectral_radius: radius,
            context: format!("r_σ(ℒ^α) at α = {alpha}"),
        });
    }

    let (l, iterations) = match method {
        SolveMethod::Direct => (solve_direct_unchecked(model, alpha, q)?, 0),
        SolveMethod::FixedPoint => {
            let qv = svec(q);
            let mut u = qv.clone();
            let mut converged = None;
            for it in 1..=max_iter {
                let next = rep.matrix() * &u + &qv;
                let step = (&next - &u).amax();
                u = next;
                if step <= tol {
                    converged = Some(it);
                    break;
                }
            }
            let it = converged.ok_or_else(|| {
                CsviuError::Convergence(format!(
                    "fixed-point iteration hit max_iter = {max_iter} with r_σ(ℒ^α) = {radius}"
                ))
            })?;
            (smat(&u, model.n()), it)
        }
    };

    let residual = lyapunov_residual(model, alpha, &l, q)?;
    Ok(LyapunovSolution {
        l,
        alpha,
        method,
        residual,
        iterations,
        spectral_radius: radius,
    })
}

/// Direct solve with the default tolerances.
pub fn solve(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<LyapunovSolution> {
    solve_lyapunov(model, alpha, q, SolveMethod::Direct, 1e-12, 100_000)
}

fn alpha_feasible(model: &CsviuModel, a_radius: f64, alpha: f64) -> Result<bool> {
    let rep = ops::operator_matrix(model, alpha, OperatorKind::LAlpha)?;
    Ok(ops::spectral_radius(&rep)? < 1.0 && a_radius * alpha < 1.0)
}

/// `ᾱ = sup{α : r_σ(ℒ^α) < 1 and r_σ(A) < 1/α}` by bisection, capped at
/// [`DEFAULT_ALPHA_CAP`].
pub fn critical_alpha(model: &CsviuModel, tol: f64) -> Result<f64> {
    critical_alpha_with_cap(model, tol, DEFAULT_ALPHA_CAP)
}

pub fn critical_alpha_with_cap(model: &CsviuModel, tol: f64, cap: f64) -> Result<f64> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CsviuError::Domain("bisection tolerance must be positive".into()));
    }
    let a_radius = linalg::spectral_radius_of(model.a())?;

    let mut lo = 0.0;
    let mut hi = 1.0_f64.min(cap);
    loop {
        if !alpha_feasible(model, a_radius, hi)? {
            break;
        }
        if hi >= cap {
            return Ok(cap);
        }
        lo = hi;
        hi = (hi * 2.0).min(cap);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if alpha_feasible(model, a_radius, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Backward solutions of `P_k = ℒ^α(P_{k+1}) + Q` and
/// `g_k = α(g_{k+1} + ϖ(P_{k+1}))` for `k = κ−1, …, 0` (zero input).
#[derive(Clone, Debug, Serialize)]
pub struct RecursionTriple {
    pub p_seq: Vec<SymMatrix>,
    pub g_seq: Vec<f64>,
    pub kappa: usize,
    pub alpha: f64,
}

pub fn backward_recursion(
    model: &CsviuModel,
    alpha: f64,
    q: &SymMatrix,
    kappa: usize,
    phi: &SymMatrix,
    gamma: f64,
) -> Result<RecursionTriple> {
    check_weight(model, q, "Q")?;
    check_weight(model, phi, "Phi")?;
    if kappa == 0 {
        return Err(CsviuError::Domain("horizon kappa must be at least 1".into()));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(CsviuError::Domain("terminal constant gamma must be nonnegative".into()));
    }
    let mut p_seq = vec![SymMatrix::zeros(model.n()); kappa + 1];
    let mut g_seq = vec![0.0; kappa + 1];
    p_seq[kappa] = phi.clone();
    g_seq[kappa] = gamma;
    for k in (0..kappa).rev() {
        p_seq[k] = &ops::op_l_alpha(model, alpha, &p_seq[k + 1])? + q;
        g_seq[k] = alpha * (g_seq[k + 1] + ops::op_varpi(model, &p_seq[k + 1])?);
    }
    Ok(RecursionTriple {
        p_seq,
        g_seq,
        kappa,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn scalar() -> CsviuModel {
        CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0)
    }

    fn diag_model() -> CsviuModel {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.8]));
        let z = DMatrix::zeros(2, 2);
        let i = DMatrix::identity(2, 2);
        CsviuModel::new(a, z.clone(), z, i.clone(), i).unwrap()
    }

    #[test]
    fn scalar_solution_is_geometric_series() {
        let q = SymMatrix::identity(1);
        for method in [SolveMethod::Direct, SolveMethod::FixedPoint] {
            let s = solve_lyapunov(&scalar(), 0.9, &q, method, 1e-12, 100_000).unwrap();
            assert_abs_diff_eq!(s.l.as_matrix()[(0, 0)], 1.0 / (1.0 - 0.306), epsilon = 1e-11);
            assert!(s.residual <= 1e-9);
        }
    }

    #[test]
    fn zero_alpha_returns_weight() {
        let q = SymMatrix::from_rows(&[vec![2.0]]).unwrap();
        let s = solve(&scalar(), 0.0, &q).unwrap();
        assert_eq!(s.l, q);
        let fp = solve_lyapunov(&scalar(), 0.0, &q, SolveMethod::FixedPoint, 1e-12, 10).unwrap();
        assert_eq!(fp.l, q);
    }

    #[test]
    fn decoupled_two_state_solution() {
        let s = solve(&diag_model(), 1.0, &SymMatrix::identity(2)).unwrap();
        let l = s.l.as_matrix();
        assert_abs_diff_eq!(l[(0, 0)], 1.0 / 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(1, 1)], 1.0 / 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unstable_alpha_is_reported_with_radius() {
        match solve(&scalar(), 3.0, &SymMatrix::identity(1)) {
            Err(CsviuError::NotStable { spectral_radius, .. }) => {
                assert_abs_diff_eq!(spectral_radius, 1.02, epsilon = 1e-12)
            }
            other => panic!("expected NotStable, got {other:?}"),
        }
    }

    #[test]
    fn fixed_point_iteration_cap() {
        let r = solve_lyapunov(&scalar(), 2.9, &SymMatrix::identity(1), SolveMethod::FixedPoint, 1e-12, 5);
        assert!(matches!(r, Err(CsviuError::Convergence(_))));
    }

    #[test]
    fn critical_alpha_examples() {
        assert_abs_diff_eq!(critical_alpha(&scalar(), 1e-9).unwrap(), 2.0, epsilon = 1e-8);
        let z = DMatrix::zeros(1, 1);
        let dead = CsviuModel::new(z.clone(), z.clone(), z.clone(), DMatrix::identity(1, 1), DMatrix::identity(1, 1))
            .unwrap();
        assert_eq!(critical_alpha(&dead, 1e-9).unwrap(), DEFAULT_ALPHA_CAP);
        let a09 = CsviuModel::scalar(0.9, 0.1, 0.0, 0.1, 1.0);
        assert_abs_diff_eq!(critical_alpha(&a09, 1e-10).unwrap(), 1.0 / 0.9, epsilon = 1e-8);
    }

    #[test]
    fn recursion_examples() {
        let q = SymMatrix::identity(1);
        let zero = SymMatrix::zeros(1);
        let t = backward_recursion(&scalar(), 0.9, &q, 2, &zero, 0.0).unwrap();
        let p: Vec<f64> = t.p_seq.iter().map(|p| p.as_matrix()[(0, 0)]).collect();
        assert_abs_diff_eq!(p[2], 0.0);
        assert_abs_diff_eq!(p[1], 1.0);
        assert_abs_diff_eq!(p[0], 1.306, epsilon = 1e-15);
        // g_1 = 0.9 (0 + ϖ(0)), g_0 = 0.9 (g_1 + ϖ(1))
        assert_abs_diff_eq!(t.g_seq[1], 0.0);
        assert_abs_diff_eq!(t.g_seq[0], 0.9 * 0.05, epsilon = 1e-15);

        let one = backward_recursion(&scalar(), 0.9, &q, 1, &zero, 0.0).unwrap();
        assert_eq!(one.p_seq[0], q);

        let long = backward_recursion(&scalar(), 0.9, &q, 200, &zero, 0.0).unwrap();
        let l = solve(&scalar(), 0.9, &q).unwrap().l;
        assert!((&long.p_seq[0] - &l).max_abs() < 1e-9);
    }

    #[test]
    fn recursion_rejects_bad_inputs() {
        let q = SymMatrix::identity(1);
        assert!(matches!(
            backward_recursion(&scalar(), 0.9, &q, 0, &q, 0.0),
            Err(CsviuError::Domain(_))
        ));
        assert!(matches!(
            backward_recursion(&scalar(), 0.9, &SymMatrix::identity(2), 3, &q, 0.0),
            Err(CsviuError::Dimension(_))
        ));
    }
}
