//! Closed-form energy and power quantities built on the Lyapunov solution
//! `L^α = (I − ℒ^α)^{-1}(Q)`.
//!
//! The closed forms `α/(1−α)·ϖ(L^α)` and `ϖ(L)` account for the
//! state-independent noise only. The sign-dependent cross term
//! `⟨𝒲_d(L), E|x_k|⟩` is exactly zero when [`CsviuModel::cross_operator_vanishes`];
//! otherwise the Monte Carlo estimators in [`crate::sim`] will differ from
//! these values. [`NormReport::closed_form_exact`] records which case applies.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CsviuError, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::CsviuModel;
use crate::ops;
use crate::solver::{self, critical_alpha};

fn solve_l(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<SymMatrix> {
    Ok(solver::solve(model, alpha, q)?.l)
}

/// `r_σ(αA) < 1`, required whenever `α ≥ 1`.
fn require_eig_clause(model: &CsviuModel, alpha: f64) -> Result<()> {
    let r = alpha * linalg::spectral_radius_of(model.a())?;
    if r >= 1.0 {
        return Err(CsviuError::NotStable {
            spectral_radius: r,
            context: format!("r_σ(αA) at α = {alpha}"),
        });
    }
    Ok(())
}

/// Discounted mean energy from `x(0) = 0`: `α/(1−α)·ϖ(L^α)`.
pub fn h2_discounted_norm(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CsviuError::Domain(format!(
            "discounted norm needs 0 < alpha < 1, got {alpha}"
        )));
    }
    let l = solve_l(model, alpha, q)?;
    Ok(alpha / (1.0 - alpha) * ops::op_varpi(model, &l)?)
}

/// Long-run mean power `ϖ(L)` with `L = (I − ℒ)^{-1}(Q)`.
pub fn power_norm(model: &CsviuModel, q: &SymMatrix) -> Result<f64> {
    require_eig_clause(model, 1.0)?;
    let l = solve_l(model, 1.0, q)?;
    ops::op_varpi(model, &l)
}

/// Envelope for the sign-dependent linear term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VBar {
    /// `α·r_σ((I − αAᵀ)^{-1})·|𝒲_d(L)|`
    pub spectral: Vec<f64>,
    /// `α·‖(I − αAᵀ)^{-1}‖_∞·|𝒲_d(L)|`
    pub conservative: Vec<f64>,
    pub resolvent_radius: f64,
    pub resolvent_inf_norm: f64,
}

impl VBar {
    pub fn spectral_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.spectral)
    }
}

pub fn v_bar_bound(model: &CsviuModel, alpha: f64, l: &SymMatrix) -> Result<VBar> {
    let n = model.n();
    let w_abs = ops::op_w_diag(model, l)?.abs();
    let lhs = DMatrix::identity(n, n) - model.a().transpose() * alpha;
    let inv = linalg::lu_solve(&lhs, &DMatrix::identity(n, n), "I − αAᵀ")?;
    let resolvent_radius = linalg::spectral_radius_of(&inv)?;
    let resolvent_inf_norm = linalg::inf_norm(&inv);
    Ok(VBar {
        spectral: (&w_abs * (alpha * resolvent_radius)).iter().copied().collect(),
        conservative: (&w_abs * (alpha * resolvent_inf_norm)).iter().copied().collect(),
        resolvent_radius,
        resolvent_inf_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterDiscountBound {
    pub alpha: f64,
    pub kappa: usize,
    /// `λ⁺(L)`
    pub c0: f64,
    /// `αϖ(L)/(α−1)` for α > 1, `ϖ(L)` at α = 1
    pub c1: f64,
    /// Bound centre `−½ L^{-1}(v̄ ⊙ 𝒮(x0))`
    pub xi: Vec<f64>,
    /// `c0‖x0 − ξ‖² + κ c1 α^κ`
    pub bound: f64,
}

fn counter_constants(model: &CsviuModel, alpha: f64, l: &SymMatrix) -> Result<(f64, f64)> {
    let varpi = ops::op_varpi(model, l)?;
    let c1 = if alpha > 1.0 { alpha * varpi / (alpha - 1.0) } else { varpi };
    Ok((l.max_eigenvalue(), c1))
}

/// Finite-horizon energy envelope for `α ≥ 1`.
pub fn counter_discount_bound(
    model: &CsviuModel,
    alpha: f64,
    q: &SymMatrix,
    x0: &DVector<f64>,
    kappa: usize,
) -> Result<CounterDiscountBound> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(CsviuError::Domain(format!(
            "counter-discounted bound needs alpha >= 1, got {alpha}"
        )));
    }
    check_x0(model, x0)?;
    let l = solve_l(model, alpha, q)?;
    require_eig_clause(model, alpha)?;
    let (c0, c1) = counter_constants(model, alpha, &l)?;
    let vbar = v_bar_bound(model, alpha, &l)?.spectral_vector();
    let signs = ops::sign_vec(x0.as_slice()).to_dvector();
    let xi = -0.5 * (l.inverse()? * vbar.component_mul(&signs));
    let bound = c0 * (x0 - &xi).norm_squared() + kappa as f64 * c1 * alpha.powi(kappa as i32);
    Ok(CounterDiscountBound {
        alpha,
        kappa,
        c0,
        c1,
        xi: xi.iter().copied().collect(),
        bound,
    })
}

fn check_x0(model: &CsviuModel, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != model.n() {
        return Err(CsviuError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            model.n()
        )));
    }
    Ok(())
}

/// Ingredients of the per-stage geometric decay bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayEnvelope {
    pub alpha: f64,
    /// `αϖ(L)`, the value the per-stage energy is compared against
    pub target: f64,
    /// `2(‖x0‖²_L + ⟨v̄, |x0|⟩)`
    pub constant: f64,
}

impl DecayEnvelope {
    /// `constant · α^{-k}`
    pub fn bound(&self, k: usize) -> f64 {
        self.constant * self.alpha.powf(-(k as f64))
    }
}

pub fn decay_envelope(
    model: &CsviuModel,
    alpha: f64,
    q: &SymMatrix,
    x0: &DVector<f64>,
) -> Result<DecayEnvelope> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CsviuError::Domain(format!("alpha must be positive, got {alpha}")));
    }
    check_x0(model, x0)?;
    let l = solve_l(model, alpha, q)?;
    if alpha > 1.0 {
        require_eig_clause(model, alpha)?;
    }
    let vbar = v_bar_bound(model, alpha, &l)?.spectral_vector();
    Ok(DecayEnvelope {
        alpha,
        target: alpha * ops::op_varpi(model, &l)?,
        constant: 2.0 * (l.quad_form(x0) + vbar.dot(&x0.abs())),
    })
}

/// `2α^{-k}(‖x0‖²_L + ⟨v̄, |x0|⟩)`
pub fn decay_bound(
    model: &CsviuModel,
    alpha: f64,
    q: &SymMatrix,
    x0: &DVector<f64>,
    k: usize,
) -> Result<f64> {
    Ok(decay_envelope(model, alpha, q, x0)?.bound(k))
}

/// Bound on the discounted partial sums `|Σ_{k≤κ} α^k(E‖x_k‖²_Q − αϖ(L))|`:
/// `‖x0‖²_L + ⟨v̄, |x0|⟩`.
pub fn partial_sum_bound(model: &CsviuModel, alpha: f64, q: &SymMatrix, x0: &DVector<f64>) -> Result<f64> {
    Ok(decay_envelope(model, alpha, q, x0)?.constant / 2.0)
}

/// Constants of the second-moment envelope
/// `E‖x_κ − ξ̄⊙𝒮(x_κ)‖² ≤ c0(1 + 2α^{-κ}) + c1 α^{-κ}‖x0‖²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondMomentEnvelope {
    pub alpha: f64,
    /// `‖ξ̄‖²_L / λ⁻(L)`
    pub c0: f64,
    /// `2λ⁺(L)/λ⁻(L)`
    pub c1: f64,
    /// `ξ̄ = −½ L^{-1} v̄`
    pub xi_bar: Vec<f64>,
}

impl SecondMomentEnvelope {
    pub fn bound(&self, kappa: usize, x0_norm_sq: f64) -> f64 {
        let decay = self.alpha.powf(-(kappa as f64));
        self.c0 * (1.0 + 2.0 * decay) + self.c1 * decay * x0_norm_sq
    }
}

pub fn second_moment_envelope(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<SecondMomentEnvelope> {
    let l = solve_l(model, alpha, q)?;
    let lambda_min = l.min_eigenvalue();
    if lambda_min <= 0.0 {
        return Err(CsviuError::SingularOperator(
            "second-moment envelope needs a positive definite L".into(),
        ));
    }
    let vbar = v_bar_bound(model, alpha, &l)?.spectral_vector();
    let xi_bar = -0.5 * (l.inverse()? * vbar);
    Ok(SecondMomentEnvelope {
        alpha,
        c0: l.quad_form(&xi_bar) / lambda_min,
        c1: 2.0 * l.max_eigenvalue() / lambda_min,
        xi_bar: xi_bar.iter().copied().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterConstants {
    pub c0: f64,
    pub c1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l: SymMatrix,
    pub varpi_l: f64,
    pub h2_discounted: Option<f64>,
    pub power_norm: Option<f64>,
    pub v_bar: Vec<f64>,
    pub v_bar_conservative: Vec<f64>,
    pub energy_offset_g0: Option<f64>,
    pub counter_bound: Option<CounterConstants>,
    /// True when 𝒲 ≡ 0, the case in which the closed forms carry no
    /// sign-dependent remainder.
    pub closed_form_exact: bool,
}

pub fn norm_report(model: &CsviuModel, alpha: f64, q: &SymMatrix) -> Result<NormReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CsviuError::Domain("alpha must be positive".into()));
    }
    let l = solve_l(model, alpha, q)?;
    if alpha >= 1.0 {
        require_eig_clause(model, alpha)?;
    }
    let varpi_l = ops::op_varpi(model, &l)?;
    let vbar = v_bar_bound(model, alpha, &l)?;
    let discounted = alpha < 1.0;
    let counter_bound = if alpha >= 1.0 {
        let (c0, c1) = counter_constants(model, alpha, &l)?;
        Some(CounterConstants { c0, c1 })
    } else {
        None
    };
    Ok(NormReport {
        alpha,
        varpi_l,
        h2_discounted: discounted.then(|| alpha / (1.0 - alpha) * varpi_l),
        power_norm: (alpha == 1.0).then_some(varpi_l),
        v_bar: vbar.spectral,
        v_bar_conservative: vbar.conservative,
        energy_offset_g0: discounted.then(|| alpha * varpi_l / (1.0 - alpha)),
        counter_bound,
        closed_form_exact: model.cross_operator_vanishes(),
        l,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// `ϖ(L^α)`, absent when no solution exists at this α
    pub varpi_l: Option<f64>,
    /// `α/(1−α)·ϖ(L^α)` for α < 1
    pub h2_discounted: Option<f64>,
    /// `(1−α)·Abel sum − ϖ(L^1) = αϖ(L^α) − ϖ(L^1)` from `x0 = 0`, α < 1
    pub abel_gap: Option<f64>,
    /// `max|L^α − L^1|`
    pub l_distance: Option<f64>,
    /// Spectral radius that ruled this α out, if any.
    pub not_stable_radius: Option<f64>,
}

/// `{0.5, 0.9, 0.99, 0.999, 1.0, min(1.05, (1+ᾱ)/2)}`
pub fn default_sweep_grid(model: &CsviuModel) -> Result<Vec<f64>> {
    let alpha_bar = critical_alpha(model, 1e-9)?;
    let mut grid = vec![0.5, 0.9, 0.99, 0.999, 1.0];
    let last = 1.05_f64.min(0.5 * (1.0 + alpha_bar));
    if last > 1.0 {
        grid.push(last);
    }
    Ok(grid)
}

pub fn vanishing_discount_sweep(model: &CsviuModel, q: &SymMatrix, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    let solve_at = |alpha: f64| -> Result<std::result::Result<SymMatrix, f64>> {
        let res = solve_l(model, alpha, q).and_then(|l| {
            if alpha > 1.0 {
                require_eig_clause(model, alpha)?;
            }
            Ok(l)
        });
        match res {
            Ok(l) => Ok(Ok(l)),
            Err(CsviuError::NotStable { spectral_radius, .. }) => Ok(Err(spectral_radius)),
            Err(e) => Err(e),
        }
    };
    let l_one = solve_at(1.0)?.ok();
    let varpi_one = l_one.as_ref().map(|l| ops::op_varpi(model, l)).transpose()?;

    alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(CsviuError::Domain(format!("sweep alpha must be positive, got {alpha}")));
            }
            match solve_at(alpha)? {
                Ok(l) => {
                    let varpi = ops::op_varpi(model, &l)?;
                    let discounted = alpha < 1.0;
                    Ok(SweepRow {
                        alpha,
                        varpi_l: Some(varpi),
                        h2_discounted: discounted.then(|| alpha / (1.0 - alpha) * varpi),
                        abel_gap: varpi_one.filter(|_| discounted).map(|p| alpha * varpi - p),
                        l_distance: l_one.as_ref().map(|l1| (&l - l1).max_abs()),
                        not_stable_radius: None,
                    })
                }
                Err(radius) => Ok(SweepRow {
                    alpha,
                    varpi_l: None,
                    h2_discounted: None,
                    abel_gap: None,
                    l_distance: None,
                    not_stable_radius: Some(radius),
                }),
            }
        })
        .collect()
}
