use nalgebra::DMatrix;
use serde::Serialize;

use super::engine::PathSource;
use super::estimate::{quad, summarize, EstimateKind};
use crate::error::{CsviuError, Result};
use crate::linalg::{pairwise_sum, SymMatrix};
use crate::ops;
use crate::solver::backward_recursion;

/// Terminal data `(Φ, θ, γ)` of the backward recursion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepresentationTerminal {
    pub phi: SymMatrix,
    pub theta: Vec<f64>,
    pub gamma: f64,
}

impl RepresentationTerminal {
    pub fn zero(n: usize) -> Self {
        RepresentationTerminal {
            phi: SymMatrix::zeros(n),
            theta: vec![0.0; n],
            gamma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepresentationCheck {
    pub alpha: f64,
    pub kappa: usize,
    /// Mean of `Σ_{k<κ} α^k ‖x_k‖²_Q`
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// Mean of `‖x‖²_{P₀} + ⟨v₀, x⟩ + g₀ − α^κ(‖x_κ‖²_Φ + ⟨θ,|x_κ|⟩ + γ)`
    pub rhs: f64,
    pub rhs_std_error: f64,
    /// `|lhs − rhs|`
    pub gap: f64,
    /// Standard error of the per-path difference `lhs − rhs`
    pub std_error: f64,
    /// Mean of `Σ_{k<κ} α^{k+1}⟨v_{k+1}, σ(x_k)ω_{0,k}⟩ + α^κ(⟨θ,|x_κ|⟩ − ⟨θ,x_κ⟩)`,
    /// the part of the telescoped identity that does not average out
    /// because `v_{k+1}` depends on later signs.
    pub correction: f64,
    /// `|lhs − rhs − correction|`
    pub corrected_gap: f64,
    pub corrected_std_error: f64,
    pub n_paths: usize,
    pub aborted: usize,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Samples both sides of the finite-horizon energy representation. The
/// vector `v_k` is solved backward along each sampled sign sequence and the
/// constant `g_k` along each sampled input sequence.
pub fn validate_representation<S: PathSource>(
    src: &S,
    alpha: f64,
    q: &SymMatrix,
    terminal: &RepresentationTerminal,
) -> Result<RepresentationCheck> {
    let model = src.model();
    let cfg = src.config();
    let (n, m) = (model.n(), model.m());
    let kappa = cfg.horizon;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CsviuError::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if terminal.theta.len() != n {
        return Err(CsviuError::Dimension(format!(
            "theta has length {}, expected {n}",
            terminal.theta.len()
        )));
    }
    let triple = backward_recursion(model, alpha, q, kappa, &terminal.phi, terminal.gamma)?;
    let p_seq: Vec<Vec<f64>> = triple.p_seq.iter().map(|p| p.as_matrix().as_slice().to_vec()).collect();
    let w_seq: Vec<Vec<f64>> = triple
        .p_seq
        .iter()
        .map(|p| ops::op_w_diag(model, p).map(|w| w.iter().copied().collect()))
        .collect::<Result<_>>()?;
    let varpi_seq: Vec<f64> = triple
        .p_seq
        .iter()
        .map(|p| ops::op_varpi(model, p))
        .collect::<Result<_>>()?;
    let a = row_major(model.a());
    let b = model.b().map(row_major).unwrap_or_default();
    let qv = q.as_matrix().as_slice().to_vec();
    let phi = terminal.phi.as_matrix().as_slice().to_vec();
    let theta = &terminal.theta;
    let gamma = terminal.gamma;
    let x0 = cfg.x0.clone();

    let res = src.map_paths(|path| {
        let mut lhs = 0.0;
        let mut w = 1.0;
        for k in 0..kappa {
            lhs += w * quad(&qv, path.state(k));
            w *= alpha;
        }
        let alpha_kappa = w;
        let xk = path.state(kappa);
        let theta_abs: f64 = theta.iter().zip(xk).map(|(t, x)| t * x.abs()).sum();
        let theta_lin: f64 = theta.iter().zip(xk).map(|(t, x)| t * x).sum();
        let terminal_value = alpha_kappa * (quad(&phi, xk) + theta_abs + gamma);
        let mut correction = alpha_kappa * (theta_abs - theta_lin);

        let mut v = theta.clone();
        let mut g = gamma;
        let mut next_v = vec![0.0; n];
        let mut bl = vec![0.0; n];
        let mut pbl = vec![0.0; n];
        for k in (0..kappa).rev() {
            // α^{k+1}
            let weight = alpha.powi(k as i32 + 1);
            let incr = path.increment(k);
            correction += weight * v.iter().zip(incr).map(|(a, b)| a * b).sum::<f64>();

            let p1 = &p_seq[k + 1];
            let l = path.input(k);
            for i in 0..n {
                bl[i] = (0..m).map(|j| b[i * m + j] * l[j]).sum();
            }
            for i in 0..n {
                pbl[i] = (0..n).map(|j| p1[i * n + j] * bl[j]).sum();
            }
            let bl_p = quad(p1, &bl);
            let v_bl: f64 = v.iter().zip(&bl).map(|(a, b)| a * b).sum();
            g = alpha * (g + varpi_seq[k + 1] + bl_p + v_bl);

            let x = path.state(k);
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += a[j * n + i] * (v[j] + 2.0 * pbl[j]);
                }
                let sign = if x[i] > 0.0 {
                    1.0
                } else if x[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                next_v[i] = alpha * (s + w_seq[k + 1][i] * sign);
            }
            std::mem::swap(&mut v, &mut next_v);
        }
        let v0x: f64 = v.iter().zip(&x0).map(|(a, b)| a * b).sum();
        let rhs = quad(&p_seq[0], &x0) + v0x + g - terminal_value;
        [lhs, rhs, correction]
    });
    if res.values.is_empty() {
        let a = res.aborted.first().copied();
        return Err(CsviuError::Overflow {
            path: a.map_or(0, |a| a.path),
            stage: a.map_or(0, |a| a.stage),
        });
    }
    let kind = EstimateKind::Abel { alpha, kappa };
    let aborted = res.aborted.len();
    let column = |f: &dyn Fn(&[f64; 3]) -> f64| -> Vec<f64> { res.values.iter().map(f).collect() };
    let lhs = summarize(&column(&|v| v[0]), kind, aborted);
    let rhs = summarize(&column(&|v| v[1]), kind, aborted);
    let diff = summarize(&column(&|v| v[0] - v[1]), kind, aborted);
    let corr = column(&|v| v[2]);
    let corrected = summarize(&column(&|v| v[0] - v[1] - v[2]), kind, aborted);
    Ok(RepresentationCheck {
        alpha,
        kappa,
        lhs: lhs.value,
        lhs_std_error: lhs.std_error,
        rhs: rhs.value,
        rhs_std_error: rhs.std_error,
        gap: diff.value.abs(),
        std_error: diff.std_error,
        correction: pairwise_sum(&corr) / corr.len() as f64,
        corrected_gap: corrected.value.abs(),
        corrected_std_error: corrected.std_error,
        n_paths: lhs.n_paths,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CsviuModel;
    use crate::sim::{InputPolicy, SimConfig, Simulator};

    #[test]
    fn noiseless_identity_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, -0.3, 0.2, 0.5]);
        let z = DMatrix::zeros(2, 2);
        let model = CsviuModel::new(a, z.clone(), z.clone(), z, DMatrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(2, 30, 1, vec![1.0, -2.0]);
        let sim = Simulator::new(&model, &cfg).unwrap();
        let mut t = RepresentationTerminal::zero(2);
        t.phi = SymMatrix::identity(2);
        t.gamma = 0.5;
        let r = validate_representation(&sim, 1.1, &SymMatrix::identity(2), &t).unwrap();
        assert!(r.gap < 1e-12 * r.lhs.max(1.0), "{r:?}");
        assert_eq!(r.correction, 0.0);
    }

    #[test]
    fn corrected_identity_holds_with_cross_noise() {
        let model = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0);
        let cfg = SimConfig::new(40_000, 30, 21, vec![1.0]);
        let sim = Simulator::new(&model, &cfg).unwrap();
        let r = validate_representation(&sim, 0.9, &SymMatrix::identity(1), &RepresentationTerminal::zero(1)).unwrap();
        assert!(r.corrected_gap <= 4.0 * r.corrected_std_error, "{r:?}");
        assert!(r.correction > 0.0);
    }

    #[test]
    fn corrected_identity_holds_with_input_and_theta() {
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]);
        let sx = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, 0.1]);
        let sbx = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.15]);
        let sigma = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let d = DMatrix::zeros(2, 1);
        let model = CsviuModel::with_input(a, sx, sbx, sigma, DMatrix::identity(2, 2), Some((b, d))).unwrap();
        let cfg = SimConfig::new(40_000, 20, 8, vec![0.5, -1.0]).with_input(InputPolicy::Constant(vec![0.3]));
        let sim = Simulator::new(&model, &cfg).unwrap();
        let t = RepresentationTerminal {
            phi: SymMatrix::identity(2),
            theta: vec![0.2, -0.1],
            gamma: 1.0,
        };
        let r = validate_representation(&sim, 1.1, &SymMatrix::identity(2), &t).unwrap();
        assert!(r.corrected_gap <= 4.0 * r.corrected_std_error, "{r:?}");
    }
}
