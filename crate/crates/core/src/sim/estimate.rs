use serde::Serialize;

use super::engine::{PathResults, PathSource, PathView};
use crate::error::{CsviuError, Result};
use crate::linalg::{pairwise_sum, SymMatrix};
use crate::norms;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimateKind {
    /// `Σ_{k=0}^{κ} α^k ‖x_k‖²_Q`
    Abel { alpha: f64, kappa: usize },
    /// `(1/κ) Σ_{k<κ} ‖x_k‖²_Q`
    Cesaro { kappa: usize },
    /// `‖x_k‖²_Q`
    PerStage { k: usize },
    /// `‖x_κ − ξ ⊙ 𝒮(x_κ)‖²`
    CenteredTerminal { kappa: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub kind: EstimateKind,
    pub aborted: usize,
}

impl EnergyEstimate {
    /// `(value − reference) / std_error`; infinite when the error is zero
    /// and the values differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.value - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Sample mean and standard error (`sd/√N`, `sd` with `N−1`).
pub fn summarize(values: &[f64], kind: EstimateKind, aborted: usize) -> EnergyEstimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let std_error = if n > 1 {
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&dev) / (n as f64 - 1.0) / n as f64).sqrt()
    } else {
        0.0
    };
    EnergyEstimate {
        value: mean,
        std_error,
        n_paths: n,
        kind,
        aborted,
    }
}

fn nonempty<T>(res: &PathResults<T>) -> Result<()> {
    if res.values.is_empty() {
        let a = res.aborted.first().copied().unwrap_or(super::Abort { path: 0, stage: 0 });
        return Err(CsviuError::Overflow {
            path: a.path,
            stage: a.stage,
        });
    }
    Ok(())
}

fn check_weight<S: PathSource>(src: &S, q: &SymMatrix) -> Result<Vec<f64>> {
    let n = src.model().n();
    if q.n() != n {
        return Err(CsviuError::Dimension(format!("Q is {0}×{0}, expected {n}×{n}", q.n())));
    }
    Ok(q.as_matrix().as_slice().to_vec())
}

/// `xᵀQx` with `Q` stored column-major (symmetric, so either order works).
pub(crate) fn quad(q: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let row = &q[i * n..(i + 1) * n];
        s += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    s
}

fn stage_energies<'a>(p: &PathView<'a>, q: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    let p = *p;
    (0..=p.horizon).map(move |k| quad(q, p.state(k)))
}

pub fn estimate_abel_energy<S: PathSource>(src: &S, q: &SymMatrix, alpha: f64) -> Result<EnergyEstimate> {
    Ok(estimate_abel_energies(src, q, &[alpha])?.remove(0))
}

/// Abel sums for several α from a single pass over the paths.
pub fn estimate_abel_energies<S: PathSource>(src: &S, q: &SymMatrix, alphas: &[f64]) -> Result<Vec<EnergyEstimate>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(CsviuError::Domain(format!("alpha must be positive, got {a}")));
    }
    let qv = check_weight(src, q)?;
    let res = src.map_paths(|p| {
        let mut sums = vec![0.0; alphas.len()];
        let mut weights = vec![1.0; alphas.len()];
        for e in stage_energies(p, &qv) {
            for ((s, w), a) in sums.iter_mut().zip(weights.iter_mut()).zip(alphas) {
                *s += *w * e;
                *w *= a;
            }
        }
        sums
    });
    nonempty(&res)?;
    let kappa = src.config().horizon;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let col: Vec<f64> = res.values.iter().map(|v| v[j]).collect();
            summarize(&col, EstimateKind::Abel { alpha, kappa }, res.aborted.len())
        })
        .collect())
}

pub fn estimate_cesaro_power<S: PathSource>(src: &S, q: &SymMatrix) -> Result<EnergyEstimate> {
    let qv = check_weight(src, q)?;
    let kappa = src.config().horizon;
    let res = src.map_paths(|p| stage_energies(p, &qv).take(kappa).sum::<f64>() / kappa as f64);
    nonempty(&res)?;
    Ok(summarize(&res.values, EstimateKind::Cesaro { kappa }, res.aborted.len()))
}

/// Per-stage means of `‖x_k‖²_Q` for the requested stages.
pub fn estimate_stages<S: PathSource>(src: &S, q: &SymMatrix, stages: &[usize]) -> Result<Vec<EnergyEstimate>> {
    let qv = check_weight(src, q)?;
    let horizon = src.config().horizon;
    if let Some(k) = stages.iter().find(|&&k| k > horizon) {
        return Err(CsviuError::Domain(format!("stage {k} exceeds the horizon {horizon}")));
    }
    let res = src.map_paths(|p| stages.iter().map(|&k| quad(&qv, p.state(k))).collect::<Vec<_>>());
    nonempty(&res)?;
    Ok(stages
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let col: Vec<f64> = res.values.iter().map(|v| v[j]).collect();
            summarize(&col, EstimateKind::PerStage { k }, res.aborted.len())
        })
        .collect())
}

/// Per-stage means for every `k = 0..=horizon`.
pub fn estimate_per_stage<S: PathSource>(src: &S, q: &SymMatrix) -> Result<Vec<EnergyEstimate>> {
    let stages: Vec<usize> = (0..=src.config().horizon).collect();
    estimate_stages(src, q, &stages)
}

/// `E‖x_κ − ξ ⊙ 𝒮(x_κ)‖²` at the final stage.
pub fn estimate_centered_terminal<S: PathSource>(src: &S, xi: &[f64]) -> Result<EnergyEstimate> {
    let n = src.model().n();
    if xi.len() != n {
        return Err(CsviuError::Dimension(format!("xi has length {}, expected {n}", xi.len())));
    }
    let kappa = src.config().horizon;
    let res = src.map_paths(|p| {
        p.state(kappa)
            .iter()
            .zip(xi)
            .map(|(&x, &c)| {
                let s = if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (x - c * s).powi(2)
            })
            .sum::<f64>()
    });
    nonempty(&res)?;
    Ok(summarize(&res.values, EstimateKind::CenteredTerminal { kappa }, res.aborted.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OvertakingResult {
    pub overtakes: bool,
    /// Smallest κ₀ such that the inequality holds for every κ ≥ κ₀ up to the horizon.
    pub crossing_kappa: Option<usize>,
    /// `E^{κ,α}(b) + ε − E^{κ,α}(a)` for each κ
    pub margin: Vec<f64>,
}

/// Finite-horizon overtaking test of `a` against `b` from per-stage mean
/// energies `E‖a_k‖²`, `E‖b_k‖²`.
pub fn compare_overtaking(stage_a: &[f64], stage_b: &[f64], alpha: f64, epsilon: f64) -> Result<OvertakingResult> {
    if stage_a.len() != stage_b.len() {
        return Err(CsviuError::Dimension(format!(
            "signals have different horizons ({} vs {})",
            stage_a.len(),
            stage_b.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CsviuError::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let (mut ea, mut eb, mut w) = (0.0, 0.0, 1.0);
    let margin: Vec<f64> = stage_a
        .iter()
        .zip(stage_b)
        .map(|(a, b)| {
            ea += w * a;
            eb += w * b;
            w *= alpha;
            eb + epsilon - ea
        })
        .collect();
    let crossing_kappa = match margin.iter().rposition(|&m| m < 0.0) {
        None => Some(0),
        Some(last) if last + 1 < margin.len() => Some(last + 1),
        Some(_) => None,
    };
    Ok(OvertakingResult {
        overtakes: crossing_kappa.is_some(),
        crossing_kappa,
        margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `mean − αϖ(L)`
    pub deviation: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCheck {
    pub alpha: f64,
    /// `αϖ(L)`
    pub target: f64,
    /// `C` in `C·α^{-k}`
    pub constant: f64,
    pub rows: Vec<DecayRow>,
    pub violations: usize,
    pub aborted: usize,
}

/// Compares per-stage energies with the geometric decay envelope; a stage is
/// a violation when `|mean − αϖ(L)|` exceeds the bound by more than three
/// standard errors.
pub fn check_decay<S: PathSource>(src: &S, alpha: f64, q: &SymMatrix) -> Result<DecayCheck> {
    let env = norms::decay_envelope(src.model(), alpha, q, &src.config().x0_vector())?;
    let stages = estimate_per_stage(src, q)?;
    let aborted = stages[0].aborted;
    let rows: Vec<DecayRow> = stages
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let bound = env.bound(k);
            let deviation = e.value - env.target;
            DecayRow {
                k,
                mean: e.value,
                std_error: e.std_error,
                deviation,
                bound,
                violated: deviation.abs() > bound + 3.0 * e.std_error,
            }
        })
        .collect();
    Ok(DecayCheck {
        alpha,
        target: env.target,
        constant: env.constant,
        violations: rows.iter().filter(|r| r.violated).count(),
        rows,
        aborted,
    })
}
