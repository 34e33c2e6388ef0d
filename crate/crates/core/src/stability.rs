//! α-stochastic stability verdicts and (C, ℒ^α)-detectability.
//!
//! Three computable criteria are evaluated independently and must agree:
//!
//! * (ii)  `r_σ(ℒ^α) < 1`
//! * (iii) the solution of `(I − ℒ^α)(U) = I` is positive definite
//! * (v)   `r_σ(√α A) < 1` and `r_σ((I − α𝔸)^{-1}𝒵) < 1/α`
//!
//! For `α ≥ 1` the verdict additionally needs `r_σ(αA) < 1`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};

use crate::error::{CsviuError, Result};
use crate::linalg::{self, matrix_to_rows, SymMatrix};
use crate::model::CsviuModel;
use crate::ops::{self, OperatorKind};
use crate::solver;

/// A radius counts as `< 1` only when it is at most `1 − STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Radii this close to 1 are flagged as marginal.
pub const MARGINAL_BAND: f64 = 1e-6;

fn below_one(r: f64) -> bool {
    r <= 1.0 - STRICT_MARGIN
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AlphaStable,
    /// α-stable at α = 1, i.e. stochastically stable in the Cèsaro sense.
    Stable,
    NotStable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralRadii {
    /// `r_σ(ℒ^α)`
    pub l_alpha: f64,
    /// `r_σ(√α A)`
    pub sqrt_alpha_a: f64,
    /// `r_σ((I − α𝔸)^{-1}𝒵)`, absent when `I − α𝔸` is singular
    pub resolvent_z: Option<f64>,
    /// `r_σ(αA)`
    pub alpha_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub alpha: f64,
    pub crit_ii: bool,
    pub crit_iii: bool,
    pub crit_v_part1: bool,
    /// `None` when `I − α𝔸` is singular and the criterion is indeterminate.
    pub crit_v_part2: Option<bool>,
    pub eig_clause: bool,
    pub verdict: Verdict,
    pub marginal: bool,
    pub spectral_radii: SpectralRadii,
}

impl StabilityReport {
    pub fn crit_v(&self) -> bool {
        self.crit_v_part1 && self.crit_v_part2.unwrap_or(false)
    }
}

pub fn check_stability(model: &CsviuModel, alpha: f64) -> Result<StabilityReport> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CsviuError::Domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    let n = model.n();

    let l_rep = ops::operator_matrix(model, alpha, OperatorKind::LAlpha)?;
    let r_l = ops::spectral_radius(&l_rep)?;
    let crit_ii = below_one(r_l);

    let crit_iii = match solver::solve_direct_unchecked(model, alpha, &SymMatrix::identity(n)) {
        Ok(u) => {
            let residual = solver::lyapunov_residual(model, alpha, &u, &SymMatrix::identity(n))?;
            u.is_pd() && residual <= 1e-8 * u.max_abs().max(1.0)
        }
        Err(CsviuError::SingularOperator(_)) => false,
        Err(e) => return Err(e),
    };

    let r_a = linalg::spectral_radius_of(model.a())?;
    let r_sqrt_a = alpha.sqrt() * r_a;
    let crit_v_part1 = below_one(r_sqrt_a);
    let r_res = match ops::resolvent_z_matrix(model, alpha) {
        Ok(m) => Some(linalg::spectral_radius_of(&m)?),
        Err(CsviuError::SingularOperator(_)) => None,
        Err(e) => return Err(e),
    };
    let crit_v_part2 = r_res.map(|r| below_one(alpha * r));

    let r_alpha_a = alpha * r_a;
    let eig_clause = below_one(r_alpha_a);

    let near_one = |r: f64| (r - 1.0).abs() < MARGINAL_BAND;
    let marginal =
        near_one(r_l) || near_one(r_sqrt_a) || r_res.is_some_and(|r| near_one(alpha * r));

    let report = StabilityReport {
        alpha,
        crit_ii,
        crit_iii,
        crit_v_part1,
        crit_v_part2,
        eig_clause,
        verdict: if crit_ii && (alpha < 1.0 || eig_clause) {
            if alpha == 1.0 {
                Verdict::Stable
            } else {
                Verdict::AlphaStable
            }
        } else {
            Verdict::NotStable
        },
        marginal,
        spectral_radii: SpectralRadii {
            l_alpha: r_l,
            sqrt_alpha_a: r_sqrt_a,
            resolvent_z: r_res,
            alpha_a: r_alpha_a,
        },
    };

    if !marginal && (report.crit_ii != report.crit_iii || report.crit_ii != report.crit_v()) {
        return Err(CsviuError::InternalInconsistency(format!(
            "criteria disagree at α = {alpha}: (ii) = {}, (iii) = {}, (v) = {} (radii {:?})",
            report.crit_ii,
            report.crit_iii,
            report.crit_v(),
            report.spectral_radii
        )));
    }
    Ok(report)
}

fn serialize_gain<S: Serializer>(g: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    g.as_ref().map(matrix_to_rows).serialize(s)
}

/// Where a detectability witness came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    Supplied,
    ZeroGain,
    OutputInjection,
    RandomSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectabilityResult {
    pub detectable: bool,
    /// Witness gain `G` (n×p) when detectable.
    #[serde(rename = "G", serialize_with = "serialize_gain")]
    pub g: Option<DMatrix<f64>>,
    /// Closed-loop radius at the witness, or the smallest radius seen when no
    /// witness was found.
    pub closed_loop_radius: f64,
    pub source: Option<WitnessSource>,
    pub candidates_tried: usize,
}

pub fn check_detectability_with_g(
    model: &CsviuModel,
    alpha: f64,
    gain: &DMatrix<f64>,
) -> Result<DetectabilityResult> {
    let radius = ops::spectral_radius(&ops::closed_loop_matrix(model, alpha, gain)?)?;
    let detectable = below_one(radius);
    Ok(DetectabilityResult {
        detectable,
        g: detectable.then(|| gain.clone()),
        closed_loop_radius: radius,
        source: detectable.then_some(WitnessSource::Supplied),
        candidates_tried: 1,
    })
}

/// Deadbeat observer gain for the single output row `c`: returns `l` with
/// `A − l c` nilpotent, or `None` when `(A, c)` is unobservable.
fn deadbeat_gain(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut obs = DMatrix::zeros(n, n);
    let mut row = c.clone();
    for i in 0..n {
        obs.set_row(i, &row.row(0));
        row = &row * a;
    }
    let mut e_last = DMatrix::zeros(n, 1);
    e_last[(n - 1, 0)] = 1.0;
    let x = linalg::lu_solve(&obs, &e_last, "observability matrix").ok()?;
    let a_pow = (0..n).fold(DMatrix::identity(n, n), |acc, _| acc * a);
    let l = a_pow * x;
    l.iter().all(|v| v.is_finite()).then_some(l)
}

/// Deterministic output-injection candidates: `G = −A C⁺` and, for each
/// observable output row, a deadbeat gain on that row.
fn injection_candidates(model: &CsviuModel) -> Vec<DMatrix<f64>> {
    let (n, p) = (model.n(), model.p());
    let mut out = Vec::new();
    if let Ok(c_pinv) = model.c().clone().pseudo_inverse(1e-12) {
        out.push(-(model.a() * c_pinv));
    }
    for i in 0..p {
        let c_row = model.c().rows(i, 1).into_owned();
        if let Some(l) = deadbeat_gain(model.a(), &c_row) {
            let mut g = DMatrix::zeros(n, p);
            g.set_column(i, &(-l.column(0)));
            out.push(g);
        }
    }
    out
}

/// Best-effort search for a detectability witness: `G = 0`, then output
/// injection candidates, then `budget` random Gaussian gains over a
/// logarithmic scale grid. `detectable = false` only means no witness was
/// found within the budget.
pub fn search_detectability<R: Rng + ?Sized>(
    model: &CsviuModel,
    alpha: f64,
    budget: usize,
    rng: &mut R,
) -> Result<DetectabilityResult> {
    if budget == 0 {
        return Err(CsviuError::Domain("search budget must be at least 1".into()));
    }
    let (n, p) = (model.n(), model.p());
    let mut tried = 0;
    let mut best = f64::INFINITY;

    let mut try_gain = |g: DMatrix<f64>, source: WitnessSource| -> Result<Option<DetectabilityResult>> {
        tried += 1;
        let r = check_detectability_with_g(model, alpha, &g)?;
        best = best.min(r.closed_loop_radius);
        Ok(r.detectable.then_some(DetectabilityResult {
            source: Some(source),
            candidates_tried: tried,
            ..r
        }))
    };

    if let Some(hit) = try_gain(DMatrix::zeros(n, p), WitnessSource::ZeroGain)? {
        return Ok(hit);
    }
    for g in injection_candidates(model) {
        if let Some(hit) = try_gain(g, WitnessSource::OutputInjection)? {
            return Ok(hit);
        }
    }
    let scale_of = |i: usize| {
        let t = if budget > 1 { i as f64 / (budget - 1) as f64 } else { 0.5 };
        10f64.powf(-3.0 + 4.0 * t)
    };
    for i in 0..budget {
        let scale = scale_of(i);
        let g = DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        if let Some(hit) = try_gain(g, WitnessSource::RandomSearch)? {
            return Ok(hit);
        }
    }
    Ok(DetectabilityResult {
        detectable: false,
        g: None,
        closed_loop_radius: best,
        source: None,
        candidates_tried: tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar() -> CsviuModel {
        CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0)
    }

    #[test]
    fn scalar_verdicts() {
        let r = check_stability(&scalar(), 0.9).unwrap();
        assert_eq!(r.verdict, Verdict::AlphaStable);
        assert_abs_diff_eq!(r.spectral_radii.l_alpha, 0.306, epsilon = 1e-14);
        assert!(r.crit_ii && r.crit_iii && r.crit_v());

        let r = check_stability(&scalar(), 1.9).unwrap();
        assert_eq!(r.verdict, Verdict::AlphaStable);
        assert_abs_diff_eq!(r.spectral_radii.l_alpha, 0.646, epsilon = 1e-14);
        assert_abs_diff_eq!(r.spectral_radii.alpha_a, 0.95, epsilon = 1e-14);

        let r = check_stability(&scalar(), 2.1).unwrap();
        assert_eq!(r.verdict, Verdict::NotStable);
        assert!(r.crit_ii && !r.eig_clause);

        assert_eq!(check_stability(&scalar(), 1.0).unwrap().verdict, Verdict::Stable);
    }

    #[test]
    fn trivially_stable_model() {
        let z = DMatrix::zeros(2, 2);
        let m = CsviuModel::new(z.clone(), z.clone(), z, DMatrix::identity(2, 2), DMatrix::identity(2, 2))
            .unwrap();
        for alpha in [0.5, 1.0, 7.0] {
            let r = check_stability(&m, alpha).unwrap();
            assert_ne!(r.verdict, Verdict::NotStable);
            assert_eq!(r.spectral_radii.l_alpha, 0.0);
        }
    }

    #[test]
    fn unstable_alpha_fails_all_criteria() {
        let r = check_stability(&scalar(), 3.0).unwrap();
        assert!(!r.crit_ii && !r.crit_iii && !r.crit_v());
        assert_eq!(r.verdict, Verdict::NotStable);
    }

    #[test]
    fn singular_resolvent_is_indeterminate() {
        let m = CsviuModel::scalar(1.0, 0.0, 0.3, 0.1, 1.0);
        let r = check_stability(&m, 1.0).unwrap();
        assert_eq!(r.crit_v_part2, None);
        assert!(r.marginal);
    }

    #[test]
    fn scalar_gain_witness() {
        let r = check_detectability_with_g(&scalar(), 0.9, &DMatrix::from_element(1, 1, -0.5)).unwrap();
        assert!(r.detectable);
        assert_abs_diff_eq!(r.closed_loop_radius, 0.081, epsilon = 1e-14);
    }

    #[test]
    fn zero_gain_matches_criterion_ii() {
        for alpha in [0.9, 2.5, 3.5] {
            let d = check_detectability_with_g(&scalar(), alpha, &DMatrix::zeros(1, 1)).unwrap();
            let s = check_stability(&scalar(), alpha).unwrap();
            assert_eq!(d.detectable, s.crit_ii);
            assert_abs_diff_eq!(d.closed_loop_radius, s.spectral_radii.l_alpha, epsilon = 1e-14);
        }
    }

    #[test]
    fn search_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stable = search_detectability(&scalar(), 0.9, 10, &mut rng).unwrap();
        assert_eq!(stable.source, Some(WitnessSource::ZeroGain));

        // unstable at α = 3.5 but C = 1 lets G = −A kill the conjugation term
        let r = search_detectability(&scalar(), 3.5, 10, &mut rng).unwrap();
        assert!(r.detectable);
        assert_eq!(r.source, Some(WitnessSource::OutputInjection));
        assert_abs_diff_eq!(r.closed_loop_radius, 3.5 * 0.09, epsilon = 1e-12);

        let blind = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 0.0);
        let r = search_detectability(&blind, 3.5, 50, &mut rng).unwrap();
        assert!(!r.detectable);
        assert_eq!(r.g, None);
    }

    #[test]
    fn deadbeat_gain_makes_closed_loop_nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.4, -0.3, 0.9]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let l = deadbeat_gain(&a, &c).unwrap();
        let closed = &a - &l * &c;
        assert!(linalg::spectral_radius_of(&closed).unwrap() < 1e-6);
        assert!((&closed * &closed).amax() < 1e-12);
    }
}
