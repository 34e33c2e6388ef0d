//! Monte Carlo estimators checked against moment recursions computed in
//! covariance space, independently of the Lyapunov solver.

use csviu_core::linalg::{pairwise_sum, SymMatrix};
use csviu_core::norms;
use csviu_core::ops;
use csviu_core::sim::{
    self, compare_overtaking, estimate_per_stage, PathSource, RepresentationTerminal, SimConfig, Simulator,
};
use csviu_core::{solver, CsviuModel};
use nalgebra::{DMatrix, DVector};

/// `σ_x = 0`, so the cross operator vanishes.
fn scalar_exact() -> CsviuModel {
    CsviuModel::scalar(0.5, 0.0, 0.3, 0.1, 1.0)
}

/// n = 2 with disjoint σ_x and σ̄_x columns.
fn two_state_exact() -> CsviuModel {
    CsviuModel::new(
        DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.4]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.2]),
        DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.1, 0.3]),
        DMatrix::identity(2, 2),
    )
    .unwrap()
}

/// `M_{k+1} = A M Aᵀ + σ̄_x Diag(M) σ̄_xᵀ + σ_xσ_xᵀ + σσᵀ`, valid when the
/// cross operator vanishes. Returns `tr(Q M_k)` for `k = 0..=kappa`.
fn exact_stage_energies(model: &CsviuModel, q: &SymMatrix, x0: &[f64], kappa: usize) -> Vec<f64> {
    assert!(model.cross_operator_vanishes());
    let x0 = DVector::from_column_slice(x0);
    let mut m = &x0 * x0.transpose();
    let sx = model.sigma_x();
    let sb = model.sigma_bar_x();
    let noise = sx * sx.transpose() + model.sigma() * model.sigma().transpose();
    let mut out = Vec::with_capacity(kappa + 1);
    for _ in 0..=kappa {
        out.push(q.trace_with(&m));
        let diag = DMatrix::from_diagonal(&m.diagonal());
        m = model.a() * &m * model.a().transpose() + sb * diag * sb.transpose() + &noise;
    }
    out
}

fn discounted(stages: &[f64], alpha: f64) -> f64 {
    stages.iter().enumerate().map(|(k, e)| alpha.powi(k as i32) * e).sum()
}

fn sim(model: &CsviuModel, paths: usize, horizon: usize, seed: u64, x0: Vec<f64>) -> Simulator {
    Simulator::new(model, &SimConfig::new(paths, horizon, seed, x0)).unwrap()
}

#[test]
fn closed_forms_match_moment_recursion_when_exact() {
    for model in [scalar_exact(), two_state_exact()] {
        let q = model.output_weight();
        let zero = vec![0.0; model.n()];
        let stages = exact_stage_energies(&model, &q, &zero, 4000);
        for alpha in [0.5, 0.9, 0.99] {
            let oracle = discounted(&stages[..4000], alpha);
            let closed = norms::h2_discounted_norm(&model, alpha, &q).unwrap();
            assert!((oracle - closed).abs() < 1e-10 * closed, "alpha {alpha}: {oracle} vs {closed}");
        }
        let power = norms::power_norm(&model, &q).unwrap();
        assert!((stages[4000] - power).abs() < 1e-12, "{} vs {power}", stages[4000]);
    }
}

#[test]
fn monte_carlo_abel_and_cesaro_match_oracle() {
    for model in [scalar_exact(), two_state_exact()] {
        let q = model.output_weight();
        let kappa = 150;
        let x0: Vec<f64> = (0..model.n()).map(|i| 1.0 - i as f64).collect();
        let stages = exact_stage_energies(&model, &q, &x0, kappa);
        let s = sim(&model, 40_000, kappa, 5, x0);
        for alpha in [0.9, 1.0] {
            let est = sim::estimate_abel_energy(&s, &q, alpha).unwrap();
            let oracle = discounted(&stages, alpha);
            assert!(est.z_score(oracle).abs() < 4.0, "abel {alpha}: {} ± {} vs {oracle}", est.value, est.std_error);
        }
        let ces = sim::estimate_cesaro_power(&s, &q).unwrap();
        let oracle = stages[..kappa].iter().sum::<f64>() / kappa as f64;
        assert!(ces.z_score(oracle).abs() < 4.0, "cesaro: {} ± {} vs {oracle}", ces.value, ces.std_error);
    }
}

#[test]
fn literal_representation_holds_when_exact() {
    for model in [scalar_exact(), two_state_exact()] {
        let q = model.output_weight();
        for (alpha, kappa) in [(0.9, 60), (1.2, 25)] {
            let x0: Vec<f64> = (0..model.n()).map(|i| 0.5 + i as f64).collect();
            let s = sim(&model, 40_000, kappa, 17, x0);
            let mut terminal = RepresentationTerminal::zero(model.n());
            terminal.phi = SymMatrix::identity(model.n());
            let rep = sim::validate_representation(&s, alpha, &q, &terminal).unwrap();
            assert_eq!(rep.correction, 0.0);
            assert!(rep.gap <= 4.0 * rep.std_error, "alpha {alpha}: gap {} se {}", rep.gap, rep.std_error);
        }
    }
}

#[test]
fn estimators_are_calibrated() {
    let model = scalar_exact();
    let q = model.output_weight();
    let (alpha, kappa) = (0.9, 40);
    let stages = exact_stage_energies(&model, &q, &[0.0], kappa);
    let abel = discounted(&stages, alpha);
    let cesaro = stages[..kappa].iter().sum::<f64>() / kappa as f64;
    let (mut abel_in, mut cesaro_in) = (0, 0);
    for seed in 0..100u64 {
        let s = sim(&model, 2000, kappa, 1000 + seed, vec![0.0]);
        abel_in += usize::from(sim::estimate_abel_energy(&s, &q, alpha).unwrap().z_score(abel).abs() <= 3.0);
        cesaro_in += usize::from(sim::estimate_cesaro_power(&s, &q).unwrap().z_score(cesaro).abs() <= 3.0);
    }
    assert!(abel_in >= 99, "abel: {abel_in}/100 seeds within 3 SE");
    assert!(cesaro_in >= 99, "cesaro: {cesaro_in}/100 seeds within 3 SE");
}

#[test]
fn discounted_partial_sums_stay_bounded_away_from_rest() {
    for model in [scalar_exact(), two_state_exact()] {
        let q = model.output_weight();
        let x0: Vec<f64> = (0..model.n()).map(|i| 2.0 - 3.0 * i as f64).collect();
        let stages = exact_stage_energies(&model, &q, &x0, 400);
        for alpha in [0.5, 0.9] {
            let l = solver::solve(&model, alpha, &q).unwrap().l;
            let target = alpha * ops::op_varpi(&model, &l).unwrap();
            let bound = norms::partial_sum_bound(&model, alpha, &q, &DVector::from_column_slice(&x0)).unwrap();
            let mut partial = 0.0;
            for (k, e) in stages.iter().enumerate() {
                partial += alpha.powi(k as i32) * (e - target);
                assert!(partial.abs() <= bound * (1.0 + 1e-12), "alpha {alpha} k {k}: {partial} > {bound}");
            }
        }
    }
}

#[test]
fn second_moment_envelope_holds_away_from_rest() {
    let model = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0);
    let q = model.output_weight();
    let alpha = 0.9;
    let env = norms::second_moment_envelope(&model, alpha, &q).unwrap();
    for (x0, kappa) in [(1.0, 1), (1.0, 10), (3.0, 5), (10.0, 3), (0.0, 40)] {
        let s = sim(&model, 20_000, kappa, 23, vec![x0]);
        let est = sim::estimate_centered_terminal(&s, &env.xi_bar).unwrap();
        let bound = env.bound(kappa, x0 * x0);
        assert!(
            est.value <= bound + 3.0 * est.std_error,
            "x0 {x0} kappa {kappa}: {} ± {} > {bound}",
            est.value,
            est.std_error
        );
    }
}

/// With σ_x = σ̄_x = 0 the envelope constants carry no trace of σ: c0 = 0 and
/// the bound is `c1 α^{-κ}‖x0‖²`, which is zero from rest while
/// `E x_κ² = σ²(1 − a^{2κ})/(1 − a²)`.
#[test]
fn second_moment_envelope_misses_additive_noise() {
    let model = CsviuModel::scalar(0.5, 0.0, 0.0, 0.1, 1.0);
    let env = norms::second_moment_envelope(&model, 0.9, &model.output_weight()).unwrap();
    assert_eq!(env.c0, 0.0);
    assert_eq!(env.xi_bar, vec![0.0]);
    for kappa in [1, 5, 20] {
        let exact = 0.01 * (1.0 - 0.25f64.powi(kappa)) / 0.75;
        assert!(env.bound(kappa as usize, 0.0) < exact);
    }

    let model = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0);
    let env = norms::second_moment_envelope(&model, 0.9, &model.output_weight()).unwrap();
    let s = sim(&model, 20_000, 10, 23, vec![0.0]);
    let est = sim::estimate_centered_terminal(&s, &env.xi_bar).unwrap();
    assert!(est.value > env.bound(10, 0.0) + 10.0 * est.std_error);
}

/// The discounted partial sums at a finite horizon start at `‖x0‖²_Q − αϖ(L)`,
/// so from rest they leave the band `‖x0‖²_L + ⟨v̄,|x0|⟩ = 0` at once. The
/// band is reached only in the limit.
#[test]
fn partial_sum_bound_is_a_limit_statement() {
    let model = scalar_exact();
    let q = model.output_weight();
    let alpha = 0.9;
    let l = solver::solve(&model, alpha, &q).unwrap().l;
    let target = alpha * ops::op_varpi(&model, &l).unwrap();
    let bound = norms::partial_sum_bound(&model, alpha, &q, &DVector::from_vec(vec![0.0])).unwrap();
    assert_eq!(bound, 0.0);
    let stages = exact_stage_energies(&model, &q, &[0.0], 2000);
    let partials: Vec<f64> = stages
        .iter()
        .enumerate()
        .scan(0.0, |acc, (k, e)| {
            *acc += alpha.powi(k as i32) * (e - target);
            Some(*acc)
        })
        .collect();
    assert!(partials[0].abs() > 0.01);
    assert!(partials[2000].abs() < 1e-12);
}

#[test]
fn lower_noise_overtakes_higher_noise() {
    let low = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0);
    let high = CsviuModel::scalar(0.5, 0.2, 0.3, 0.2, 1.0);
    let q = low.output_weight();
    let (alpha, kappa) = (1.1, 40);
    let stage_means = |m: &CsviuModel| -> Vec<f64> {
        let s = sim(m, 20_000, kappa, 99, vec![0.5]);
        estimate_per_stage(&s, &q).unwrap().iter().map(|e| e.value).collect()
    };
    let (a, b) = (stage_means(&low), stage_means(&high));
    let fwd = compare_overtaking(&a, &b, alpha, 0.0).unwrap();
    assert!(fwd.overtakes);
    assert_eq!(fwd.crossing_kappa, Some(0));
    let back = compare_overtaking(&b, &a, alpha, 0.0).unwrap();
    assert!(!back.overtakes);
    assert!(back.margin.last().unwrap() < &0.0);
}

/// Per path: `Σ_{k<κ} α^k x_k² − Σ_{k<κ} α^{k+1} 𝒲_d(L)|x_k| + α^κ L x_κ²`
/// has mean `L x0² + αϖ(L)(1 − α^κ)/(1 − α)`.
#[test]
fn corrected_scalar_energy_identity() {
    let model = CsviuModel::scalar(0.5, 0.2, 0.3, 0.1, 1.0);
    let q = model.output_weight();
    for (alpha, kappa, x0) in [(0.9, 80, 0.0), (0.9, 80, 1.5), (1.2, 30, 0.5)] {
        let l = solver::solve(&model, alpha, &q).unwrap().l;
        let lv = l.as_matrix()[(0, 0)];
        let w = ops::op_w_diag(&model, &l).unwrap()[0];
        let varpi = ops::op_varpi(&model, &l).unwrap();
        let s = sim(&model, 40_000, kappa, 31, vec![x0]);
        let res = s.map_paths(|p| {
            let mut acc = 0.0;
            for k in 0..kappa {
                let x = p.state(k)[0];
                acc += alpha.powi(k as i32) * (x * x - alpha * w * x.abs());
            }
            acc + alpha.powi(kappa as i32) * lv * p.state(kappa)[0].powi(2)
        });
        assert!(res.aborted.is_empty());
        let n = res.values.len() as f64;
        let mean = pairwise_sum(&res.values) / n;
        let var = res.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let geometric = if alpha == 1.0 { kappa as f64 } else { (1.0 - alpha.powi(kappa as i32)) / (1.0 - alpha) };
        let expected = lv * x0 * x0 + alpha * varpi * geometric;
        assert!((mean - expected).abs() <= 4.0 * se, "alpha {alpha} x0 {x0}: {mean} ± {se} vs {expected}");
    }
}
