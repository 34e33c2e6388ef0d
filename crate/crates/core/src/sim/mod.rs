//! Seeded Monte Carlo engine for the CSVIU dynamics.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), so an ensemble is a pure function of the configuration no matter
//! how paths are scheduled across threads. Reductions use pairwise
//! summation over path-ordered values.

mod engine;
mod estimate;
mod representation;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CsviuError, Result};
use crate::linalg::matrix_to_rows;
use crate::model::CsviuModel;

pub use engine::{write_trajectory_csv, Abort, Ensemble, PathResults, PathSource, PathView, Simulator};
pub use estimate::{
    check_decay, compare_overtaking, estimate_abel_energies, estimate_abel_energy, estimate_centered_terminal,
    estimate_cesaro_power, estimate_per_stage, estimate_stages, summarize, DecayCheck, DecayRow, EnergyEstimate,
    EstimateKind, OvertakingResult,
};
pub use representation::{validate_representation, RepresentationCheck, RepresentationTerminal};

/// Paths whose state leaves this magnitude are aborted.
pub const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Rademacher,
    /// Uniform on `[−√3, √3]`
    Uniform,
}

impl NoiseKind {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseKind::Uniform => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = CsviuError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            "uniform" => Ok(NoiseKind::Uniform),
            other => Err(CsviuError::Parse(format!("unknown noise kind {other:?}"))),
        }
    }
}

/// Deterministic exogenous input `ℓ_k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum InputPolicy {
    #[default]
    Zero,
    Constant(Vec<f64>),
    /// `ℓ_k = K x_k`, rows of the m×n gain `K`.
    StateFeedback(Vec<Vec<f64>>),
}

impl InputPolicy {
    pub fn state_feedback(k: &DMatrix<f64>) -> Self {
        InputPolicy::StateFeedback(matrix_to_rows(k))
    }

    fn validate_for(&self, model: &CsviuModel) -> Result<()> {
        let m = model.m();
        match self {
            InputPolicy::Zero => Ok(()),
            InputPolicy::Constant(l) => {
                if m == 0 {
                    return Err(CsviuError::Dimension("constant input needs a model with m > 0".into()));
                }
                if l.len() != m {
                    return Err(CsviuError::Dimension(format!(
                        "constant input has length {}, expected {m}",
                        l.len()
                    )));
                }
                finite(l, "constant input")
            }
            InputPolicy::StateFeedback(rows) => {
                if m == 0 {
                    return Err(CsviuError::Dimension("state feedback needs a model with m > 0".into()));
                }
                if rows.len() != m || rows.iter().any(|r| r.len() != model.n()) {
                    return Err(CsviuError::Dimension(format!(
                        "state-feedback gain must be {m}×{}",
                        model.n()
                    )));
                }
                rows.iter().try_for_each(|r| finite(r, "state-feedback gain"))
            }
        }
    }
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CsviuError::Value(format!("{what} has a non-finite entry")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub input_policy: InputPolicy,
}

impl SimConfig {
    pub fn new(n_paths: usize, horizon: usize, seed: u64, x0: Vec<f64>) -> Self {
        SimConfig {
            n_paths,
            horizon,
            seed,
            noise_kind: NoiseKind::Gaussian,
            x0,
            input_policy: InputPolicy::Zero,
        }
    }

    pub fn with_noise(mut self, kind: NoiseKind) -> Self {
        self.noise_kind = kind;
        self
    }

    pub fn with_input(mut self, policy: InputPolicy) -> Self {
        self.input_policy = policy;
        self
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    pub fn validate_for(&self, model: &CsviuModel) -> Result<()> {
        if self.n_paths == 0 {
            return Err(CsviuError::Value("n_paths must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(CsviuError::Value("horizon must be positive".into()));
        }
        if self.x0.len() != model.n() {
            return Err(CsviuError::Dimension(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                model.n()
            )));
        }
        finite(&self.x0, "x0")?;
        self.input_policy.validate_for(model)
    }
}
