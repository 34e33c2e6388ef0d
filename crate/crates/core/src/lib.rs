//! Stability analysis, Lyapunov-type equations, energy norms and Monte Carlo
//! validation for discrete-time systems whose noise grows with the distance
//! of the state from the operating point:
//!
//! ```text
//! x_{k+1} = A x_k + B ℓ_k + (σ_x + σ̄_x diag|x_k|) ε_k + σ ω_k
//! y_k     = C x_k + D ℓ_k
//! ```

pub mod error;
pub mod linalg;
pub mod model;
pub mod norms;
pub mod ops;
pub mod sim;
pub mod solver;
pub mod stability;

pub use error::{CsviuError, Result};
pub use linalg::SymMatrix;
pub use model::{load_config, load_model, AnalysisConfig, CsviuModel, ModelDescription};
pub use norms::NormReport;
pub use ops::{OperatorKind, OperatorRep};
pub use sim::{EnergyEstimate, SimConfig, Simulator};
pub use solver::{LyapunovSolution, RecursionTriple, SolveMethod};
pub use stability::{DetectabilityResult, StabilityReport, Verdict};
