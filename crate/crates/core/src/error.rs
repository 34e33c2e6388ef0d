use thiserror::Error;

pub type Result<T> = std::result::Result<T, CsviuError>;

#[derive(Debug, Error)]
pub enum CsviuError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The perturbed Lyapunov equation has no PSD solution; carries the
    /// spectral radius that ruled it out.
    #[error("not stable: spectral radius {spectral_radius} ({context})")]
    NotStable {
        spectral_radius: f64,
        context: String,
    },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("numerical overflow on path {path} at stage {stage}")]
    Overflow { path: u64, stage: usize },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CsviuError {
    /// Input problems (malformed files, bad shapes, out-of-domain
    /// parameters) as opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            CsviuError::Parse(_)
                | CsviuError::Dimension(_)
                | CsviuError::Value(_)
                | CsviuError::Domain(_)
                | CsviuError::Io(_)
        )
    }
}
