use thiserror::Error;

/// Errors raised by the numerical pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ambiguous dressed-state labeling: {}", describe_conflicts(.conflicts))]
    Labeling { conflicts: Vec<LabelConflict> },

    #[error("singular expression: {0}")]
    Singularity(String),

    #[error("resolvent pole collision: |z - E_m| = {distance:.3e} at intermediate state {state}")]
    PoleCollision { state: String, distance: f64 },

    #[error("fixed point did not converge after {iterations} iterations (last residual {:.3e})", .residuals.last().copied().unwrap_or(f64::NAN))]
    Convergence { iterations: usize, residuals: Vec<f64> },

    #[error("fit error: {message}")]
    Fit { message: String, residual_history: Vec<f64> },

    #[error("no root bracketed in [{lo}, {hi}]")]
    Bracketing { lo: f64, hi: f64 },

    #[error("lost track of the resonant pair at omega = {omega} rad/ns (overlap {overlap:.4})")]
    Tracking { omega: f64, overlap: f64 },

    #[error("value {value} outside valid range [{lo}, {hi}]: {what}")]
    Range { what: String, value: f64, lo: f64, hi: f64 },

    #[error("integrator step size underflow at t = {t} ns (h = {h:e})")]
    Stiffness { t: f64, h: f64 },

    #[error("peak detection failed: {0}")]
    Detection(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One label that could not be assigned uniquely.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelConflict {
    pub label: String,
    pub eigen_index: usize,
    pub overlap_sq: f64,
    pub claimed_by: Option<String>,
}

fn describe_conflicts(conflicts: &[LabelConflict]) -> String {
    conflicts
        .iter()
        .map(|c| match &c.claimed_by {
            Some(other) => format!(
                "{} -> eigenvector {} already taken by {} (|overlap|^2 = {:.3})",
                c.label, c.eigen_index, other, c.overlap_sq
            ),
            None => format!(
                "{} -> eigenvector {} (|overlap|^2 = {:.3} < 0.5)",
                c.label, c.eigen_index, c.overlap_sq
            ),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
