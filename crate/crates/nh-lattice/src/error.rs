use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Domain(String),

    #[error("Schur iteration did not converge for a {dim}x{dim} matrix within {max_iter} sweeps")]
    NoConvergence { dim: usize, max_iter: usize },

    #[error(
        "defective eigenpair {index}: condition number {condition:.3e} exceeds {threshold:.3e}"
    )]
    Defective {
        index: usize,
        condition: f64,
        threshold: f64,
    },

    #[error("gapless spectrum: min |Re E| = {min_gap:.3e} J at k = {k}")]
    Gapless { k: f64, min_gap: f64 },

    #[error("mode tracking lost at J = {j}: best overlap {overlap:.3}")]
    Tracking { j: f64, overlap: f64 },

    #[error("sign-function iteration stalled after {iterations} steps (residual {residual:.3e})")]
    SignIteration { iterations: usize, residual: f64 },

    #[error("step-size instability at z = {z}: total intensity grew by {growth:.3e}")]
    Unstable { z: f64, growth: f64 },

    #[error("field holds intensities only; complex amplitudes are required")]
    PhaseRequired,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in sweep tables and diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Defective { .. } => "defective",
            Error::Gapless { .. } => "gapless",
            Error::Tracking { .. } => "tracking",
            Error::SignIteration { .. } => "sign_iteration",
            Error::Unstable { .. } => "unstable",
            Error::PhaseRequired => "phase_required",
            Error::Fit(_) => "fit",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
