use thiserror::Error;

/// Errors raised by the laboratory modules.
///
/// Expected experimental outcomes (finite-time blow-up of an elliptic run,
/// infinite `mu` for a spectral gap) are reported in results, not here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("eigen-solver did not converge for matrix {matrix}")]
    Numerical { matrix: String },

    #[error("ambiguous spectrum: eigenvalue {re}{im:+}i lies in the guard band around tol_imag = {tol:e}")]
    AmbiguousSpectrum { re: f64, im: f64, tol: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("saturation: argument {arg:.3} exceeds {limit} (rescale lambda*t)")]
    Saturation { arg: f64, limit: f64 },

    #[error("insufficient growth: {0}")]
    InsufficientGrowth(String),

    #[error("parameter infeasible: {0}")]
    Infeasible(String),

    #[error("contraction infeasible: K_gamma*(1/R + 4|f| + R/rho) = {factor:.6} is not < 1/2 (margin {margin:.6})")]
    ContractionInfeasible { factor: f64, margin: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("under-resolved grid: spacing {have:e} exceeds required {need:e}")]
    Resolution { have: f64, need: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("self-consistency failure: {0}")]
    Divergence(String),

    #[error("usage error at `{path}`: {msg}")]
    Usage { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Usage {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
