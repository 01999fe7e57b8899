use alloc::string::String;

use crate::dressed::Label;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error(
        "matrix is not Hermitian: max asymmetry {asymmetry:e} relative to max element {scale:e}"
    )]
    NotHermitian { asymmetry: f64, scale: f64 },

    #[error("eigendecomposition did not converge")]
    EigenFailed,

    #[error("{count} dressed labels have best overlap below 0.5")]
    LabelAmbiguity { count: usize },

    #[error("dressed label {0} is missing or ambiguous")]
    MissingLabel(Label),

    #[error("photon index {n} reaches the retained photon range (max {max})")]
    TruncationEdge { n: usize, max: usize },

    #[error("self-Kerr must be positive for a bifurcation photon number, got {0}")]
    NonPositiveKerr(f64),

    #[error("Duffing response is bistable at this drive; select a branch explicitly")]
    Bifurcated,

    #[error("photon number {n_bar} exceeds the bifurcation limit {n_max}")]
    AboveBifurcation { n_bar: f64, n_max: f64 },

    #[error("no bracketing interval: target {target} exceeds model maximum {max}")]
    NoBracket { target: f64, max: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient complete dwells in |{state}>: need {needed}, got {got}")]
    InsufficientDwells {
        state: char,
        needed: usize,
        got: usize,
    },

    #[error("insufficient trigger points: need {needed}, got {got}")]
    InsufficientTriggers { needed: usize, got: usize },

    #[error("unphysical input: {0}")]
    Unphysical(String),

    #[error("fit diverged after {initializations} initializations: {reason}")]
    FitDiverged {
        reason: String,
        initializations: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
