use thiserror::Error;

/// Every failure the library can report. Variants name the violated precondition.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("edge {{{i}, {j}}} has nonpositive weight {w}")]
    NonpositiveWeight { i: usize, j: usize, w: f64 },
    #[error("vertex index {index} out of range for n = {n}")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("invalid radius: {0}")]
    InvalidRadius(String),
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),
    #[error("unstable delay: tau = {tau} must be < pi/(2 lambda_n) = {limit}")]
    UnstableDelay { tau: f64, limit: f64 },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("perturbation too large: ||Delta L0^+|| = {0} >= 1")]
    PerturbationTooLarge(f64),
    #[error("eigenvalue range [{lo}, {hi}] straddles the critical eigenvalue {critical}")]
    RegimeStraddle { lo: f64, hi: f64, critical: f64 },
    #[error("degenerate marginal: {0}")]
    DegenerateMarginal(String),
    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),
    #[error("invalid simulation config: {0}")]
    ConfigError(String),
    #[error("too few samples: {0}")]
    TooFewSamples(usize),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable variant name, used in CLI messages and sweep status columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::SelfLoop(_) => "SelfLoop",
            Error::DuplicateEdge(..) => "DuplicateEdge",
            Error::NonpositiveWeight { .. } => "NonpositiveWeight",
            Error::VertexOutOfRange { .. } => "VertexOutOfRange",
            Error::InvalidRadius(_) => "InvalidRadius",
            Error::EigenFailure(_) => "EigenFailure",
            Error::KernelMismatch(_) => "KernelMismatch",
            Error::UnstableDelay { .. } => "UnstableDelay",
            Error::OutOfRange(_) => "OutOfRange",
            Error::PerturbationTooLarge(_) => "PerturbationTooLarge",
            Error::RegimeStraddle { .. } => "RegimeStraddle",
            Error::DegenerateMarginal(_) => "DegenerateMarginal",
            Error::NumericalUnderflow(_) => "NumericalUnderflow",
            Error::ConfigError(_) => "ConfigError",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::QuadratureNonConvergence(_) => "QuadratureNonConvergence",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal diagnostics attached to results.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind")]
pub enum Warning {
    /// The delay sits within a hair of the stability limit.
    ConditioningWarning { tau: f64, limit: f64 },
    /// A radius exceeded the cap and was clamped.
    RadiusCapped { raw: f64, cap: f64 },
}
