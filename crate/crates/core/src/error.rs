use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("loss of precision while composing stage {stage}: {detail}")]
    Precision { stage: usize, detail: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unstable at y = {y}: stability threshold is {y_star}")]
    Unstable { y: f64, y_star: f64 },

    #[error("near resonance at y = {y}: sin(phi) vanishes but K is not +-I")]
    NearResonance { y: f64 },

    #[error("no real sum-of-squares split: {0}")]
    NoRealSplit(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("not factorizable: {0}")]
    NotFactorizable(String),

    #[error("infeasible design target: {0}")]
    Infeasible(String),

    #[error("stability gate: tau*rho = {tau_rho} but y* = {y_star}")]
    StabilityGate { tau_rho: f64, y_star: f64 },

    #[error("state became non-finite at step {step}")]
    Blowup { step: usize },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("unknown method name: {0}")]
    UnknownMethod(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag for CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Parity(_) => "parity",
            Error::Precision { .. } => "precision",
            Error::NonFinite(_) => "non_finite",
            Error::Unstable { .. } => "unstable",
            Error::NearResonance { .. } => "near_resonance",
            Error::NoRealSplit(_) => "no_real_split",
            Error::RootFinding(_) => "root_finding",
            Error::NotFactorizable(_) => "not_factorizable",
            Error::Infeasible(_) => "infeasible",
            Error::StabilityGate { .. } => "stability_gate",
            Error::Blowup { .. } => "blowup",
            Error::NoConvergence(_) => "no_convergence",
            Error::UnknownMethod(_) => "unknown_method",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
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
