use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("belief {s} lies outside the support [{lo}, {hi}]")]
    OutOfSupport { s: f64, lo: f64, hi: f64 },
    #[error("likelihood ratio is singular at s = 1")]
    Singular,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("log-likelihood range too small: clipped mass {clipped:.3e} exceeds {limit:.1e}")]
    RangeTooSmall { clipped: f64, limit: f64 },
    #[error("linear program infeasible: {0}")]
    InfeasibleLp(String),
    #[error("structure violation: {0}")]
    StructureViolation(String),
    #[error("line a*s - b with a = {a}, b = {b} is not implementable: {reason}")]
    LineInfeasible { a: f64, b: f64, reason: String },
    #[error("no bracket found: {0}")]
    NoBracket(String),
    #[error("distribution is not flagged log-concave with admissible slope at 1/2")]
    NotLogConcave,
    #[error("certificate function has no sign change on [0, 1]: {0}")]
    NoRoot(String),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
    #[error("indirect utility violates feasibility: {0}")]
    NonConvexUtility(String),
    #[error("persuasion menus require a two-agent market, got n = {0}")]
    WrongMarketSize(usize),
    #[error("majorization endpoints differ: H(end) = {h}, G(end) = {g}")]
    EndpointMismatch { h: f64, g: f64 },
    #[error("unsupported network: {0}")]
    UnsupportedNetwork(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidDistribution(_) | Error::Io(_) => 2,
            Error::CertificateFailed(_) => 4,
            _ => 3,
        }
    }

    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::Singular => "Singular",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::RangeTooSmall { .. } => "RangeTooSmall",
            Error::InfeasibleLp(_) => "InfeasibleLP",
            Error::StructureViolation(_) => "StructureViolation",
            Error::LineInfeasible { .. } => "LineInfeasible",
            Error::NoBracket(_) => "NoBracket",
            Error::NotLogConcave => "NotLogConcave",
            Error::NoRoot(_) => "NoRoot",
            Error::CertificateFailed(_) => "CertificateFailed",
            Error::NonConvexUtility(_) => "NonConvexUtility",
            Error::WrongMarketSize(_) => "WrongMarketSize",
            Error::EndpointMismatch { .. } => "EndpointMismatch",
            Error::UnsupportedNetwork(_) => "UnsupportedNetwork",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
