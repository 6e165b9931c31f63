use thiserror::Error;

/// Errors raised by the solvers, estimators and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {context} at t = {t}")]
    NonFinite { context: &'static str, t: f64 },

    #[error("value {value} lies outside the prior support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("time grids do not match ({context})")]
    GridMismatch { context: &'static str },

    #[error("nuisance block of the Fisher matrix is singular (condition number {condition:e})")]
    SingularBlock { condition: f64 },

    #[error("optimizer did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("regression is rank deficient at step {step}")]
    RankDeficient { step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("sweep point {point}: {source}")]
    AtSweepPoint {
        point: String,
        #[source]
        source: Box<GameError>,
    },
}

impl From<std::io::Error> for GameError {
    fn from(e: std::io::Error) -> Self {
        GameError::Io(e.to_string())
    }
}

impl GameError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        GameError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Outermost non-wrapper error, used for exit-code classification.
    pub fn root(&self) -> &GameError {
        match self {
            GameError::AtSweepPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, GameError>;
