use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    Curve(String),

    #[error("t = {t} lies beyond the last curve pillar ({last})")]
    Extrapolation { t: f64, last: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty path set")]
    EmptyPathSet,

    #[error("rank-deficient regression design; dependent features: {features:?}")]
    RankDeficient { features: Vec<String> },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("problem too large for enumeration: {0}")]
    TooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Pipeline stage, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Curve,
    Dynamics,
    Swap,
    Costs,
    Solver,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Config => "config",
            Self::Curve => "curve",
            Self::Dynamics => "dynamics",
            Self::Swap => "swap",
            Self::Costs => "costs",
            Self::Solver => "solver",
            Self::Output => "output",
        };
        f.write_str(name)
    }
}

/// Tags an error with the stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<Error>> StageContext<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e.into()) })
    }
}
