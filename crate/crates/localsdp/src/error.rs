use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("oracle cut is orthogonal to the slice (chart gradient {norm:e})")]
    ZeroGradient { norm: f64 },
    #[error("ellipsoid shape matrix lost positive definiteness at iteration {iteration}")]
    DegenerateShape { iteration: usize },
    #[error("shrunk polytope is empty: no feasible point found for the min-norm program")]
    EmptyShrunkPolytope,
    #[error("body has no {depth:e}-deep interior on the slice")]
    ThinBody { depth: f64 },
    #[error("certificate direction vanished (norm {norm:e})")]
    ZeroDirection { norm: f64 },
    #[error("projection has rank zero")]
    RankZeroProjection,
    #[error("moment for index {0} is not defined")]
    MissingMoment(String),
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("conditioning on an event of norm {norm:e}")]
    ZeroConditioning { norm: f64 },
    #[error("demand graph has no positive weight")]
    NoDemand,
    #[error("stage cap {cap} reached with eps_f = {eps_f:e} still above {target:e}")]
    StageCapExceeded { cap: usize, eps_f: f64, target: f64 },
    #[error("quadratic program solver failed: {0}")]
    QpFailure(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("time budget of {seconds} s exhausted")]
    TimeBudget { seconds: f64 },
    #[error("io: {0}")]
    Io(String),
    #[error("level {level}: {source}")]
    AtLevel { level: usize, source: Box<Error> },
}

impl Error {
    pub fn at_level(self, level: usize) -> Error {
        match self {
            e @ Error::AtLevel { .. } => e,
            e => Error::AtLevel { level, source: Box::new(e) },
        }
    }

    /// The innermost error with level tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
