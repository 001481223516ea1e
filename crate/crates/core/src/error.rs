use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{0}` must be positive (got {1})")]
    NonPositiveParameter(&'static str, f64),
    #[error("grid spacing h = {h} exceeds delta/4 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },
    #[error("boundary mesh needs at least 16 samples (got {0})")]
    TooFewSamples(usize),
    #[error("state region does not cover the requested region: {0}")]
    RegionMismatch(String),
    #[error("non-finite sample in field `{0}` at node {1}")]
    NonFinite(&'static str, usize),
    #[error("extension collar too wide for the geometry: reflection point {0:?} leaves the domain")]
    ExtensionTooWide([f64; 2]),
    #[error("evaluation time must be positive (got {0})")]
    NonPositiveTime(f64),
    #[error("time {t} is below the far-field threshold t* = {t_star}")]
    TimeTooSmall { t: f64, t_star: f64 },
    #[error("time step {dt} violates the stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("control trace covers [0, {covered}] but the run needs [0, {needed}]")]
    TraceTooShort { covered: f64, needed: f64 },
    #[error("trajectory was not produced in damping mode with k = {0}")]
    ModeMismatch(f64),
    #[error("no admissible value found within the budget: {0}")]
    BudgetExhausted(String),
    #[error("Neumann series did not converge after {terms} terms (last term ratio {ratio:e})")]
    NoConvergence { terms: usize, ratio: f64 },
    #[error("control bound exceeded: sup|u| = {sup_u:e} > eps = {eps:e}")]
    ControlBoundExceeded { sup_u: f64, eps: f64 },
    #[error("initial data violate the compatibility conditions (max violation {0:e})")]
    IncompatibleData(f64),
    #[error("config error at line {line}, key `{key}`: {msg}")]
    Config { line: usize, key: String, msg: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
