use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x1}, {x2}) is outside the domain")]
    OutOfDomain { x1: f64, x2: f64 },

    #[error("point ({x1}, {x2}) touches a masked grid cell")]
    Masked { x1: f64, x2: f64 },

    #[error("time {t} is outside the available span [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite sample in {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("latitude {theta} rad is too close to the equator")]
    NearEquator { theta: f64 },

    #[error("latitude {theta} rad is too close to a pole")]
    NearPole { theta: f64 },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("reduced flow denominator {value:e} is below the singular threshold")]
    SingularDenominator { value: f64 },

    #[error("metric tensor is degenerate (det = {det:e})")]
    DegenerateMetric { det: f64 },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("empty seed set")]
    EmptySeedSet,

    #[error("direction field not defined: {0}")]
    NotDefined(String),
}

impl Error {
    pub(crate) fn out_of_domain(p: crate::tensor::Vec2) -> Self {
        Error::OutOfDomain { x1: p.x, x2: p.y }
    }
}
