use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("point {point:?} lies outside the coordinate box")]
    OutOfDomain { point: Vec<f64> },
    #[error("metric is not positive definite at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("regularity violated: |W_v| = {w_v:e} at x = {x:?}, v = {v}")]
    Regularity { x: Vec<f64>, v: f64, w_v: f64 },
    #[error("speed {speed:e} is below the minimum {v_min:e}")]
    ZeroVelocity { speed: f64, v_min: f64 },
    #[error("transversality fails: |{what}| = {value:e} at x = {x:?}, v = {v}")]
    Transversality { what: &'static str, x: Vec<f64>, v: f64, value: f64 },
    #[error("normalizing scalar vanishes: a = {a:e} at x = {x:?}, v = {v}")]
    ZeroNormalizer { x: Vec<f64>, v: f64, a: f64 },
    #[error("invalid gauge: {0}")]
    Gauge(String),
    #[error("section is not compatible: residual {residual:e} at {point:?}")]
    Incompatible { residual: f64, point: Vec<f64> },
    #[error("1-form is not closed: residual {residual:e} at {point:?}")]
    NotClosed { residual: f64, point: Vec<f64> },
    #[error("Pfaff solution escapes {bounds:?} at x = {x:?} (V = {value})")]
    Escape { x: Vec<f64>, value: f64, bounds: (f64, f64) },
    #[error("no bracket: {0}")]
    NoBracket(String),
    #[error("invertibility lost: {0}")]
    InvertibilityLost(String),
    #[error("tangent frame is rank deficient at u = {0:?}")]
    RankDeficient(Vec<f64>),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(what: impl Into<String>, source: ParseError) -> Self {
        Error::Parse { what: what.into(), source }
    }
}
