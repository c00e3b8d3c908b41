use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures reported by the numerical routines.
///
/// Every variant carries enough payload to be serialized as a structured
/// diagnostic by the batch front end.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Error {
    #[error("derivative of order {required_order} unavailable at node {node}")]
    MissingDerivative { node: f64, required_order: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("orbit left the interval at index {index} (value {value})")]
    OrbitEscape { index: usize, value: f64 },

    #[error("trajectory too close to the diagonal: distance product {product:e}")]
    NearDiagonal { product: f64 },

    #[error("hyperbolicity cannot be reached: derivative product along the orbit is {derivative_product}")]
    UnreachableHyperbolicity { derivative_product: f64 },

    #[error("integrand has a pole at {pole} inside [{lo}, {hi}]")]
    Pole { pole: f64, lo: f64, hi: f64 },

    #[error("no sign change of the defining equation found after {expansions} bracket expansions from {start}")]
    NoBracket { start: f64, expansions: usize },

    #[error("defining equation is not monotone on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },

    #[error("point {value} outside the domain of {what}")]
    OutOfDomain { what: String, value: f64 },

    #[error("composition left the domain at stage {stage} (value {value})")]
    DomainEscape { stage: usize, value: f64 },

    #[error("delta {delta:e} is not small enough: count {count} changes to {count_half} at delta/2; retry with a smaller delta")]
    DeltaTooLarge { delta: f64, count: usize, count_half: usize },

    #[error("degenerate critical point near arclength {arclength} (slope {slope:e})")]
    DegenerateCritical { arclength: f64, slope: f64 },

    #[error("level curve is not closed: {reason}")]
    OpenCurve { reason: String },

    #[error("critical point of the level function at {point:?} (gradient norm {gradient_norm:e})")]
    CriticalPoint { point: Vec<f64>, gradient_norm: f64 },

    #[error("point is not on the closure of the stratum (distance {distance:e})")]
    NotOnClosure { distance: f64 },

    #[error("rank condition violated: {0}")]
    Rank(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),
}
