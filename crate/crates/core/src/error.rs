use thiserror::Error;

use crate::equilibrium::EquilibriumSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval system: {0}")]
    InvalidSystem(String),

    #[error("infeasible masses: {0}")]
    InfeasibleMasses(String),

    #[error("coordinate {value} is not admissible: {reason}")]
    CoordinateOutsideSystem { value: f64, reason: String },

    #[error("component {0} has zero mass")]
    DegenerateComponent(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("nodes of intervals {0} and {1} coincide")]
    CoincidentNodesAcrossIntervals(usize, usize),

    #[error(
        "equilibrium solver stopped after {iterations} iterations with KKT residual {residual:e}"
    )]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<EquilibriumSolution>,
    },

    #[error("conditional density of block {block}, index {index} underflows on every node")]
    DegenerateConditional { block: usize, index: usize },

    #[error("dimension {n} exceeds the quadrature limit {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("moment system is ill-conditioned (condition estimate {condition:e})")]
    IllConditionedSystem { condition: f64 },

    #[error("weighted measure cannot support orthonormal polynomials of degree {degree}")]
    IllConditionedGram { degree: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidSystem(_) => "InvalidSystem",
            Error::InfeasibleMasses(_) => "InfeasibleMasses",
            Error::CoordinateOutsideSystem { .. } => "CoordinateOutsideSystem",
            Error::DegenerateComponent(_) => "DegenerateComponent",
            Error::GridMismatch(_) => "GridMismatch",
            Error::CoincidentNodesAcrossIntervals(..) => "CoincidentNodesAcrossIntervals",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::DegenerateConditional { .. } => "DegenerateConditional",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::IllConditionedSystem { .. } => "IllConditionedSystem",
            Error::IllConditionedGram { .. } => "IllConditionedGram",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
