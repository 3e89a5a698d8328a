use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fractional order s = {0}: must lie in (0, 1)")]
    InvalidOrder(f64),

    #[error("unsupported spatial dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge on cell pair ({cell_a}, {cell_b})")]
    QuadratureNonConvergence { cell_a: usize, cell_b: usize },

    #[error("linear solver did not converge after {} iterations (residual {:.3e})", .report.iterations, .report.final_residual)]
    NonConvergence { report: SolveReport },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("Armijo line search found no step >= {min_step:e} at iteration {iteration}")]
    LineSearchFailure { iteration: usize, min_step: f64 },

    #[error("optimizer reached the iteration limit ({} iterations)", .best.iterations)]
    MaxIterations { best: Box<crate::control::OptimizationResult> },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
