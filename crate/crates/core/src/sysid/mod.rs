//! Joint state estimation and parameter identification.
//!
//! Unknowns are a subset `P` of [`ModelParams`] and the configuration
//! trajectory `Q`. Residuals compare inverse-dynamics torques with the
//! recorded torques, demand zero unexplained force on the unactuated object,
//! and compare the sensor model with the readings. The weighted least-squares
//! problem is solved by Levenberg-damped Gauss-Newton.
//!
//! [`ModelParams`]: crate::sim::ModelParams

mod band;
mod proxy;
mod report;
mod run;
mod solve;

pub use band::{BandCholesky, BandMatrix};
pub use proxy::{pushing_run, HardwareProxy, PushScript};
pub use run::{RecordedRun, RUN_CSV_HEADER};
pub use solve::{
    gauss_newton, residuals, FitResult, SolverOptions, SysIdProblem, Termination, RESIDUALS_PER_SAMPLE,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SysIdError {
    #[error("invalid recorded run: {0}")]
    InvalidRun(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("invalid identification problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite residual at sample {sample} (parameters {params})")]
    NonFiniteResidual { sample: usize, params: String },
    #[error("normal equations stayed singular up to damping {damping:e}")]
    JacobianSingular { damping: f64 },
    #[error("simulation failed: {0}")]
    Sim(#[from] crate::sim::SimError),
    #[error("io: {0}")]
    Io(String),
}
