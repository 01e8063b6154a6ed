//! Score-function policy gradient, empirical Fisher information and the
//! normalized natural-gradient step.

use nalgebra::{DMatrix, DVector};

use crate::policy::AffineGaussianPolicy;

/// Relative Tikhonov damping applied to the Fisher matrix.
pub const FISHER_DAMPING: f64 = 1e-6;
/// Below this value of `gᵀF⁻¹g` the gradient is considered vanished.
pub const MIN_NATURAL_NORM: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NpgError {
    #[error("degenerate gradient: gᵀF⁻¹g = {0:e}")]
    DegenerateGradient(f64),
    #[error("Fisher matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("step size must be positive, got {0}")]
    InvalidStepSize(f64),
    #[error("no samples")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: DVector<f64>,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherEstimate {
    pub f: DMatrix<f64>,
    pub sample_count: u64,
}

/// One state-action pair with its advantage.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    pub advantage: f64,
}

/// `g = (1/N) Σ ∇_θ log π(a|s) · Â`.
pub fn policy_gradient<'a>(
    policy: &AffineGaussianPolicy,
    samples: impl IntoIterator<Item = Sample<'a>>,
) -> GradientEstimate {
    let mut g = DVector::zeros(policy.dim());
    let mut count = 0u64;
    for s in samples {
        let score = policy.grad_log_prob(s.obs, s.action);
        g.axpy(s.advantage, &DVector::from_vec(score), 1.0);
        count += 1;
    }
    if count > 0 {
        g /= count as f64;
    }
    GradientEstimate {
        g,
        sample_count: count,
    }
}

/// Empirical Fisher `(1/N) Σ ∇log π ∇log πᵀ`, symmetrized and damped.
pub fn fisher<'a>(
    policy: &AffineGaussianPolicy,
    samples: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<FisherEstimate, NpgError> {
    let d = policy.dim();
    let mut f = DMatrix::zeros(d, d);
    let mut count = 0u64;
    for (obs, action) in samples {
        let score = DVector::from_vec(policy.grad_log_prob(obs, action));
        f.ger(1.0, &score, &score, 1.0);
        count += 1;
    }
    if count == 0 {
        return Err(NpgError::NoSamples);
    }
    f /= count as f64;
    Ok(FisherEstimate {
        f: damp(symmetrize(f)),
        sample_count: count,
    })
}

pub fn symmetrize(f: DMatrix<f64>) -> DMatrix<f64> {
    (&f + f.transpose()) * 0.5
}

/// Adds `ε·tr(F)/d·I` so the matrix is strictly positive definite.
pub fn damp(mut f: DMatrix<f64>) -> DMatrix<f64> {
    let d = f.nrows();
    let shift = FISHER_DAMPING * f.trace() / d as f64;
    for i in 0..d {
        f[(i, i)] += shift;
    }
    f
}

/// Result of a normalized natural-gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalStep {
    pub delta: DVector<f64>,
    /// `gᵀF⁻¹g`.
    pub natural_norm_sq: f64,
}

/// `Δθ = sqrt(δ / gᵀF⁻¹g) · F⁻¹g`, via a Cholesky solve.
///
/// The returned step satisfies `ΔθᵀFΔθ = δ`.
pub fn natural_step(g: &DVector<f64>, f: &DMatrix<f64>, step_size: f64) -> Result<NaturalStep, NpgError> {
    if !(step_size > 0.0) {
        return Err(NpgError::InvalidStepSize(step_size));
    }
    let chol = f.clone().cholesky().ok_or(NpgError::NotPositiveDefinite)?;
    let nat = chol.solve(g);
    let quad = g.dot(&nat);
    if !(quad > MIN_NATURAL_NORM) {
        return Err(NpgError::DegenerateGradient(quad));
    }
    Ok(NaturalStep {
        delta: nat * (step_size / quad).sqrt(),
        natural_norm_sq: quad,
    })
}
