use nalgebra::{DMatrix, DVector};

use crate::sim::{inverse_dynamics, Configuration, ModelParams, CONFIG_DIM, NUM_JOINTS};

use super::band::BandMatrix;
use super::run::RecordedRun;
use super::SysIdError;

/// Residual entries per interior sample: joint torques, the unexplained
/// force on the object, and sensor readings.
pub const RESIDUALS_PER_SAMPLE: usize = NUM_JOINTS + 2 + CONFIG_DIM;

const R: usize = RESIDUALS_PER_SAMPLE;
const S: usize = CONFIG_DIM;
/// Samples `j` and `k` share a residual block when `|j - k| <= 2`.
const BAND_WIDTH: usize = 3 * S - 1;

/// What to identify and how to weigh the residual groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SysIdProblem {
    /// Keys of the free parameters, as in the model file.
    pub free: Vec<String>,
    /// Starting parameters; entries not in `free` stay fixed.
    pub initial: ModelParams,
    /// Starting state estimate. `None` uses the sensor readings. The first
    /// and last samples are held at this estimate.
    pub initial_states: Option<Vec<Configuration>>,
    /// Weight of the torque and object-force residuals.
    pub torque_weight: f64,
    /// Weight of the sensor residuals.
    pub sensor_weight: f64,
}

impl SysIdProblem {
    pub fn new(free: &[&str], initial: ModelParams) -> Self {
        Self {
            free: free.iter().map(|s| s.to_string()).collect(),
            initial,
            initial_states: None,
            torque_weight: 1.0,
            sensor_weight: 1e4,
        }
    }

    pub fn validate(&self, run: &RecordedRun) -> Result<(), SysIdError> {
        run.validate()?;
        if self.free.is_empty() {
            return Err(SysIdError::InvalidProblem("no free parameters".into()));
        }
        for (i, key) in self.free.iter().enumerate() {
            if self.initial.get(key).is_none() {
                return Err(SysIdError::InvalidProblem(format!("unknown parameter `{key}`")));
            }
            if self.free[..i].contains(key) {
                return Err(SysIdError::InvalidProblem(format!("parameter `{key}` listed twice")));
            }
        }
        for (name, w) in [("torque", self.torque_weight), ("sensor", self.sensor_weight)] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(SysIdError::InvalidProblem(format!("{name} weight must be positive, got {w}")));
            }
        }
        if let Some(q) = &self.initial_states {
            if q.len() != run.len() {
                return Err(SysIdError::InvalidProblem(format!(
                    "{} initial states for {} samples",
                    q.len(),
                    run.len()
                )));
            }
        }
        self.initial
            .validate()
            .map_err(|e| SysIdError::InvalidProblem(e.to_string()))
    }
}

/// Solver settings. Defaults follow the documented stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_cost_tol: f64,
    /// Stop when the accepted step is shorter than this.
    pub step_tol: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
    pub fd_rel_step: f64,
    pub fd_abs_step: f64,
    /// Parameters whose residual sensitivity `‖∂r/∂p‖·|p|` falls below this
    /// are reported as non-identifiable and held fixed.
    pub identifiability_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_cost_tol: 1e-10,
            step_tol: 1e-10,
            initial_damping: 1e-3,
            max_damping: 1e12,
            fd_rel_step: 1e-6,
            fd_abs_step: 1e-8,
            identifiability_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost decrease fell below tolerance.
    CostConverged,
    /// Step length fell below tolerance.
    StepConverged,
    /// No damping up to the limit produced a decrease.
    DampingLimit,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub states: Vec<Configuration>,
    /// All requested parameters, in the order given.
    pub free: Vec<String>,
    pub initial_values: Vec<f64>,
    pub values: Vec<f64>,
    /// Scaled residual sensitivity `‖∂r/∂p‖·max(|p|, fd_abs_step)` at the start.
    pub sensitivity: Vec<f64>,
    /// Parameters held fixed because their sensitivity is below threshold.
    pub non_identifiable: Vec<String>,
    /// Standard-error proxy from the diagonal of `JᵀJ` (NaN when held fixed).
    pub std_diag: Vec<f64>,
    /// Standard error after eliminating the states (NaN when held fixed).
    pub std_marginal: Vec<f64>,
    /// `½‖r‖²` at the start and after each accepted step.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub residual_dim: usize,
    pub sample_count: usize,
}

impl FitResult {
    pub fn cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace starts with the initial cost")
    }

    pub fn initial_cost(&self) -> f64 {
        self.cost_trace[0]
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.params.get(key)
    }
}

#[derive(Clone, Copy)]
struct Weights {
    torque: f64,
    sensor: f64,
}

impl Weights {
    fn of(problem: &SysIdProblem) -> Self {
        Self {
            torque: problem.torque_weight.sqrt(),
            sensor: problem.sensor_weight.sqrt(),
        }
    }
}

fn block(
    params: &ModelParams,
    q: [&[f64; S]; 3],
    u: &[f64; NUM_JOINTS],
    s: &[f64; S],
    w: Weights,
    dt: f64,
) -> [f64; R] {
    let c = q.map(|v| Configuration::from_slice(v));
    let id = inverse_dynamics(&c[0], &c[1], &c[2], params, dt);
    let mut r = [0.0; R];
    for j in 0..NUM_JOINTS {
        r[j] = w.torque * (id.torques[j] - u[j]);
    }
    r[NUM_JOINTS] = w.torque * id.object_force.x;
    r[NUM_JOINTS + 1] = w.torque * id.object_force.y;
    for j in 0..S {
        r[NUM_JOINTS + 2 + j] = w.sensor * (id.sensors[j] - s[j]);
    }
    r
}

fn residual_blocks(
    params: &ModelParams,
    states: &[[f64; S]],
    run: &RecordedRun,
    w: Weights,
) -> Vec<[f64; R]> {
    (1..states.len() - 1)
        .map(|i| {
            block(
                params,
                [&states[i - 1], &states[i], &states[i + 1]],
                &run.torques[i],
                &run.sensors[i],
                w,
                run.dt,
            )
        })
        .collect()
}

fn half_sq_norm(blocks: &[[f64; R]]) -> f64 {
    0.5 * blocks.iter().flatten().map(|v| v * v).sum::<f64>()
}

/// Stacked residual vector for parameters `params` and states `states`,
/// one block of [`RESIDUALS_PER_SAMPLE`] entries per interior sample:
/// `√w_τ·(τ̂ − u)`, `√w_τ·f_obj`, `√w_s·(ŝ − s)`.
pub fn residuals(
    problem: &SysIdProblem,
    params: &ModelParams,
    states: &[Configuration],
    run: &RecordedRun,
) -> Result<Vec<f64>, SysIdError> {
    if states.len() != run.len() {
        return Err(SysIdError::InvalidProblem(format!(
            "{} states for {} samples",
            states.len(),
            run.len()
        )));
    }
    let q: Vec<[f64; S]> = states.iter().map(Configuration::to_array).collect();
    Ok(residual_blocks(params, &q, run, Weights::of(problem)).concat())
}

/// Linearization of the residual around the current estimate.
struct Normal {
    cost: f64,
    /// States-by-states block of `JᵀJ`.
    b: BandMatrix,
    /// States-by-parameters block, row major (`m × k`).
    c: Vec<f64>,
    d: DMatrix<f64>,
    gq: Vec<f64>,
    gp: DVector<f64>,
}

struct Estimate {
    params: ModelParams,
    states: Vec<[f64; S]>,
}

fn fd_step(v: f64, opts: &SolverOptions) -> f64 {
    (opts.fd_rel_step * v.abs()).max(opts.fd_abs_step)
}

fn set(params: &ModelParams, key: &str, v: f64) -> ModelParams {
    let mut p = params.clone();
    *p.field_mut(key).expect("validated key") = v;
    p
}

fn linearize(
    est: &Estimate,
    keys: &[String],
    run: &RecordedRun,
    w: Weights,
    opts: &SolverOptions,
) -> Normal {
    let n = est.states.len();
    let k = keys.len();
    let m = (n - 2) * S;
    let mut b = BandMatrix::zeros(m, BAND_WIDTH);
    let mut c = vec![0.0; m * k];
    let mut d = DMatrix::zeros(k, k);
    let mut gq = vec![0.0; m];
    let mut gp = DVector::zeros(k);
    let mut cost = 0.0;

    // Perturbed models are shared by every block.
    let perturbed: Vec<(ModelParams, ModelParams, f64)> = keys
        .iter()
        .map(|key| {
            let v = est.params.get(key).expect("validated key");
            let h = fd_step(v, opts);
            (set(&est.params, key, v + h), set(&est.params, key, v - h), h)
        })
        .collect();

    let mut jq = [[[0.0; S]; R]; 3];
    let mut jp = vec![[0.0; R]; k];
    for i in 1..n - 1 {
        let mut q = [est.states[i - 1], est.states[i], est.states[i + 1]];
        let at = |q: &[[f64; S]; 3], p: &ModelParams| {
            block(p, [&q[0], &q[1], &q[2]], &run.torques[i], &run.sensors[i], w, run.dt)
        };
        let r0 = at(&q, &est.params);
        cost += 0.5 * r0.iter().map(|v| v * v).sum::<f64>();
        // Columns for the three states this block reads; endpoints are fixed.
        let free = [i >= 2, true, i + 2 < n];
        for slot in 0..3 {
            if !free[slot] {
                continue;
            }
            for a in 0..S {
                let v = q[slot][a];
                let h = fd_step(v, opts);
                q[slot][a] = v + h;
                let rp = at(&q, &est.params);
                q[slot][a] = v - h;
                let rm = at(&q, &est.params);
                q[slot][a] = v;
                for row in 0..R {
                    jq[slot][row][a] = (rp[row] - rm[row]) / (2.0 * h);
                }
            }
        }
        for (col, (pp, pm, h)) in jp.iter_mut().zip(&perturbed) {
            let rp = at(&q, pp);
            let rm = at(&q, pm);
            for row in 0..R {
                col[row] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }

        // Accumulate JᵀJ and Jᵀr for this block.
        for sa in 0..3 {
            if !free[sa] {
                continue;
            }
            let base_a = (i + sa - 2) * S;
            for sb in 0..=sa {
                if !free[sb] {
                    continue;
                }
                let base_b = (i + sb - 2) * S;
                for a in 0..S {
                    let b_hi = if sa == sb { a + 1 } else { S };
                    for bb in 0..b_hi {
                        let mut acc = 0.0;
                        for row in 0..R {
                            acc += jq[sa][row][a] * jq[sb][row][bb];
                        }
                        if acc != 0.0 {
                            b.add(base_a + a, base_b + bb, acc);
                        }
                    }
                }
            }
            for a in 0..S {
                let mut g = 0.0;
                for row in 0..R {
                    g += jq[sa][row][a] * r0[row];
                }
                gq[base_a + a] += g;
                for (p, col) in jp.iter().enumerate() {
                    let mut acc = 0.0;
                    for row in 0..R {
                        acc += jq[sa][row][a] * col[row];
                    }
                    c[(base_a + a) * k + p] += acc;
                }
            }
        }
        for p in 0..k {
            gp[p] += jp[p].iter().zip(&r0).map(|(a, b)| a * b).sum::<f64>();
            for p2 in 0..=p {
                let acc: f64 = jp[p].iter().zip(&jp[p2]).map(|(a, b)| a * b).sum();
                d[(p, p2)] += acc;
                if p2 != p {
                    d[(p2, p)] += acc;
                }
            }
        }
    }
    Normal { cost, b, c, d, gq, gp }
}

/// Solves the damped normal equations by eliminating the states.
/// Returns `(Δq, Δp)`, or `None` when a factorization fails.
fn damped_step(nq: &Normal, damping: f64) -> Option<(Vec<f64>, DVector<f64>)> {
    let m = nq.gq.len();
    let k = nq.gp.len();
    let mut b = nq.b.clone();
    let extra: Vec<f64> = b.diagonal().iter().map(|v| damping * (v + 1e-12)).collect();
    b.add_diagonal(&extra);
    let chol = b.cholesky()?;
    let y = chol.solve(&nq.gq);
    // Y = B⁻¹C, column by column.
    let mut ycols = Vec::with_capacity(k);
    for p in 0..k {
        let col: Vec<f64> = (0..m).map(|r| nq.c[r * k + p]).collect();
        ycols.push(chol.solve(&col));
    }
    let mut schur = nq.d.clone();
    for p in 0..k {
        schur[(p, p)] += damping * (nq.d[(p, p)] + 1e-12);
    }
    let mut rhs = -nq.gp.clone();
    for p in 0..k {
        for r in 0..m {
            rhs[p] += nq.c[r * k + p] * y[r];
        }
        for (p2, yc) in ycols.iter().enumerate() {
            let dot: f64 = (0..m).map(|r| nq.c[r * k + p] * yc[r]).sum();
            schur[(p, p2)] -= dot;
        }
    }
    let dp = if k == 0 {
        DVector::zeros(0)
    } else {
        schur.cholesky()?.solve(&rhs)
    };
    let mut dq: Vec<f64> = y.iter().map(|v| -v).collect();
    for (p, yc) in ycols.iter().enumerate() {
        for r in 0..m {
            dq[r] -= yc[r] * dp[p];
        }
    }
    Some((dq, dp))
}

/// Standard-error proxies `(from diag JᵀJ, after eliminating the states)`.
fn confidence(nq: &Normal, dof_cost: f64) -> (Vec<f64>, Vec<f64>) {
    let k = nq.gp.len();
    let diag = (0..k).map(|p| (dof_cost / nq.d[(p, p)]).sqrt()).collect();
    let marginal = match schur_inverse(nq) {
        Some(inv) => (0..k).map(|p| (dof_cost * inv[(p, p)]).sqrt()).collect(),
        None => vec![f64::NAN; k],
    };
    (diag, marginal)
}

fn schur_inverse(nq: &Normal) -> Option<DMatrix<f64>> {
    let m = nq.gq.len();
    let k = nq.gp.len();
    let chol = nq.b.cholesky()?;
    let mut schur = nq.d.clone();
    for p2 in 0..k {
        let col: Vec<f64> = (0..m).map(|r| nq.c[r * k + p2]).collect();
        let yc = chol.solve(&col);
        for p in 0..k {
            schur[(p, p2)] -= (0..m).map(|r| nq.c[r * k + p] * yc[r]).sum::<f64>();
        }
    }
    schur.try_inverse()
}

fn apply(est: &Estimate, keys: &[String], dq: &[f64], dp: &DVector<f64>) -> Estimate {
    let mut params = est.params.clone();
    for (key, d) in keys.iter().zip(dp.iter()) {
        *params.field_mut(key).expect("validated key") += d;
    }
    let mut states = est.states.clone();
    let n = states.len();
    for (i, state) in states.iter_mut().enumerate().take(n - 1).skip(1) {
        for a in 0..S {
            state[a] += dq[(i - 1) * S + a];
        }
    }
    Estimate { params, states }
}

fn first_non_finite(blocks: &[[f64; R]]) -> Option<usize> {
    blocks.iter().position(|b| b.iter().any(|v| !v.is_finite())).map(|i| i + 1)
}

/// Levenberg-damped Gauss-Newton on the joint (parameters, states) vector.
///
/// Damping scales the diagonal of `JᵀJ`; it is multiplied by 10 after a
/// rejected step and divided by 3 after an accepted one. A trial point with
/// a non-finite residual counts as rejected; a non-finite residual at the
/// starting point is an error.
pub fn gauss_newton(
    problem: &SysIdProblem,
    run: &RecordedRun,
    opts: &SolverOptions,
) -> Result<FitResult, SysIdError> {
    problem.validate(run)?;
    let w = Weights::of(problem);
    let start: Vec<[f64; S]> = match &problem.initial_states {
        Some(q) => q.iter().map(Configuration::to_array).collect(),
        None => run.sensors.clone(),
    };
    let mut est = Estimate {
        params: problem.initial.clone(),
        states: start,
    };
    let initial_values: Vec<f64> = problem.free.iter().map(|k| problem.initial.get(k).unwrap()).collect();
    let blocks = residual_blocks(&est.params, &est.states, run, w);
    if let Some(sample) = first_non_finite(&blocks) {
        return Err(SysIdError::NonFiniteResidual {
            sample,
            params: format!("{initial_values:?}"),
        });
    }

    // Identifiability check on all requested parameters.
    let mut normal = linearize(&est, &problem.free, run, w, opts);
    let sensitivity: Vec<f64> = problem
        .free
        .iter()
        .enumerate()
        .map(|(p, key)| {
            let v = est.params.get(key).unwrap();
            normal.d[(p, p)].sqrt() * v.abs().max(opts.fd_abs_step)
        })
        .collect();
    let active: Vec<usize> = (0..problem.free.len())
        .filter(|&p| sensitivity[p] >= opts.identifiability_threshold)
        .collect();
    let non_identifiable: Vec<String> = (0..problem.free.len())
        .filter(|p| !active.contains(p))
        .map(|p| problem.free[p].clone())
        .collect();
    let keys: Vec<String> = active.iter().map(|&p| problem.free[p].clone()).collect();
    if keys.len() != problem.free.len() {
        normal = linearize(&est, &keys, run, w, opts);
    }

    let mut cost_trace = vec![normal.cost];
    let mut damping = opts.initial_damping;
    let mut iterations = 0;
    let termination = loop {
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let cost = normal.cost;
        let accepted = loop {
            let Some((dq, dp)) = damped_step(&normal, damping) else {
                damping *= 10.0;
                if damping > opts.max_damping {
                    return Err(SysIdError::JacobianSingular { damping });
                }
                continue;
            };
            let trial = apply(&est, &keys, &dq, &dp);
            let blocks = residual_blocks(&trial.params, &trial.states, run, w);
            let trial_cost = half_sq_norm(&blocks);
            if trial_cost.is_finite() && trial_cost < cost {
                damping = (damping / 3.0).max(1e-15);
                let step = (dq.iter().map(|v| v * v).sum::<f64>() + dp.norm_squared()).sqrt();
                break Some((trial, trial_cost, step));
            }
            damping *= 10.0;
            if damping > opts.max_damping {
                break None;
            }
        };
        let Some((trial, trial_cost, step)) = accepted else {
            break Termination::DampingLimit;
        };
        est = trial;
        cost_trace.push(trial_cost);
        if step < opts.step_tol {
            break Termination::StepConverged;
        }
        if (cost - trial_cost) < opts.rel_cost_tol * cost {
            break Termination::CostConverged;
        }
        normal = linearize(&est, &keys, run, w, opts);
    };

    // Confidence proxies at the final estimate.
    let final_normal = linearize(&est, &keys, run, w, opts);
    let residual_dim = (run.len() - 2) * R;
    let unknowns = (run.len() - 2) * S + keys.len();
    let dof_cost = 2.0 * final_normal.cost / (residual_dim.saturating_sub(unknowns).max(1)) as f64;
    let (diag, marginal) = confidence(&final_normal, dof_cost);
    let mut std_diag = vec![f64::NAN; problem.free.len()];
    let mut std_marginal = vec![f64::NAN; problem.free.len()];
    for (slot, &p) in active.iter().enumerate() {
        std_diag[p] = diag[slot];
        std_marginal[p] = marginal[slot];
    }
    let values = problem.free.iter().map(|k| est.params.get(k).unwrap()).collect();
    Ok(FitResult {
        states: est.states.iter().map(|s| Configuration::from_slice(s)).collect(),
        params: est.params,
        free: problem.free.clone(),
        initial_values,
        values,
        sensitivity,
        non_identifiable,
        std_diag,
        std_marginal,
        cost_trace,
        iterations,
        termination,
        residual_dim,
        sample_count: run.len(),
    })
}
