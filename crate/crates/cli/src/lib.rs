//! Command implementations behind the `pushnpg` binary.
//!
//! Each command is a plain function over already-parsed arguments so that
//! tests can drive whole runs without spawning processes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pushnpg_core::checkpoint::Checkpoint;
use pushnpg_core::config::RunConfig;
use pushnpg_core::eval::{dump_policy_weights, evaluate, ActionMode, EvalResult};
use pushnpg_core::policy::AffineGaussianPolicy;
use pushnpg_core::sim::properties::check_all;
use pushnpg_core::sim::ModelParams;
use pushnpg_core::sysid::{gauss_newton, pushing_run, FitResult, RecordedRun, SolverOptions, SysIdProblem};
use pushnpg_dist::tcp::{run_worker, RetryPolicy, TcpCoordinator};
use pushnpg_dist::trainer::CSV_HEADER;
use pushnpg_dist::worker::WorkerState;
use pushnpg_dist::{train as train_rounds, InProcess, IterationRecord, RoundTransport, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const WEIGHTS: &str = "weights.csv";
pub const FIT_REPORT: &str = "fit_report.txt";
pub const FITTED_PARAMS: &str = "fitted_params.kv";

pub fn policy_file(iteration: u32) -> String {
    format!("policy_{iteration}.json")
}

pub fn eval_file(name: &str) -> String {
    format!("eval_{name}.csv")
}

/// Loads a run configuration and applies command-line overrides.
pub fn load_config(path: Option<&Path>, seed: Option<u64>, workers: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.distributed.base_seed = s;
    }
    if let Some(w) = workers {
        cfg.distributed.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub policy: AffineGaussianPolicy,
    pub history: Vec<IterationRecord>,
    /// Spiral evaluation of the final policy.
    pub eval: EvalResult,
    pub checkpoint: PathBuf,
}

/// Where the rollouts of a training run happen.
#[derive(Debug, Clone)]
pub enum Workers {
    /// `cfg.distributed.workers` threads in this process.
    InProcess,
    /// Remote workers connecting over TCP to this listen address.
    Listen(String),
}

/// Trains with the configured iteration count and writes the learning curve,
/// checkpoints, final weights and the final spiral evaluation into `out`.
pub fn train(cfg: &RunConfig, out: &Path, workers: Workers) -> Result<TrainOutcome> {
    create_dir(out)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let result = match workers {
        Workers::InProcess => run_training(&mut trainer, &mut InProcess::from_config(cfg), out),
        Workers::Listen(addr) => {
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            eprintln!(
                "waiting for {} workers on {}",
                cfg.distributed.workers,
                listener.local_addr()?
            );
            let mut coord = TcpCoordinator::accept(listener, cfg)?;
            run_training(&mut trainer, &mut coord, out)
        }
    };
    // Keep whatever was learned before a failure.
    let checkpoint = out.join(policy_file(trainer.iteration()));
    trainer.checkpoint().save(&checkpoint)?;
    result?;
    write_file(&out.join(WEIGHTS), &dump_policy_weights(trainer.policy()))?;
    let eval = trainer.evaluate();
    write_file(&out.join(eval_file(&cfg.name)), &eval.to_csv())?;
    Ok(TrainOutcome {
        policy: trainer.policy().clone(),
        history: trainer.history.clone(),
        eval,
        checkpoint,
    })
}

fn run_training<T: RoundTransport>(trainer: &mut Trainer, transport: &mut T, out: &Path) -> Result<()> {
    let path = out.join(LEARNING_CURVE);
    let mut curve = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(curve, "{CSV_HEADER}")?;
    let iterations = trainer.config().npg.iterations;
    let mut io_error = None;
    train_rounds(trainer, transport, iterations, |t, record| {
        let row = writeln!(curve, "{}", record.csv_row()).and_then(|()| curve.flush());
        if let Err(e) = row {
            io_error.get_or_insert(e);
        }
        if let Some(d) = record.eval_distance {
            eprintln!(
                "iteration {:>4}  return {:>9.2}  eval {:.4} m  {:.1} s",
                t.iteration(),
                record.mean_return,
                d,
                record.wall_clock_s
            );
            if let Err(e) = t.checkpoint().save(&out.join(policy_file(t.iteration()))) {
                io_error.get_or_insert(std::io::Error::other(e.to_string()));
            }
        }
        Ok(())
    })?;
    if let Some(e) = io_error {
        return Err(e).context("writing training outputs");
    }
    Ok(())
}

/// Spiral evaluation of a saved policy on the configured nominal model.
pub fn eval(cfg: &RunConfig, policy_path: &Path, out: &Path, name: &str) -> Result<EvalResult> {
    let policy = Checkpoint::load(policy_path)
        .and_then(|c| c.policy())
        .with_context(|| format!("loading policy {}", policy_path.display()))?;
    let mode = if cfg.eval.mean_actions {
        ActionMode::Mean
    } else {
        ActionMode::Stochastic
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
    let result = evaluate(&policy, &cfg.model, cfg.eval.rollouts, mode, &mut rng);
    create_dir(out)?;
    write_file(&out.join(eval_file(name)), &result.to_csv())?;
    Ok(result)
}

/// Runs one TCP worker until the coordinator shuts it down.
pub fn worker(cfg: &RunConfig, id: u32, addr: &str) -> Result<u32> {
    if id as usize >= cfg.distributed.workers {
        bail!("worker id {id} is outside 0..{}", cfg.distributed.workers);
    }
    let mut state = WorkerState::new(id, cfg.clone());
    Ok(run_worker(addr, &mut state, RetryPolicy::from_config(cfg))?)
}

/// Source of the recorded run for identification.
#[derive(Debug, Clone)]
pub enum SysIdData {
    Recorded(PathBuf),
    /// Scripted push on a copy of the model with these overrides hidden.
    Synthetic {
        hidden: Vec<(String, f64)>,
        duration: f64,
        noise: f64,
        seed: u64,
    },
}

/// Fits `free` parameters starting from `initial` and writes the report and
/// the fitted parameter file. Synthetic runs are saved as `run.csv`.
pub fn sysid(initial: &ModelParams, free: &[String], data: &SysIdData, out: &Path) -> Result<FitResult> {
    create_dir(out)?;
    let run = match data {
        SysIdData::Recorded(path) => {
            RecordedRun::load(path).with_context(|| format!("loading recorded run {}", path.display()))?
        }
        SysIdData::Synthetic {
            hidden,
            duration,
            noise,
            seed,
        } => {
            let mut truth = initial.clone();
            for (k, v) in hidden {
                *truth.field_mut(k).with_context(|| format!("unknown model parameter `{k}`"))? = *v;
            }
            truth.validate()?;
            let (run, _) = pushing_run(&truth, *duration, *noise, &mut ChaCha8Rng::seed_from_u64(*seed))?;
            run.save(&out.join("run.csv"))?;
            run
        }
    };
    let free: Vec<&str> = free.iter().map(String::as_str).collect();
    let problem = SysIdProblem::new(&free, initial.clone());
    let fit = gauss_newton(&problem, &run, &SolverOptions::default())?;
    write_file(&out.join(FIT_REPORT), &fit.report())?;
    fit.params.save(&out.join(FITTED_PARAMS))?;
    Ok(fit)
}

/// Writes `weights.csv` for a saved policy.
pub fn dump_weights(policy_path: &Path, out: &Path) -> Result<PathBuf> {
    let policy = Checkpoint::load(policy_path)
        .and_then(|c| c.policy())
        .with_context(|| format!("loading policy {}", policy_path.display()))?;
    create_dir(out)?;
    let path = out.join(WEIGHTS);
    write_file(&path, &dump_policy_weights(&policy))?;
    Ok(path)
}

/// Outcome of the simulator property suites over a range of seeds.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PropertyReport {
    pub rollouts: u64,
    pub worst_penetration: f64,
    /// `(seed, suite, message)` for every failing seed.
    pub failures: Vec<(u64, &'static str, String)>,
}

pub fn check_properties(first_seed: u64, rollouts: u64) -> PropertyReport {
    let mut report = PropertyReport {
        rollouts,
        ..PropertyReport::default()
    };
    for seed in first_seed..first_seed + rollouts {
        match check_all(seed) {
            Ok(stats) => report.worst_penetration = report.worst_penetration.max(stats.max_penetration),
            Err((suite, msg)) => report.failures.push((seed, suite, msg)),
        }
    }
    report
}
