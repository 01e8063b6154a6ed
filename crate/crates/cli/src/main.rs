use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pushnpg_cli::{self as cmd, SysIdData, Workers};
use pushnpg_core::sim::ModelParams;

/// Distributed natural policy gradient for planar three-finger pushing.
#[derive(Debug, Parser)]
#[command(name = "pushnpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file (`[section]` / `key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `distributed.base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `distributed.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<pushnpg_core::config::RunConfig> {
        cmd::load_config(self.config.as_deref(), self.seed, self.workers)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy; rollouts run on in-process workers unless --remote is given.
    Train {
        #[command(flatten)]
        common: Common,
        /// Listen here for TCP workers instead of spawning threads.
        #[arg(long, value_name = "HOST:PORT")]
        remote: Option<String>,
    },
    /// Train as a TCP coordinator (listens on --remote or `distributed.listen`).
    Coordinator {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "HOST:PORT")]
        remote: Option<String>,
    },
    /// Serve rollouts to a coordinator.
    Worker {
        #[command(flatten)]
        common: Common,
        /// Coordinator address (defaults to `distributed.listen`).
        #[arg(long, value_name = "HOST:PORT")]
        remote: Option<String>,
        /// This worker's id in `0..workers`.
        #[arg(long, default_value_t = 0)]
        id: u32,
    },
    /// Spiral-tracking evaluation of a saved policy on the configured model.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint (`policy_<iter>.json`).
        #[arg(long)]
        policy: PathBuf,
        /// Suffix of the output file `eval_<name>.csv` (defaults to the run name).
        #[arg(long)]
        name: Option<String>,
    },
    /// Identify model parameters from a recorded run (or a synthetic push).
    Sysid {
        #[command(flatten)]
        common: Common,
        /// Recorded run CSV; without it a scripted push is simulated.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Parameters to fit.
        #[arg(long, value_delimiter = ',', default_value = "object_mass,contact_friction_mu")]
        free: Vec<String>,
        /// Hidden parameter values of the synthetic run, e.g. `object_mass=0.4`.
        #[arg(long, value_delimiter = ',', default_value = "object_mass=0.4")]
        hidden: Vec<String>,
        /// Length of the synthetic run in seconds.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        /// Sensor noise standard deviation of the synthetic run.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Dump policy weights, print the resolved config, or run the simulator property suites.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Write `weights.csv` for this checkpoint.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Run the simulator property suites on this many random seeds.
        #[arg(long, value_name = "N")]
        properties: Option<u64>,
    },
}

fn parse_assignment(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').with_context(|| format!("expected key=value, got `{s}`"))?;
    let v = v.trim().parse().with_context(|| format!("bad number in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

fn report_training(outcome: &cmd::TrainOutcome) {
    let last = outcome.history.last();
    println!(
        "trained {} iterations; final mean return {}; spiral error {:.4} m ({} failed rollouts); checkpoint {}",
        outcome.history.len(),
        last.map_or("n/a".into(), |r| format!("{:.2}", r.mean_return)),
        outcome.eval.mean_distance,
        outcome.eval.failed_rollouts,
        outcome.checkpoint.display()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, remote } => {
            let cfg = common.config()?;
            let workers = remote.map_or(Workers::InProcess, Workers::Listen);
            report_training(&cmd::train(&cfg, &common.out, workers)?);
        }
        Command::Coordinator { common, remote } => {
            let cfg = common.config()?;
            let addr = remote.unwrap_or_else(|| cfg.distributed.listen.clone());
            report_training(&cmd::train(&cfg, &common.out, Workers::Listen(addr))?);
        }
        Command::Worker { common, remote, id } => {
            let cfg = common.config()?;
            let addr = remote.unwrap_or_else(|| cfg.distributed.listen.clone());
            let rounds = cmd::worker(&cfg, id, &addr)?;
            println!("worker {id} served {rounds} rounds");
        }
        Command::Eval { common, policy, name } => {
            let cfg = common.config()?;
            let name = name.unwrap_or_else(|| cfg.name.clone());
            let result = cmd::eval(&cfg, &policy, &common.out, &name)?;
            println!(
                "mean distance {:.5} m over {} rollouts ({} failed); wrote {}",
                result.mean_distance,
                result.rollouts.len(),
                result.failed_rollouts,
                common.out.join(cmd::eval_file(&name)).display()
            );
        }
        Command::Sysid {
            common,
            run,
            free,
            hidden,
            duration,
            noise,
        } => {
            let initial = match &common.config {
                Some(_) => common.config()?.model,
                None => ModelParams::default(),
            };
            let data = match run {
                Some(path) => SysIdData::Recorded(path),
                None => SysIdData::Synthetic {
                    hidden: hidden.iter().map(|s| parse_assignment(s)).collect::<Result<_>>()?,
                    duration,
                    noise,
                    seed: common.seed.unwrap_or(0),
                },
            };
            let fit = cmd::sysid(&initial, &free, &data, &common.out)?;
            print!("{}", fit.report());
        }
        Command::Inspect {
            common,
            policy,
            properties,
        } => {
            let mut did = false;
            if let Some(path) = policy {
                println!("wrote {}", cmd::dump_weights(&path, &common.out)?.display());
                did = true;
            }
            if let Some(n) = properties {
                let report = cmd::check_properties(common.seed.unwrap_or(0), n);
                println!(
                    "{} randomized rollouts, worst penetration {:.2} mm, {} failures",
                    report.rollouts,
                    report.worst_penetration * 1e3,
                    report.failures.len()
                );
                for (seed, suite, msg) in &report.failures {
                    println!("  seed {seed}: {suite}: {msg}");
                }
                if !report.failures.is_empty() {
                    bail!("simulator property suites failed");
                }
                did = true;
            }
            if common.config.is_some() || !did {
                let cfg = common.config()?;
                print!("{}", cfg.to_canonical_string());
                println!("\n# training hash {}", cfg.training_hash_hex());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
