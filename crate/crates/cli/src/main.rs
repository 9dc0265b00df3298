use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nec_rp::harness::{self, BenchConfig, HarnessError, JlCheckConfig, RunConfig, RunStatus};

/// Episodic-control agents with a random-projection reduction layer.
#[derive(Parser)]
#[command(name = "nec-rp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Base output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Per-seed environment-step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate the checkpoints of a finished run.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Train (or reuse) several configs on one environment and tabulate them.
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Distortion audit of random projections over a sweep of output dims.
    JlCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "jl_check.json")]
        out: PathBuf,
    },
    /// Construction and projection timings.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn load_run_config(path: &Path, seeds: Option<Vec<u64>>, steps: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seeds) = seeds {
        cfg.run.seeds = seeds;
    }
    if steps.is_some() {
        cfg.run.max_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_optional(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(String::new()),
    }
}

fn run_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    match out {
        Some(base) => base.join(&cfg.run.name),
        None => cfg.run_dir(),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seeds,
            steps,
        } => {
            let cfg = load_run_config(&config, seeds, steps)?;
            let dir = run_dir(&cfg, out.as_deref());
            let summary = harness::train(&cfg, &dir)?;
            for s in &summary.seeds {
                let score = s.final_eval_return.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "seed {:>4}  episodes {:>5}  steps {:>7}  final eval {score}",
                    s.seed, s.episodes, s.steps
                );
                if let Some(e) = &s.error {
                    eprintln!("seed {} failed: {e}", s.seed);
                }
            }
            println!("run directory: {}", dir.display());
            if summary.status == RunStatus::Failed {
                bail!(HarnessError::Format {
                    path: dir,
                    message: "one or more seeds failed; see summary.json".into(),
                });
            }
        }
        Command::Evaluate {
            config,
            out,
            seeds,
            episodes,
        } => {
            let cfg = load_run_config(&config, seeds, None)?;
            let dir = run_dir(&cfg, out.as_deref());
            let report = harness::evaluate_run(&cfg, &dir, episodes)?;
            for s in &report.seeds {
                println!(
                    "seed {:>4}  mean return {:.4}  mean discounted {:.4}",
                    s.seed, s.mean_return, s.mean_discounted
                );
            }
        }
        Command::Compare {
            config,
            out,
            seeds,
            steps,
        } => {
            let configs = config
                .iter()
                .map(|p| load_run_config(p, seeds.clone(), steps))
                .collect::<Result<Vec<_>>>()?;
            for row in harness::compare(&configs, &out)? {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:<20} {:<14} {:>5}  final {}  auc {}",
                    row.name,
                    row.variant,
                    row.seed,
                    fmt(row.final_eval_return),
                    fmt(row.eval_auc)
                );
            }
        }
        Command::JlCheck { config, out } => {
            let cfg = JlCheckConfig::from_toml(&read_optional(config.as_deref())?)?;
            let report = harness::jl_check(&cfg, &out)?;
            for e in &report.sweep {
                println!(
                    "k {:>4}  eps_p50 {:.4}  eps_p99 {:.4}  eps_max {:.4}",
                    e.k, e.report.eps_p50, e.report.eps_p99, e.report.eps_max
                );
            }
        }
        Command::Bench { config, out } => {
            let cfg = BenchConfig::from_toml(&read_optional(config.as_deref())?)?;
            let rows = harness::bench(&cfg, &out)?;
            println!("{} timing rows written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(2, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
