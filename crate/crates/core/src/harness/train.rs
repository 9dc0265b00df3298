use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_json, write_file, write_json, HarnessError, RunConfig};
use crate::agent::{Agent, AgentCheckpoint, EpisodeRecord, EvalResult};
use crate::envs::value_iteration_oracle;
use crate::rng::{stream_rng, streams};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVALUATION_FILE: &str = "evaluation.json";

/// Column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 10] = [
    "episode",
    "steps",
    "train_return",
    "eval_return",
    "eval_discounted",
    "loss",
    "epsilon",
    "dnd_sizes",
    "reduction_mode",
    "switched_at",
];

/// One line of `metrics.csv`. Evaluation columns are empty on episodes
/// without an evaluation; `loss` is empty when no training happened.
/// `dnd_sizes` lists per-action store sizes separated by `;`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    pub steps: u64,
    pub train_return: f64,
    pub eval_return: Option<f64>,
    pub eval_discounted: Option<f64>,
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub dnd_sizes: String,
    pub reduction_mode: String,
    pub switched_at: Option<u64>,
}

impl MetricsRow {
    fn new(rec: &EpisodeRecord, eval: Option<&EvalResult>) -> Self {
        Self {
            episode: rec.episode,
            steps: rec.total_steps,
            train_return: rec.raw_return,
            eval_return: eval.map(EvalResult::mean_return),
            eval_discounted: eval.map(EvalResult::mean_discounted),
            loss: rec.loss,
            epsilon: rec.epsilon,
            dnd_sizes: rec
                .dnd_sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            reduction_mode: rec.reduction_mode.name().to_string(),
            switched_at: rec.switched_at,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub episodes: u64,
    pub steps: u64,
    /// Mean raw evaluation return at the last evaluation.
    pub final_eval_return: Option<f64>,
    /// Mean discounted evaluation return at the last evaluation.
    pub final_eval_discounted: Option<f64>,
    /// Best mean discounted evaluation return over the run.
    pub best_eval_discounted: Option<f64>,
    /// Mean of the evaluation-return curve (area under it per episode).
    pub eval_auc: Option<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub variant: String,
    pub env: String,
    pub config_hash: String,
    pub status: RunStatus,
    /// Discounted optimal return from the start state.
    pub oracle_optimal_return: Option<f64>,
    pub seeds: Vec<SeedSummary>,
    /// Mean and sample standard deviation of `final_eval_return` over the
    /// seeds that have one.
    pub mean_final_return: Option<f64>,
    pub std_final_return: Option<f64>,
    pub wall_clock_secs: f64,
}

fn mean_and_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

/// Trains every seed (in parallel) and writes the run directory:
///
/// ```text
/// <run_dir>/config.toml
/// <run_dir>/summary.json
/// <run_dir>/seed-<s>/metrics.csv
/// <run_dir>/seed-<s>/checkpoint.json
/// ```
///
/// A seed that fails keeps the metrics written so far and a checkpoint of
/// its state at the failure; the summary is then marked failed.
pub fn train(cfg: &RunConfig, run_dir: &Path) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    write_file(&run_dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    let seeds: Vec<SeedSummary> = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| train_seed(cfg, seed, &seed_dir(run_dir, seed)))
        .collect::<Result<_, _>>()?;

    let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_eval_return).collect();
    let (mean_final_return, std_final_return) = mean_and_std(&finals);
    let env = cfg.env.build()?;
    let summary = RunSummary {
        name: cfg.run.name.clone(),
        variant: cfg.run.variant.name().to_string(),
        env: cfg.env.name().to_string(),
        config_hash: cfg.hash(),
        status: if seeds.iter().all(|s| s.status == RunStatus::Completed) {
            RunStatus::Completed
        } else {
            RunStatus::Failed
        },
        oracle_optimal_return: value_iteration_oracle(&env.tabular(), cfg.agent.gamma)
            .ok()
            .map(|s| s.optimal_return),
        seeds,
        mean_final_return,
        std_final_return,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    write_json(&run_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Trains one seed into `dir`. Agent and environment failures are reported
/// in the returned summary; only I/O problems are errors.
pub fn train_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<SeedSummary, HarnessError> {
    let started = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| HarnessError::io(&metrics_path, e))?;
    let mut metrics = csv::Writer::from_writer(file);

    let mut env = cfg.env.build()?;
    let mut eval_env = cfg.env.build()?;
    let learner = cfg.learner();
    let mut agent = Agent::new(&learner, &env.observation_shape(), env.action_count(), seed)?;
    let mut eval_rng = stream_rng(seed, streams::EVALUATION);
    let a = &learner.agent;

    let mut evals: Vec<EvalResult> = Vec::new();
    let mut failure = None;
    for episode in 1..=cfg.run.episodes {
        let rec = match agent.run_episode(env.as_mut()) {
            Ok(rec) => rec,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let out_of_steps = cfg.run.max_steps.is_some_and(|m| agent.steps() >= m);
        let last = episode == cfg.run.episodes || out_of_steps;
        let eval = if episode % a.eval_interval == 0 || last {
            match agent.evaluate(eval_env.as_mut(), a.eval_episodes, a.eval_epsilon, &mut eval_rng) {
                Ok(r) => Some(r),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        } else {
            None
        };
        metrics
            .serialize(MetricsRow::new(&rec, eval.as_ref()))
            .and_then(|_| metrics.flush().map_err(csv::Error::from))
            .map_err(|e| HarnessError::format(&metrics_path, e))?;
        evals.extend(eval);
        if out_of_steps {
            break;
        }
    }
    metrics.flush().map_err(|e| HarnessError::io(&metrics_path, e))?;
    write_json(&dir.join(CHECKPOINT_FILE), &agent.checkpoint())?;

    let returns: Vec<f64> = evals.iter().map(EvalResult::mean_return).collect();
    let best = evals
        .iter()
        .map(EvalResult::mean_discounted)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(SeedSummary {
        seed,
        status: if failure.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Completed
        },
        error: failure,
        episodes: agent.episodes(),
        steps: agent.steps(),
        final_eval_return: evals.last().map(EvalResult::mean_return),
        final_eval_discounted: evals.last().map(EvalResult::mean_discounted),
        best_eval_discounted: best,
        eval_auc: mean_and_std(&returns).0,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::format(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| HarnessError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != METRICS_COLUMNS {
        return Err(HarnessError::format(path, format!("unexpected columns {header:?}")));
    }
    reader
        .deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| HarnessError::format(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub returns: Vec<f64>,
    pub discounted: Vec<f64>,
    pub mean_return: f64,
    pub mean_discounted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub episodes: usize,
    pub epsilon: f64,
    pub seeds: Vec<SeedEvaluation>,
}

/// Evaluates the checkpoint of every seed in a finished run directory and
/// writes `evaluation.json` next to the summary.
pub fn evaluate_run(cfg: &RunConfig, run_dir: &Path, episodes: usize) -> Result<EvaluationReport, HarnessError> {
    let learner = cfg.learner();
    let mut seeds = Vec::new();
    for &seed in &cfg.run.seeds {
        let checkpoint: AgentCheckpoint = read_json(&seed_dir(run_dir, seed).join(CHECKPOINT_FILE))?;
        let agent = Agent::from_checkpoint(&learner, checkpoint, seed)?;
        let mut env = cfg.env.build()?;
        let mut rng = stream_rng(seed, streams::EVALUATION);
        let r = agent.evaluate(env.as_mut(), episodes, learner.agent.eval_epsilon, &mut rng)?;
        seeds.push(SeedEvaluation {
            seed,
            mean_return: r.mean_return(),
            mean_discounted: r.mean_discounted(),
            returns: r.returns,
            discounted: r.discounted,
        });
    }
    let report = EvaluationReport {
        name: cfg.run.name.clone(),
        episodes,
        epsilon: learner.agent.eval_epsilon,
        seeds,
    };
    write_json(&run_dir.join(EVALUATION_FILE), &report)?;
    Ok(report)
}
