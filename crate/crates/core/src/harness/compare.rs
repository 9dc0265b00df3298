use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{read_metrics, train, RunStatus, RunSummary, METRICS_FILE, SUMMARY_FILE};
use super::{read_json, HarnessError, RunConfig};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CURVES_FILE: &str = "curves.csv";

/// Final-score table row. Per-seed rows carry the seed number; each run
/// also gets a `mean` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub variant: String,
    pub seed: String,
    pub final_eval_return: Option<f64>,
    pub eval_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub name: String,
    pub variant: String,
    pub seed: u64,
    pub episode: u64,
    pub steps: u64,
    pub eval_return: f64,
    pub eval_discounted: f64,
}

/// Runs (or reuses) each config under `out_dir/<name>` and writes the
/// final-score table and the evaluation curves.
///
/// A run directory is reused when its summary is complete and was produced
/// by an identical config.
pub fn compare(configs: &[RunConfig], out_dir: &Path) -> Result<Vec<ComparisonRow>, HarnessError> {
    if configs.len() < 2 {
        return Err(HarnessError::Mismatch("need at least two configs".into()));
    }
    let first = &configs[0];
    let mut names = BTreeSet::new();
    for c in configs {
        if c.env != first.env {
            return Err(HarnessError::Mismatch(format!(
                "`{}` uses a different environment than `{}`",
                c.run.name, first.run.name
            )));
        }
        if !names.insert(c.run.name.as_str()) {
            return Err(HarnessError::Mismatch(format!(
                "run name `{}` appears twice",
                c.run.name
            )));
        }
        c.validate()?;
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for cfg in configs {
        let run_dir = out_dir.join(&cfg.run.name);
        let summary = match reusable(cfg, &run_dir) {
            Some(s) => s,
            None => train(cfg, &run_dir)?,
        };
        for s in &summary.seeds {
            rows.push(ComparisonRow {
                name: cfg.run.name.clone(),
                variant: summary.variant.clone(),
                seed: s.seed.to_string(),
                final_eval_return: s.final_eval_return,
                eval_auc: s.eval_auc,
            });
            let metrics = read_metrics(&run_dir.join(format!("seed-{}", s.seed)).join(METRICS_FILE))?;
            for m in metrics {
                if let (Some(eval_return), Some(eval_discounted)) = (m.eval_return, m.eval_discounted) {
                    curves.push(CurvePoint {
                        name: cfg.run.name.clone(),
                        variant: summary.variant.clone(),
                        seed: s.seed,
                        episode: m.episode,
                        steps: m.steps,
                        eval_return,
                        eval_discounted,
                    });
                }
            }
        }
        let mean = |f: fn(&super::SeedSummary) -> Option<f64>| {
            let v: Vec<f64> = summary.seeds.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        rows.push(ComparisonRow {
            name: cfg.run.name.clone(),
            variant: summary.variant.clone(),
            seed: "mean".into(),
            final_eval_return: mean(|s| s.final_eval_return),
            eval_auc: mean(|s| s.eval_auc),
        });
    }
    write_csv(&out_dir.join(COMPARISON_FILE), &rows)?;
    write_csv(&out_dir.join(CURVES_FILE), &curves)?;
    Ok(rows)
}

fn reusable(cfg: &RunConfig, run_dir: &Path) -> Option<RunSummary> {
    let summary: RunSummary = read_json(&run_dir.join(SUMMARY_FILE)).ok()?;
    (summary.status == RunStatus::Completed && summary.config_hash == cfg.hash()).then_some(summary)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::format(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
