use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_toml, write_file, write_json, HarnessError};
use crate::random_projection::{
    audit_distortion_with_budget, bench_projection, build_projector, gaussian_cloud, write_bench_csv, BenchRow,
    DistortionReport, Method, ProjectorSpec, DEFAULT_SAMPLED_PAIRS,
};

/// Distortion sweep over output dimensions on a standard-normal cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JlCheckConfig {
    pub method: Method,
    pub input_dim: usize,
    pub n_points: usize,
    pub output_dims: Vec<usize>,
    /// Projection seed.
    pub seed: u64,
    pub cloud_seed: u64,
    /// Pairs sampled when the cloud is too large for exhaustive pairs.
    pub sample_pairs: usize,
}

impl Default for JlCheckConfig {
    fn default() -> Self {
        Self {
            method: Method::Gaussian,
            input_dim: 256,
            n_points: 500,
            output_dims: vec![8, 16, 32, 64],
            seed: 240,
            cloud_seed: 0,
            sample_pairs: DEFAULT_SAMPLED_PAIRS,
        }
    }
}

impl JlCheckConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        parse_toml(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JlSweepEntry {
    pub k: usize,
    pub report: DistortionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JlCheckReport {
    pub config: JlCheckConfig,
    pub sweep: Vec<JlSweepEntry>,
}

/// Audits one projector per output dimension on a shared cloud and writes
/// the JSON report to `out`.
pub fn jl_check(cfg: &JlCheckConfig, out: &Path) -> Result<JlCheckReport, HarnessError> {
    let cloud = gaussian_cloud(cfg.n_points, cfg.input_dim, cfg.cloud_seed);
    let mut sweep = Vec::new();
    for &k in &cfg.output_dims {
        let projector = build_projector(ProjectorSpec::new(cfg.method, cfg.input_dim, k, cfg.seed))?;
        let report = audit_distortion_with_budget(&projector, &cloud, cfg.sample_pairs)?;
        sweep.push(JlSweepEntry { k, report });
    }
    let report = JlCheckReport {
        config: cfg.clone(),
        sweep,
    };
    write_json(out, &report)?;
    Ok(report)
}

/// Timing grid: every method × input dim × output dim × batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            input_dims: vec![256, 1024],
            output_dims: vec![16, 32],
            batch_sizes: vec![1, 100],
            seed: 240,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        parse_toml(text)
    }
}

/// Runs the timing grid and writes the CSV to `out`.
pub fn bench(cfg: &BenchConfig, out: &Path) -> Result<Vec<BenchRow>, HarnessError> {
    let mut specs = Vec::new();
    for &method in &cfg.methods {
        for &d in &cfg.input_dims {
            for &k in &cfg.output_dims {
                specs.push(ProjectorSpec::new(method, d, k, cfg.seed));
            }
        }
    }
    let rows = bench_projection(&specs, &cfg.batch_sizes)?;
    let mut buf = Vec::new();
    write_bench_csv(&rows, &mut buf).map_err(|e| HarnessError::format(out, e))?;
    write_file(out, &buf)?;
    Ok(rows)
}
