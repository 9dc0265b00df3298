use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ProjectionError, Projector};
use crate::math::{quantile_sorted, squared_distance};
use crate::rng::{stream_rng, streams};

/// Point sets up to this size are audited over every unordered pair.
pub const EXACT_PAIR_LIMIT: usize = 2_000;
/// Pairs drawn (with replacement) when the point set is larger.
pub const DEFAULT_SAMPLED_PAIRS: usize = 500_000;
/// Thresholds at which violations are counted.
pub const AUDIT_EPSILONS: [f64; 3] = [0.1, 0.25, 0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationCount {
    pub epsilon: f64,
    pub count: usize,
    /// `count` over usable (non-degenerate) pairs.
    pub fraction: f64,
}

/// `n` points with i.i.d. standard-normal coordinates, reproducible from `seed`.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, streams::POINT_CLOUD);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Pairwise squared-distance distortion of a projector over a point set.
///
/// Distortion of a pair is `|‖y_j−y_i‖² / ‖x_j−x_i‖² − 1|`. Pairs with
/// `x_i = x_j` are degenerate: they are counted in `n_pairs` and
/// `n_degenerate` but contribute no ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub n_points: usize,
    pub n_pairs: usize,
    pub n_degenerate: usize,
    /// Present when pairs were sampled rather than enumerated.
    pub sampled_pairs: Option<usize>,
    pub eps_max: f64,
    pub eps_p50: f64,
    pub eps_p99: f64,
    pub violations_at: Vec<ViolationCount>,
}

impl DistortionReport {
    pub fn usable_pairs(&self) -> usize {
        self.n_pairs - self.n_degenerate
    }

    /// Fraction of usable pairs whose distortion exceeds `epsilon`, when
    /// `epsilon` is one of [`AUDIT_EPSILONS`].
    pub fn fraction_above(&self, epsilon: f64) -> Option<f64> {
        self.violations_at
            .iter()
            .find(|v| v.epsilon == epsilon)
            .map(|v| v.fraction)
    }
}

pub fn audit_distortion(p: &Projector, points: &[Vec<f64>]) -> Result<DistortionReport, ProjectionError> {
    audit_distortion_with_budget(p, points, DEFAULT_SAMPLED_PAIRS)
}

pub fn audit_distortion_with_budget(
    p: &Projector,
    points: &[Vec<f64>],
    sample_pairs: usize,
) -> Result<DistortionReport, ProjectionError> {
    let n = points.len();
    if n < 2 {
        return Err(ProjectionError::TooFewPoints(n));
    }
    let projected = points.iter().map(|x| p.project(x)).collect::<Result<Vec<_>, _>>()?;

    let mut eps = Vec::new();
    let mut n_degenerate = 0;
    let mut visit = |i: usize, j: usize| {
        let dx = squared_distance(&points[i], &points[j]);
        if dx == 0.0 {
            n_degenerate += 1;
            return;
        }
        let dy = squared_distance(&projected[i], &projected[j]);
        eps.push((dy / dx - 1.0).abs());
    };

    let (n_pairs, sampled_pairs) = if n <= EXACT_PAIR_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                visit(i, j);
            }
        }
        (n * (n - 1) / 2, None)
    } else {
        let mut rng = stream_rng(p.spec().seed, streams::AUDIT_PAIRS);
        for _ in 0..sample_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            visit(i.min(j), i.max(j));
        }
        (sample_pairs, Some(sample_pairs))
    };

    eps.sort_by(f64::total_cmp);
    let usable = eps.len();
    let violations_at = AUDIT_EPSILONS
        .iter()
        .map(|&e| {
            // eps is sorted, so everything after the partition point exceeds e
            let count = usable - eps.partition_point(|&v| v <= e);
            ViolationCount {
                epsilon: e,
                count,
                fraction: if usable == 0 { 0.0 } else { count as f64 / usable as f64 },
            }
        })
        .collect();

    Ok(DistortionReport {
        n_points: n,
        n_pairs,
        n_degenerate,
        sampled_pairs,
        eps_max: eps.last().copied().unwrap_or(0.0),
        eps_p50: quantile_sorted(&eps, 0.5),
        eps_p99: quantile_sorted(&eps, 0.99),
        violations_at,
    })
}
