//! Random-projection sketches.
//!
//! Five constructions are supported, all normalised so that
//! `E[|Rx|^2] = |x|^2`:
//!
//! | method        | storage            | entries                                              |
//! |---------------|--------------------|------------------------------------------------------|
//! | `gaussian`    | dense row-major    | `N(0, 1/k)`                                          |
//! | `achlioptas`  | dense row-major    | `±sqrt(3/k)` w.p. 1/6 each, `0` w.p. 2/3             |
//! | `li-sparse`   | (row, col, value)  | `±sqrt(q/k)` w.p. `1/(2q)` each, `q = sqrt(d)`       |
//! | `srht`        | signs + row sample | `k^{-1/2} · S · H · D` with `H` unnormalised Hadamard |
//! | `count-sketch`| (row, col, value)  | one `±1` per input column                            |
//!
//! A projector is fully determined by its [`ProjectorSpec`]: the matrix is
//! drawn from [`crate::rng::stream_rng`] with the spec seed and a stream
//! reserved for the method.

mod audit;
mod bench;

pub use audit::{
    audit_distortion, audit_distortion_with_budget, gaussian_cloud, DistortionReport, ViolationCount, AUDIT_EPSILONS,
    DEFAULT_SAMPLED_PAIRS, EXACT_PAIR_LIMIT,
};
pub use bench::{bench_projection, write_bench_csv, BenchRow, BENCH_COLUMNS};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Matrix;
use crate::rng::{stream_rng, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("input dimension must be positive")]
    ZeroInputDim,
    #[error("output dimension must be positive")]
    ZeroOutputDim,
    #[error("output dimension {k} exceeds input dimension {d}")]
    OutputExceedsInput { d: usize, k: usize },
    #[error("expected a vector of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("distortion audit needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown projection method `{0}`")]
    UnknownMethod(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gaussian,
    Achlioptas,
    LiSparse,
    Srht,
    CountSketch,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gaussian,
        Method::Achlioptas,
        Method::LiSparse,
        Method::Srht,
        Method::CountSketch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gaussian => "gaussian",
            Method::Achlioptas => "achlioptas",
            Method::LiSparse => "li-sparse",
            Method::Srht => "srht",
            Method::CountSketch => "count-sketch",
        }
    }

    fn stream(self) -> u64 {
        let id = match self {
            Method::Gaussian => 0,
            Method::Achlioptas => 1,
            Method::LiSparse => 2,
            Method::Srht => 3,
            Method::CountSketch => 4,
        };
        streams::PROJECTION_BASE + id
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::LiSparse | Method::CountSketch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ProjectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ProjectionError::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectorSpec {
    pub method: Method,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl ProjectorSpec {
    pub fn new(method: Method, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            method,
            input_dim,
            output_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.input_dim == 0 {
            return Err(ProjectionError::ZeroInputDim);
        }
        if self.output_dim == 0 {
            return Err(ProjectionError::ZeroOutputDim);
        }
        if self.output_dim > self.input_dim {
            return Err(ProjectionError::OutputExceedsInput {
                d: self.input_dim,
                k: self.output_dim,
            });
        }
        Ok(())
    }
}

/// One nonzero of a sparse sketch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Dense(Vec<f64>),
    /// Sorted by column.
    Sparse(Vec<Triplet>),
    Srht {
        padded_dim: usize,
        signs: Vec<f64>,
        rows: Vec<usize>,
        scale: f64,
    },
}

/// An immutable, realised random projection `R: R^d -> R^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    spec: ProjectorSpec,
    repr: Repr,
}

pub fn build_projector(spec: ProjectorSpec) -> Result<Projector, ProjectionError> {
    spec.validate()?;
    let d = spec.input_dim;
    let k = spec.output_dim;
    let mut rng = stream_rng(spec.seed, spec.method.stream());
    let repr = match spec.method {
        Method::Gaussian => {
            let std = (1.0 / k as f64).sqrt();
            let data = (0..k * d)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * std
                })
                .collect();
            Repr::Dense(data)
        }
        Method::Achlioptas => {
            let s = (3.0 / k as f64).sqrt();
            let data = (0..k * d)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < 1.0 / 6.0 {
                        s
                    } else if u < 1.0 / 3.0 {
                        -s
                    } else {
                        0.0
                    }
                })
                .collect();
            Repr::Dense(data)
        }
        Method::LiSparse => {
            let q = (d as f64).sqrt();
            let p_side = 1.0 / (2.0 * q);
            let s = (q / k as f64).sqrt();
            let mut triplets = Vec::new();
            for col in 0..d {
                for row in 0..k {
                    let u: f64 = rng.random();
                    let value = if u < p_side {
                        s
                    } else if u < 2.0 * p_side {
                        -s
                    } else {
                        continue;
                    };
                    triplets.push(Triplet {
                        row: row as u32,
                        col: col as u32,
                        value,
                    });
                }
            }
            Repr::Sparse(triplets)
        }
        Method::CountSketch => {
            let triplets = (0..d)
                .map(|col| {
                    let row = rng.random_range(0..k);
                    let value = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    Triplet {
                        row: row as u32,
                        col: col as u32,
                        value,
                    }
                })
                .collect();
            Repr::Sparse(triplets)
        }
        Method::Srht => {
            // Draws depend only on (padded_dim, k, seed), so any two input
            // dims that pad to the same power of two share the same sketch.
            let padded_dim = d.next_power_of_two();
            let signs = (0..padded_dim)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut rows = rand::seq::index::sample(&mut rng, padded_dim, k).into_vec();
            rows.sort_unstable();
            Repr::Srht {
                padded_dim,
                signs,
                rows,
                scale: 1.0 / (k as f64).sqrt(),
            }
        }
    };
    Ok(Projector { spec, repr })
}

/// In-place unnormalised fast Walsh-Hadamard transform. `buf.len()` must be a
/// power of two.
pub fn fwht(buf: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let a = buf[i];
                let b = buf[i + h];
                buf[i] = a + b;
                buf[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

impl Projector {
    pub fn spec(&self) -> &ProjectorSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Internal working dimension: the power-of-two pad for SRHT, `d` otherwise.
    pub fn padded_dim(&self) -> usize {
        match &self.repr {
            Repr::Srht { padded_dim, .. } => *padded_dim,
            _ => self.spec.input_dim,
        }
    }

    /// Sparse nonzeros, if the projector is stored as triplets.
    pub fn triplets(&self) -> Option<&[Triplet]> {
        match &self.repr {
            Repr::Sparse(t) => Some(t),
            _ => None,
        }
    }

    /// Dense row-major storage, if the projector is stored densely.
    pub fn dense_data(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Dense(d) => Some(d),
            _ => None,
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        let mut out = vec![0.0; self.spec.output_dim];
        self.project_into(x, &mut out)?;
        Ok(out)
    }

    pub fn project_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProjectionError> {
        let d = self.spec.input_dim;
        let k = self.spec.output_dim;
        if x.len() != d {
            return Err(ProjectionError::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        if out.len() != k {
            return Err(ProjectionError::DimensionMismatch {
                expected: k,
                actual: out.len(),
            });
        }
        match &self.repr {
            Repr::Dense(data) => {
                let zeros = vec![0.0; k];
                crate::math::affine_into(data, k, d, x, &zeros, out);
            }
            Repr::Sparse(triplets) => {
                out.fill(0.0);
                for t in triplets {
                    out[t.row as usize] += t.value * x[t.col as usize];
                }
            }
            Repr::Srht {
                padded_dim,
                signs,
                rows,
                scale,
            } => {
                let mut buf = vec![0.0; *padded_dim];
                for ((b, xi), s) in buf.iter_mut().zip(x).zip(signs) {
                    *b = xi * s;
                }
                fwht(&mut buf);
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = buf[r] * scale;
                }
            }
        }
        Ok(())
    }

    /// The k×d Jacobian of [`Projector::project`], which is `R` itself.
    pub fn jacobian(&self) -> Matrix {
        let d = self.spec.input_dim;
        let k = self.spec.output_dim;
        match &self.repr {
            Repr::Dense(data) => Matrix::from_row_major(k, d, data.clone()),
            Repr::Sparse(triplets) => {
                let mut m = Matrix::zeros(k, d);
                for t in triplets {
                    let (r, c) = (t.row as usize, t.col as usize);
                    m.set(r, c, m.get(r, c) + t.value);
                }
                m
            }
            Repr::Srht { .. } => {
                let mut m = Matrix::zeros(k, d);
                let mut e = vec![0.0; d];
                for c in 0..d {
                    e[c] = 1.0;
                    let col = self.project(&e).expect("unit vector has input dim");
                    e[c] = 0.0;
                    for (r, v) in col.into_iter().enumerate() {
                        m.set(r, c, v);
                    }
                }
                m
            }
        }
    }

    /// Stored nonzero count (dense methods count exact zeros out).
    pub fn nnz(&self) -> usize {
        match &self.repr {
            Repr::Dense(d) => d.iter().filter(|v| **v != 0.0).count(),
            Repr::Sparse(t) => t.len(),
            Repr::Srht { .. } => self.jacobian().nonzeros(),
        }
    }
}

/// Free-function form of [`Projector::project`].
pub fn project(p: &Projector, x: &[f64]) -> Result<Vec<f64>, ProjectionError> {
    p.project(x)
}

/// Free-function form of [`Projector::jacobian`].
pub fn projection_jacobian(p: &Projector) -> Matrix {
    p.jacobian()
}
