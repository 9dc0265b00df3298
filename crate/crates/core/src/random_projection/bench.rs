use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_projector, ProjectionError, ProjectorSpec};
use crate::rng::{stream_rng, streams};

pub const BENCH_COLUMNS: [&str; 6] = ["method", "d", "k", "n", "construct_ns", "project_ns"];

/// One row of the timing table. Times are wall-clock nanoseconds; `project_ns`
/// covers the whole batch of `n` dense inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub construct_ns: u64,
    pub project_ns: u64,
}

/// Times construction and batch projection for every (spec, batch size)
/// combination, one method at a time.
pub fn bench_projection(specs: &[ProjectorSpec], batch_sizes: &[usize]) -> Result<Vec<BenchRow>, ProjectionError> {
    let mut rows = Vec::new();
    for spec in specs {
        spec.validate()?;
        let started = Instant::now();
        let projector = build_projector(*spec)?;
        let construct_ns = (started.elapsed().as_nanos() as u64).max(1);

        let mut rng = stream_rng(spec.seed, streams::BENCH_INPUT);
        for &n in batch_sizes {
            let batch: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mut out = vec![0.0; spec.output_dim];
            let mut sink = 0.0;
            let started = Instant::now();
            for x in &batch {
                projector.project_into(x, &mut out)?;
                sink += out[0];
            }
            let project_ns = (started.elapsed().as_nanos() as u64).max(1);
            std::hint::black_box(sink);
            rows.push(BenchRow {
                method: spec.method.name().to_string(),
                d: spec.input_dim,
                k: spec.output_dim,
                n,
                construct_ns,
                project_ns,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_projection::Method;

    #[test]
    fn schema_and_positive_times() {
        let specs = [
            ProjectorSpec::new(Method::Gaussian, 64, 8, 0),
            ProjectorSpec::new(Method::CountSketch, 64, 8, 0),
        ];
        let rows = bench_projection(&specs, &[10, 20]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.construct_ns > 0 && r.project_ns > 0));
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), BENCH_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 5);
    }
}
