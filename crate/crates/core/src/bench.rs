//! Training time, per-image inference latency and model size.
//!
//! Timed regions run on the calling thread, one image per call.

use std::fmt::Write as _;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{extract_file, FeatureSet, IngestOptions};
use crate::error::{Error, Result};
use crate::learners::{Model, ModelKind, ModelSpec};
use crate::matrix::Matrix;

pub const WARMUP_CALLS: usize = 100;
pub const MIN_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub cpu_model: String,
    pub cores: usize,
}

impl Host {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| std::env::consts::ARCH.to_string());
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self { cpu_model, cores }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ModelOnly,
    EndToEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model_kind: ModelKind,
    pub training_seconds: Option<f64>,
    pub model_only: Latency,
    pub end_to_end: Option<Latency>,
    pub model_bytes: u64,
    pub host: Host,
}

/// Inputs for inference timing.
pub enum Samples<'a> {
    Features(&'a Matrix),
    Files {
        paths: &'a [PathBuf],
        options: IngestOptions,
        features: FeatureSet,
    },
}

impl Samples<'_> {
    fn mode(&self) -> Mode {
        match self {
            Samples::Features(_) => Mode::ModelOnly,
            Samples::Files { .. } => Mode::EndToEnd,
        }
    }

    fn len(&self) -> usize {
        match self {
            Samples::Features(m) => m.rows(),
            Samples::Files { paths, .. } => paths.len(),
        }
    }

    fn run(&self, model: &Model, i: usize) -> Result<u8> {
        match self {
            Samples::Features(m) => Ok(model.predict_row(m.row(i))),
            Samples::Files {
                paths,
                options,
                features,
            } => {
                let fv = extract_file(&paths[i], options)?;
                Ok(model.predict_row(&features.project(&fv)))
            }
        }
    }
}

/// Nearest-rank percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median wall time in seconds of `repeats` fits.
pub fn bench_training(spec: &ModelSpec, x: &Matrix, y: &[u8], seed: u64, repeats: usize) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        black_box(spec.fit(x, y, seed)?);
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(median(&times))
}

/// Time single-sample predictions, cycling through `samples`.
pub fn bench_inference(model: &Model, samples: &Samples<'_>, n_iterations: usize) -> Result<(Mode, Latency)> {
    if samples.len() == 0 {
        return Err(Error::EmptyInput);
    }
    if n_iterations < MIN_ITERATIONS {
        return Err(Error::InvalidArgument(format!(
            "n_iterations must be at least {MIN_ITERATIONS}"
        )));
    }
    let n = samples.len();
    for i in 0..WARMUP_CALLS {
        black_box(samples.run(model, i % n)?);
    }
    let mut times = Vec::with_capacity(n_iterations);
    for i in 0..n_iterations {
        let start = Instant::now();
        black_box(samples.run(model, black_box(i % n))?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok((
        samples.mode(),
        Latency {
            median_ms: median(&times),
            p95_ms: percentile(&times, 0.95),
            iterations: n_iterations,
        },
    ))
}

pub fn bench_size(path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    std::fs::metadata(path)
        .map(|m| m.len())
        .map_err(|e| Error::io(path, e))
}

fn human_size(bytes: u64) -> String {
    if bytes < 1024 * 1024 {
        format!("{:.1} kB", bytes as f64 / 1000.0)
    } else {
        format!("{:.1} MB", bytes as f64 / 1e6)
    }
}

pub fn bench_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22}{:>14}{:>20}{:>20}{:>14}",
        "Model", "Training Time", "Inference (model)", "Inference (e2e)", "Model Size"
    );
    out.push_str(&"-".repeat(90));
    out.push('\n');
    for r in reports {
        let train = r.training_seconds.map_or("-".to_string(), |s| format!("{s:.2} s"));
        let e2e = r.end_to_end.map_or("-".to_string(), |l| format!("{:.4} ms/img", l.median_ms));
        let _ = writeln!(
            out,
            "{:<22}{:>14}{:>20}{:>20}{:>14}",
            r.model_kind.display_name(),
            train,
            format!("{:.4} ms/img", r.model_only.median_ms),
            e2e,
            human_size(r.model_bytes)
        );
    }
    let _ = writeln!(
        out,
        "host: {} ({} cores)",
        reports.first().map_or("", |r| r.host.cpu_model.as_str()),
        reports.first().map_or(0, |r| r.host.cores)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(median(&v[..3]), 2.0);
        assert_eq!(percentile(&v, 0.95), 4.0);
        assert_eq!(percentile(&[7.0], 0.95), 7.0);
        let many: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&many, 0.95), 95.0);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert_eq!(bench_size("").unwrap_err().kind(), "IoError");
        assert_eq!(bench_size("/nonexistent/model.emfe").unwrap_err().kind(), "IoError");
    }

    #[test]
    fn host_is_described() {
        let h = Host::detect();
        assert!(h.cores >= 1);
        assert!(!h.cpu_model.is_empty());
    }
}
