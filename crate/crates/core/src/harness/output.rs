//! CSV traces, the JSON summary and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::Algorithm;
use super::simulate::RunTrace;
use super::HarnessError;
use crate::analysis::{BoundReport, ConstantSource};

pub const CSV_HEADER: &str =
    "iter,algorithm,seed,sbe,sbe_window,agreement_error,centroid_norm,mean_kl_to_central,baseline_gap";

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.metrics.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, (m, w)) in trace.metrics.iter().zip(&trace.sbe_window).enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            trace.algorithm,
            trace.seed,
            fmt_f64(m.sbe),
            fmt_f64(*w),
            opt(m.agreement_error),
            fmt_f64(m.centroid_norm),
            opt(m.mean_kl()),
            opt(m.baseline_gap),
        );
    }
    out
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0usize;
    let mut total = 0.0;
    for v in values {
        let v = v?;
        total += v;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Seed-averaged curves with the same columns; `seed` is left empty.
pub fn mean_csv(algorithm: Algorithm, traces: &[&RunTrace]) -> String {
    let iters = traces.iter().map(|t| t.metrics.len()).min().unwrap_or(0);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for i in 0..iters {
        let col = |f: &dyn Fn(&RunTrace) -> Option<f64>| mean_of(traces.iter().map(|t| f(t)));
        let _ = writeln!(
            out,
            "{i},{algorithm},,{},{},{},{},{},{}",
            opt(col(&|t| Some(t.metrics[i].sbe))),
            opt(col(&|t| Some(t.sbe_window[i]))),
            opt(col(&|t| t.metrics[i].agreement_error)),
            opt(col(&|t| Some(t.metrics[i].centroid_norm))),
            opt(col(&|t| t.metrics[i].mean_kl())),
            opt(col(&|t| t.metrics[i].baseline_gap)),
        );
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_sbe_window: f64,
    pub final_agreement_error: Option<f64>,
    pub final_centroid_norm: f64,
    /// Mean KL to the centralized belief over the last half of the run.
    pub mean_kl_last_half: Option<f64>,
    /// Iterations skipped in that mean because some KL was infinite.
    pub kl_skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub final_sbe_window_mean: f64,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedBounds {
    pub seed: u64,
    pub lambda2: f64,
    pub d_min: usize,
    pub threshold: Option<f64>,
    pub b_source: Option<ConstantSource>,
    pub tau_source: Option<ConstantSource>,
    pub report: Option<BoundReport>,
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub quantity: &'static str,
    pub bound: f64,
    pub empirical: f64,
    pub holds: bool,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub code_version: &'static str,
    pub num_iterations: u64,
    pub seeds: Vec<u64>,
    pub sbe_window: usize,
    /// How time expectations are estimated in the comparisons.
    pub averaging: &'static str,
    pub algorithms: Vec<AlgorithmSummary>,
    pub bounds: Vec<SeedBounds>,
    pub theory_vs_empirical: Vec<Comparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub code_version: &'static str,
    pub files: Vec<ManifestEntry>,
}

/// Mean of `values[start..]`, skipping `None`s; returns (mean, skipped).
pub fn tail_mean(values: &[Option<f64>], start: usize) -> (Option<f64>, usize) {
    let tail = &values[start.min(values.len())..];
    let finite: Vec<f64> = tail.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let skipped = tail.len() - finite.len();
    let mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    (mean, skipped)
}
