//! Configuration, orchestration across algorithms and seeds, and the files
//! a run leaves behind.

mod cli;
mod config;
mod output;
mod simulate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use thiserror::Error;

pub use cli::cli_main;
pub use config::{
    build_setup, Algorithm, ExperimentConfig, LearnerSpec, ModelSource, NetworkRecipe,
    ResolvedModel, Setup, SimParams, TheoryOverrides,
};
pub use output::{
    fmt_f64, mean_csv, sha256_hex, trace_csv, AlgorithmSummary, Comparison, Manifest,
    SeedBounds, SeedSummary, Summary, CSV_HEADER,
};
pub use simulate::{
    simulate, simulate_centralized, simulate_diffusion, simulate_pair, IterMetrics, RunTrace,
};

use crate::analysis::{gather_constants, AnalysisError, BoundInputs, BoundReport};
use crate::evaluation::{warn_regime, EvalError};
use crate::model::{validate_model, ModelError, ValidationReport};
use crate::network::{min_degree, mixing_rate, validate_combination, NetworkDiagnostics, NetworkError, NetworkIssue};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("validation failed")]
    Invalid(serde_json::Value),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Config(_) => "config",
            HarnessError::Invalid(_) => "validation",
            HarnessError::Internal(_) => "internal",
            HarnessError::Model(_) => "model",
            HarnessError::Network(_) => "network",
            HarnessError::Eval(_) => "evaluation",
            HarnessError::Analysis(_) => "analysis",
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut err = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let HarnessError::Invalid(details) = self {
            err["details"] = details.clone();
        }
        serde_json::json!({ "error": err })
    }
}

/// A loaded config together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    /// Directory that relative model paths resolve against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| HarnessError::Config("config is not UTF-8".into()))?;
        Ok(Self {
            config: ExperimentConfig::from_json(&text)?,
            bytes,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.check()?;
        Ok(Self {
            bytes: config.to_json().into_bytes(),
            config,
            base_dir: PathBuf::new(),
        })
    }
}

/// Outputs of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub traces: Vec<RunTrace>,
    pub summary: Summary,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

impl RunArtifacts {
    pub fn trace(&self, algorithm: Algorithm, seed: u64) -> Option<&RunTrace> {
        self.traces.iter().find(|t| t.algorithm == algorithm && t.seed == seed)
    }
}

enum Job {
    Centralized(u64),
    Diffusion(u64),
    /// Baseline, plus the diffusion trace when that was requested too.
    Pair(u64, bool),
}

fn seed_bounds(setup: &Setup, cfg: &ExperimentConfig, seed: u64) -> SeedBounds {
    let inputs = BoundInputs {
        alpha: cfg.learner.alpha,
        rho: cfg.learner.rho,
        beta: cfg.learner.beta,
        features: &cfg.features,
        tau: cfg.theory.tau,
        b: cfg.theory.b,
        enumeration_cap: cfg.theory.enumeration_cap,
    };
    let mut out = SeedBounds {
        seed,
        lambda2: mixing_rate(&setup.network),
        d_min: min_degree(&setup.network),
        threshold: setup.threshold,
        b_source: None,
        tau_source: None,
        report: None,
        unavailable: None,
    };
    match gather_constants(&setup.model, &setup.network, &inputs)
        .and_then(|g| Ok((BoundReport::compute(&g.constants)?, g)))
    {
        Ok((report, g)) => {
            out.b_source = Some(g.b_source);
            out.tau_source = Some(g.tau_source);
            out.report = Some(report);
        }
        Err(e) => out.unavailable = Some(e.to_string()),
    }
    out
}

/// Bound reports for every seed (grid layouts differ per seed).
pub fn compute_bounds(loaded: &LoadedConfig) -> Result<Vec<SeedBounds>, HarnessError> {
    let cfg = &loaded.config;
    let model = ResolvedModel::load(&cfg.model, &loaded.base_dir)?;
    cfg.seeds
        .iter()
        .map(|&seed| Ok(seed_bounds(&build_setup(&model, &cfg.network, seed)?, cfg, seed)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedValidation {
    pub seed: u64,
    pub model: ValidationReport,
    pub network: Option<NetworkDiagnostics>,
    pub network_issues: Vec<NetworkIssue>,
}

impl SeedValidation {
    pub fn is_valid(&self) -> bool {
        self.model.is_valid() && self.network_issues.is_empty()
    }
}

/// Model and network checks only, for every seed.
pub fn validate_experiment(loaded: &LoadedConfig) -> Result<Vec<SeedValidation>, HarnessError> {
    let cfg = &loaded.config;
    let model = ResolvedModel::load(&cfg.model, &loaded.base_dir)?;
    cfg.learner_config(model_gamma(&model))?;
    cfg.features.check(model_states(&model))?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let setup = build_setup(&model, &cfg.network, seed)?;
            let (network, network_issues) = match validate_combination(&setup.network) {
                Ok(d) => (Some(d), Vec::new()),
                Err(issues) => (None, issues),
            };
            Ok(SeedValidation {
                seed,
                model: validate_model(&setup.model),
                network,
                network_issues,
            })
        })
        .collect()
}

fn model_gamma(model: &ResolvedModel) -> f64 {
    match model {
        ResolvedModel::Grid(g) => g.gamma,
        ResolvedModel::Fixed(m) => m.gamma(),
    }
}

fn model_states(model: &ResolvedModel) -> usize {
    match model {
        ResolvedModel::Grid(g) => g.width * g.height,
        ResolvedModel::Fixed(m) => m.num_states(),
    }
}

impl ExperimentConfig {
    pub fn learner_config(&self, gamma: f64) -> Result<crate::evaluation::LearnerConfig, HarnessError> {
        let l = crate::evaluation::LearnerConfig {
            alpha: self.learner.alpha,
            rho: self.learner.rho,
            gamma,
            beta: self.learner.beta,
        };
        l.check()?;
        Ok(l)
    }
}

fn summarize(traces: &[RunTrace], cfg: &ExperimentConfig, bounds: Vec<SeedBounds>) -> Summary {
    let mut by_alg: BTreeMap<Algorithm, Vec<&RunTrace>> = BTreeMap::new();
    for t in traces {
        by_alg.entry(t.algorithm).or_default().push(t);
    }
    let half = (cfg.num_iterations / 2) as usize;
    let algorithms = by_alg
        .iter()
        .map(|(&alg, ts)| {
            let per_seed: Vec<SeedSummary> = ts
                .iter()
                .map(|t| {
                    let kl: Vec<Option<f64>> = t.metrics.iter().map(|m| m.mean_kl()).collect();
                    let (mean_kl, skipped) = output::tail_mean(&kl, half);
                    let last = t.metrics.last().expect("at least one iteration");
                    SeedSummary {
                        seed: t.seed,
                        final_sbe_window: *t.sbe_window.last().expect("at least one iteration"),
                        final_agreement_error: last.agreement_error,
                        final_centroid_norm: last.centroid_norm,
                        mean_kl_last_half: mean_kl,
                        kl_skipped: if alg == Algorithm::Centralized { 0 } else { skipped },
                    }
                })
                .collect();
            AlgorithmSummary {
                algorithm: alg,
                final_sbe_window_mean: per_seed.iter().map(|s| s.final_sbe_window).sum::<f64>()
                    / per_seed.len() as f64,
                per_seed,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    for b in &bounds {
        let Some(report) = &b.report else { continue };
        for t in traces.iter().filter(|t| t.seed == b.seed) {
            comparisons.extend(compare(t, report, half));
        }
    }
    Summary {
        code_version: CODE_VERSION,
        num_iterations: cfg.num_iterations,
        seeds: cfg.seeds.clone(),
        sbe_window: cfg.sbe_window,
        averaging: "time mean over the last half of each run; parameter norms use the sup over the last 80%",
        algorithms,
        bounds,
        theory_vs_empirical: comparisons,
    }
}

fn compare(t: &RunTrace, report: &BoundReport, half: usize) -> Vec<Comparison> {
    let mut out = Vec::new();
    let mut push = |quantity, bound: f64, (empirical, skipped): (Option<f64>, usize)| {
        if let Some(e) = empirical {
            out.push(Comparison {
                seed: t.seed,
                algorithm: t.algorithm,
                quantity,
                bound,
                empirical: e,
                holds: e <= bound,
                skipped,
            });
        }
    };
    let n = t.metrics.len();
    if t.algorithm != Algorithm::Centralized {
        // worst agent's time-averaged KL
        let k = t.metrics.first().map_or(0, |m| m.kl.len());
        let mut worst: Option<f64> = None;
        let mut skipped = 0;
        for agent in 0..k {
            let series: Vec<Option<f64>> = t.metrics.iter().map(|m| m.kl[agent].finite()).collect();
            let (m, s) = output::tail_mean(&series, half);
            skipped += s;
            worst = match (worst, m) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
        }
        push("kl_to_central_vs_j_bound", report.j_bound, (worst, skipped));
    }
    if t.algorithm == Algorithm::Diffusion {
        let d: Vec<Option<f64>> = t.metrics.iter().map(|m| m.mean_centroid_distance).collect();
        push("centroid_distance_vs_network_agreement_bound", report.network_agreement_bound, output::tail_mean(&d, half));
        let start = n / 5;
        let sup = t.metrics[start..].iter().map(|m| m.stacked_norm).fold(0.0, f64::max);
        push("parameter_norm_vs_bound", report.parameter_norm_bound, (Some(sup), 0));
    }
    if t.algorithm == Algorithm::Baseline {
        let g: Vec<Option<f64>> = t.metrics.iter().map(|m| m.baseline_gap).collect();
        push("baseline_gap_vs_bound", report.baseline_gap_bound, output::tail_mean(&g, half));
    }
    out
}

/// Run every (algorithm, seed) pair, write CSV traces, seed-mean curves,
/// `summary.json` and `manifest.json` into `out_dir`.
pub fn run_experiment(loaded: &LoadedConfig, out_dir: &Path) -> Result<RunArtifacts, HarnessError> {
    let cfg = &loaded.config;
    let model = ResolvedModel::load(&cfg.model, &loaded.base_dir)?;
    let gamma = model_gamma(&model);
    let learner = cfg.learner_config(gamma)?;
    cfg.features.check(model_states(&model))?;
    warn_regime(&learner, &cfg.features);
    let params = SimParams::from_config(cfg, gamma);

    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        if cfg.wants(Algorithm::Centralized) {
            jobs.push(Job::Centralized(seed));
        }
        if cfg.wants(Algorithm::Baseline) {
            jobs.push(Job::Pair(seed, cfg.wants(Algorithm::Diffusion)));
        } else if cfg.wants(Algorithm::Diffusion) {
            jobs.push(Job::Diffusion(seed));
        }
    }
    let setups: Vec<Setup> = cfg
        .seeds
        .iter()
        .map(|&s| build_setup(&model, &cfg.network, s))
        .collect::<Result<_, _>>()?;
    let setup_of = |seed: u64| &setups[cfg.seeds.iter().position(|&s| s == seed).expect("known seed")];

    let results: Vec<Result<Vec<RunTrace>, HarnessError>> = cfg.exec.map(jobs.len(), |j| {
        let out = match jobs[j] {
            Job::Centralized(seed) => vec![simulate_centralized(setup_of(seed), &params, seed)?],
            Job::Diffusion(seed) => vec![simulate_diffusion(setup_of(seed), &params, seed)?],
            Job::Pair(seed, keep_diffusion) => {
                let (d, b) = simulate_pair(setup_of(seed), &params, seed)?;
                if keep_diffusion {
                    vec![d, b]
                } else {
                    vec![b]
                }
            }
        };
        for t in &out {
            info!("finished {} seed {}", t.algorithm, t.seed);
        }
        Ok(out)
    });
    let mut traces = Vec::new();
    for r in results {
        traces.extend(r?);
    }
    traces.sort_by_key(|t| (t.algorithm, cfg.seeds.iter().position(|&s| s == t.seed)));

    let bounds: Vec<SeedBounds> = cfg
        .exec
        .map(cfg.seeds.len(), |i| seed_bounds(&setups[i], cfg, cfg.seeds[i]));
    let summary = summarize(&traces, cfg, bounds);

    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<(String, Vec<u8>)> = traces
        .iter()
        .map(|t| (format!("{}_seed{}.csv", t.algorithm, t.seed), trace_csv(t).into_bytes()))
        .collect();
    for alg in [Algorithm::Centralized, Algorithm::Diffusion, Algorithm::Baseline] {
        let ts: Vec<&RunTrace> = traces.iter().filter(|t| t.algorithm == alg).collect();
        if !ts.is_empty() {
            files.push((format!("{alg}_mean.csv"), mean_csv(alg, &ts).into_bytes()));
        }
    }
    files.push((
        "summary.json".into(),
        serde_json::to_vec_pretty(&summary).expect("summary serializes"),
    ));
    let written: Vec<Result<output::ManifestEntry, HarnessError>> =
        cfg.exec.map(files.len(), |i| {
            let (name, bytes) = &files[i];
            output::write_file(&out_dir.join(name), bytes)?;
            Ok(output::ManifestEntry {
                path: PathBuf::from(name),
                sha256: sha256_hex(bytes),
            })
        });
    let manifest = Manifest {
        config_sha256: sha256_hex(&loaded.bytes),
        code_version: CODE_VERSION,
        files: written.into_iter().collect::<Result<_, _>>()?,
    };
    output::write_file(
        &out_dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(RunArtifacts {
        traces,
        summary,
        manifest,
        output_dir: out_dir.to_path_buf(),
    })
}
