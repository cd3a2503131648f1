//! Drive the step functions for a whole run and collect per-iteration
//! metrics.

use serde::Serialize;

use super::config::{Algorithm, SimParams, Setup};
use super::HarnessError;
use crate::analysis::{agreement_error, windowed_sbe, KlDivergence};
use crate::evaluation::{
    norm, step_baseline, step_centralized, step_diffusion, BaselineState, CentralizedState,
    DiffusionState, StepContext,
};
use crate::filtering::PolicySupports;
use crate::rng::Streams;

/// Measurements taken after one iteration's parameter update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterMetrics {
    pub sbe: f64,
    /// Diffusion only.
    pub agreement_error: Option<f64>,
    /// ‖w_c‖ for diffusion, ‖w‖ otherwise.
    pub centroid_norm: f64,
    /// Diffusion only: (1/K) Σ ‖w_k − w_c‖.
    pub mean_centroid_distance: Option<f64>,
    /// ‖col{w_k}‖ for diffusion, ‖w‖ otherwise.
    pub stacked_norm: f64,
    /// KL(μ_central ‖ μ_k) per agent; empty for the centralized algorithm.
    pub kl: Vec<KlDivergence>,
    /// Baseline only: ‖w★ − w_c‖ against a diffusion run on the same streams.
    pub baseline_gap: Option<f64>,
}

impl IterMetrics {
    /// Mean KL over agents; `None` when no centralized reference exists,
    /// +∞ if any agent's KL is infinite.
    pub fn mean_kl(&self) -> Option<f64> {
        if self.kl.is_empty() {
            return None;
        }
        if self.kl.iter().any(|k| k.support_violation) {
            return Some(f64::INFINITY);
        }
        Some(self.kl.iter().map(|k| k.value).sum::<f64>() / self.kl.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub metrics: Vec<IterMetrics>,
    pub sbe_window: Vec<f64>,
    /// Parameters after the last iteration (one vector per agent for
    /// diffusion, a single vector otherwise).
    pub final_params: Vec<Vec<f64>>,
}

impl RunTrace {
    fn finish(algorithm: Algorithm, seed: u64, metrics: Vec<IterMetrics>, window: usize, final_params: Vec<Vec<f64>>) -> Self {
        let sbes: Vec<f64> = metrics.iter().map(|m| m.sbe).collect();
        Self {
            algorithm,
            seed,
            sbe_window: windowed_sbe(&sbes, window),
            metrics,
            final_params,
        }
    }
}

struct Shared {
    supports: PolicySupports,
    streams: Streams,
}

impl Shared {
    fn new(setup: &Setup, seed: u64) -> Self {
        Self {
            supports: PolicySupports::new(&setup.model),
            streams: Streams::new(seed),
        }
    }

    fn ctx<'a>(&'a self, setup: &'a Setup, p: &'a SimParams) -> StepContext<'a> {
        StepContext {
            model: &setup.model,
            supports: &self.supports,
            streams: &self.streams,
            learner: &p.learner,
            features: &p.features,
            marginalization: p.marginalization,
            exec: p.exec,
        }
    }
}

fn diffusion_metrics(state: &DiffusionState, sbe: f64, kl: Vec<KlDivergence>) -> Result<IterMetrics, HarnessError> {
    let ws: Vec<&[f64]> = state.agents.iter().map(|a| a.w.as_slice()).collect();
    let c = state.centroid();
    let dist = ws
        .iter()
        .map(|w| norm(&w.iter().zip(&c).map(|(x, y)| x - y).collect::<Vec<_>>()))
        .sum::<f64>()
        / ws.len() as f64;
    let stacked = ws.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    Ok(IterMetrics {
        sbe,
        agreement_error: Some(agreement_error(&ws)?),
        centroid_norm: norm(&c),
        mean_centroid_distance: Some(dist),
        stacked_norm: stacked,
        kl,
        baseline_gap: None,
    })
}

fn single_metrics(w: &[f64], sbe: f64, kl: Vec<KlDivergence>) -> IterMetrics {
    IterMetrics {
        sbe,
        agreement_error: None,
        centroid_norm: norm(w),
        mean_centroid_distance: None,
        stacked_norm: norm(w),
        kl,
        baseline_gap: None,
    }
}

pub fn simulate_centralized(setup: &Setup, p: &SimParams, seed: u64) -> Result<RunTrace, HarnessError> {
    let shared = Shared::new(setup, seed);
    let ctx = shared.ctx(setup, p);
    let mut state = CentralizedState::initial(&setup.model, &p.features, &shared.streams);
    let mut metrics = Vec::with_capacity(p.iterations as usize);
    for _ in 0..p.iterations {
        let rec = step_centralized(&mut state, &ctx)?;
        metrics.push(single_metrics(&state.w, rec.sbe(), Vec::new()));
    }
    Ok(RunTrace::finish(Algorithm::Centralized, seed, metrics, p.sbe_window, vec![state.w]))
}

pub fn simulate_diffusion(setup: &Setup, p: &SimParams, seed: u64) -> Result<RunTrace, HarnessError> {
    let shared = Shared::new(setup, seed);
    let ctx = shared.ctx(setup, p);
    let mut state = DiffusionState::initial(&setup.model, &p.features, &shared.streams);
    let mut metrics = Vec::with_capacity(p.iterations as usize);
    for _ in 0..p.iterations {
        let rec = step_diffusion(&mut state, &ctx, &setup.network)?;
        metrics.push(diffusion_metrics(&state, rec.sbe(), rec.kl_to_central)?);
    }
    let finals = state.agents.into_iter().map(|a| a.w).collect();
    Ok(RunTrace::finish(Algorithm::Diffusion, seed, metrics, p.sbe_window, finals))
}

/// Baseline and diffusion in lockstep on the same streams. Both act on the
/// same local beliefs, so their trajectories coincide and the baseline rows
/// can carry ‖w★ − w_c‖.
pub fn simulate_pair(setup: &Setup, p: &SimParams, seed: u64) -> Result<(RunTrace, RunTrace), HarnessError> {
    let shared = Shared::new(setup, seed);
    let ctx = shared.ctx(setup, p);
    let mut diff = DiffusionState::initial(&setup.model, &p.features, &shared.streams);
    let mut base = BaselineState::initial(&setup.model, &p.features, &shared.streams);
    let mut dm = Vec::with_capacity(p.iterations as usize);
    let mut bm = Vec::with_capacity(p.iterations as usize);
    for _ in 0..p.iterations {
        let dr = step_diffusion(&mut diff, &ctx, &setup.network)?;
        let br = step_baseline(&mut base, &ctx, &setup.network)?;
        if dr.actions != br.actions || dr.next_state != br.next_state {
            return Err(HarnessError::Internal(format!(
                "diffusion and baseline trajectories diverged at iteration {}",
                dr.iter
            )));
        }
        let c = diff.centroid();
        let gap = norm(&base.w_star.iter().zip(&c).map(|(x, y)| x - y).collect::<Vec<_>>());
        dm.push(diffusion_metrics(&diff, dr.sbe(), dr.kl_to_central)?);
        let mut m = single_metrics(&base.w_star, br.sbe(), br.kl_to_central);
        m.baseline_gap = Some(gap);
        bm.push(m);
    }
    let finals = diff.agents.into_iter().map(|a| a.w).collect();
    Ok((
        RunTrace::finish(Algorithm::Diffusion, seed, dm, p.sbe_window, finals),
        RunTrace::finish(Algorithm::Baseline, seed, bm, p.sbe_window, vec![base.w_star]),
    ))
}

/// Run one algorithm for one seed.
pub fn simulate(setup: &Setup, p: &SimParams, algorithm: Algorithm, seed: u64) -> Result<RunTrace, HarnessError> {
    match algorithm {
        Algorithm::Centralized => simulate_centralized(setup, p, seed),
        Algorithm::Diffusion => simulate_diffusion(setup, p, seed),
        Algorithm::Baseline => Ok(simulate_pair(setup, p, seed)?.1),
    }
}
