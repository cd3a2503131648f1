//! Regularized TD(0) policy evaluation over belief features, in three
//! drivers: centralized, diffusion over a graph, and centralized training
//! for decentralized execution.
//!
//! One call to a `step_*` function is one iteration. All randomness comes
//! from [`Streams`] keyed by (agent, iteration, phase), so two drivers fed
//! the same master seed see the same observations, actions and state
//! transitions whenever their beliefs agree.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{kl_divergence, KlDivergence};
use crate::exec::Exec;
use crate::filtering::{
    centralized_adapt, centralized_evolve, dhs_adapt, dhs_combine, dhs_evolve,
    local_transition_model, FilterError, Marginalization, PolicySupports,
};
use crate::model::{sample_next_state, sample_observation, Belief, DecPomdpModel, ModelError};
use crate::network::CombinationMatrix;
use crate::rng::{sample_categorical, Phase, Streams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("non-finite parameters at iteration {0}")]
    NonFinite(u64),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Belief features φ(μ).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureMap {
    /// φ(μ) = μ; ‖φ‖ ≤ 1 and 1-Lipschitz on the simplex.
    #[default]
    Identity,
    /// φ(μ) = Aμ with `matrix` = A (M×S).
    Linear { matrix: Vec<Vec<f64>> },
}

impl FeatureMap {
    pub fn dim(&self, num_states: usize) -> usize {
        match self {
            FeatureMap::Identity => num_states,
            FeatureMap::Linear { matrix } => matrix.len(),
        }
    }

    pub fn check(&self, num_states: usize) -> Result<(), EvalError> {
        if let FeatureMap::Linear { matrix } = self {
            if matrix.is_empty() || matrix.iter().any(|r| r.len() != num_states) {
                return Err(EvalError::Dimension(format!(
                    "feature matrix must be Mx{num_states}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, mu: &Belief) -> Vec<f64> {
        match self {
            FeatureMap::Identity => mu.as_slice().to_vec(),
            FeatureMap::Linear { matrix } => matrix.iter().map(|row| dot(row, mu.as_slice())).collect(),
        }
    }

    /// B_φ: sup of ‖φ(μ)‖ over the simplex (attained at a vertex).
    pub fn bound(&self) -> f64 {
        match self {
            FeatureMap::Identity => 1.0,
            FeatureMap::Linear { matrix } => {
                let s = matrix.first().map_or(0, Vec::len);
                (0..s)
                    .map(|j| matrix.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// L_φ: spectral norm of the linear map.
    pub fn lipschitz(&self) -> f64 {
        match self {
            FeatureMap::Identity => 1.0,
            FeatureMap::Linear { matrix } => {
                let m = matrix.len();
                let s = matrix.first().map_or(0, Vec::len);
                let a = DMatrix::from_fn(m, s, |i, j| matrix[i][j]);
                let gram = a.transpose() * a;
                SymmetricEigen::new(gram)
                    .eigenvalues
                    .iter()
                    .fold(0.0, |acc: f64, v| acc.max(*v))
                    .max(0.0)
                    .sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub rho: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl LearnerConfig {
    pub fn check(&self) -> Result<(), EvalError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(EvalError::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(EvalError::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EvalError::Config(format!("gamma must be in [0,1), got {}", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(EvalError::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Smallest ρ for which the parameter-boundedness guarantees apply.
    pub fn rho_threshold(&self, b_phi: f64, l_phi: f64) -> f64 {
        0.75 * self.gamma * b_phi * l_phi
    }

    /// Message when ρ is below the boundedness regime, `None` otherwise.
    pub fn regime_warning(&self, features: &FeatureMap) -> Option<String> {
        let need = self.rho_threshold(features.bound(), features.lipschitz());
        (self.rho < need).then(|| {
            format!(
                "rho = {} is below 0.75*gamma*B_phi*L_phi = {need}; parameter bounds are not guaranteed",
                self.rho
            )
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// δ = r + γ⟨φ(η′), w⟩ − ⟨φ(μ), w⟩.
pub fn td_error(
    reward: f64,
    phi_eta_next: &[f64],
    phi_mu: &[f64],
    w: &[f64],
    gamma: f64,
) -> Result<f64, EvalError> {
    if phi_eta_next.len() != w.len() || phi_mu.len() != w.len() {
        return Err(EvalError::Dimension(format!(
            "features {}/{} vs parameters {}",
            phi_eta_next.len(),
            phi_mu.len(),
            w.len()
        )));
    }
    Ok(reward + gamma * dot(phi_eta_next, w) - dot(phi_mu, w))
}

/// z = (1 − 2ρα)w + αδφ(μ).
pub fn local_adapt(w: &[f64], delta: f64, phi_mu: &[f64], cfg: &LearnerConfig) -> Vec<f64> {
    let shrink = 1.0 - 2.0 * cfg.rho * cfg.alpha;
    w.iter()
        .zip(phi_mu)
        .map(|(wi, fi)| shrink * wi + cfg.alpha * delta * fi)
        .collect()
}

/// w = Σ_ℓ c_ℓ z_ℓ.
pub fn param_combine(zs: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, EvalError> {
    if zs.len() != weights.len() || zs.is_empty() {
        return Err(EvalError::Dimension(format!(
            "{} vectors vs {} weights",
            zs.len(),
            weights.len()
        )));
    }
    let m = zs[0].len();
    let mut out = vec![0.0; m];
    for (z, &c) in zs.iter().zip(weights) {
        if z.len() != m {
            return Err(EvalError::Dimension(format!("vector length {} vs {m}", z.len())));
        }
        for (o, zi) in out.iter_mut().zip(*z) {
            *o += c * zi;
        }
    }
    Ok(out)
}

/// Per-agent learner state carried across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub w: Vec<f64>,
    pub mu: Belief,
    pub eta: Belief,
    pub last_action: Option<usize>,
    pub last_reward: Option<f64>,
}

impl AgentState {
    /// Uniform prior, zero parameters.
    pub fn initial(num_states: usize, dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            mu: Belief::uniform(num_states),
            eta: Belief::uniform(num_states),
            last_action: None,
            last_reward: None,
        }
    }
}

/// A centralized belief chain (η before the update, μ after).
#[derive(Debug, Clone, PartialEq)]
pub struct CentralBelief {
    pub mu: Belief,
    pub eta: Belief,
}

impl CentralBelief {
    pub fn initial(num_states: usize) -> Self {
        Self {
            mu: Belief::uniform(num_states),
            eta: Belief::uniform(num_states),
        }
    }
}

/// Hidden environment state and the index of the next iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct World {
    pub state: usize,
    pub iter: u64,
}

impl World {
    /// s₀ drawn uniformly from the environment's initial-state stream.
    pub fn initial(num_states: usize, streams: &Streams) -> Self {
        let mut rng = streams.env(0, Phase::InitialState);
        let state = sample_categorical(&vec![1.0; num_states], &mut rng);
        Self { state, iter: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedState {
    pub world: World,
    pub belief: CentralBelief,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub world: World,
    pub agents: Vec<AgentState>,
    /// Instrumentation only: the centralized filter fed the same
    /// observations and executed actions. Never read by any agent.
    pub shadow: CentralBelief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub world: World,
    /// Local beliefs used for acting; their `w` stays unused.
    pub agents: Vec<AgentState>,
    pub central: CentralBelief,
    pub w_star: Vec<f64>,
}

impl CentralizedState {
    pub fn initial(model: &DecPomdpModel, features: &FeatureMap, streams: &Streams) -> Self {
        let s = model.num_states();
        Self {
            world: World::initial(s, streams),
            belief: CentralBelief::initial(s),
            w: vec![0.0; features.dim(s)],
        }
    }
}

impl DiffusionState {
    pub fn initial(model: &DecPomdpModel, features: &FeatureMap, streams: &Streams) -> Self {
        let s = model.num_states();
        Self {
            world: World::initial(s, streams),
            agents: vec![AgentState::initial(s, features.dim(s)); model.num_agents()],
            shadow: CentralBelief::initial(s),
        }
    }

    /// Network centroid w_c = (1/K) Σ_k w_k.
    pub fn centroid(&self) -> Vec<f64> {
        centroid(self.agents.iter().map(|a| a.w.as_slice()))
    }
}

impl BaselineState {
    pub fn initial(model: &DecPomdpModel, features: &FeatureMap, streams: &Streams) -> Self {
        let s = model.num_states();
        Self {
            world: World::initial(s, streams),
            agents: vec![AgentState::initial(s, 0); model.num_agents()],
            central: CentralBelief::initial(s),
            w_star: vec![0.0; features.dim(s)],
        }
    }
}

pub fn centroid<'a>(ws: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for w in ws {
        if out.is_empty() {
            out = vec![0.0; w.len()];
        }
        out.iter_mut().zip(w).for_each(|(o, x)| *o += x);
        n += 1;
    }
    out.iter_mut().for_each(|o| *o /= n.max(1) as f64);
    out
}

/// Everything a step needs besides the mutable run state.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub model: &'a DecPomdpModel,
    pub supports: &'a PolicySupports,
    pub streams: &'a Streams,
    pub learner: &'a LearnerConfig,
    pub features: &'a FeatureMap,
    pub marginalization: Marginalization,
    pub exec: Exec,
}

/// Labels for the ordered phases of one iteration, recorded for tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPhase {
    Observe,
    LocalAdapt,
    Combine,
    CentralAdapt,
    Act,
    Transition,
    LocalEvolve,
    CentralEvolve,
    TdUpdate,
    ParamCombine,
}

/// What one iteration did and what it measured.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iter: u64,
    pub state: usize,
    pub next_state: usize,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Per-agent TD errors (diffusion) or the single central one.
    pub deltas: Vec<f64>,
    /// Beliefs the actions were drawn from.
    pub acting_beliefs: Vec<Belief>,
    /// KL(μ_central ‖ μ_k) per agent where a centralized chain exists.
    pub kl_to_central: Vec<KlDivergence>,
    pub phases: Vec<StepPhase>,
}

impl StepRecord {
    /// Squared Bellman error: mean of δ².
    pub fn sbe(&self) -> f64 {
        crate::analysis::sbe(&self.deltas)
    }
}

fn observe_all(ctx: &StepContext<'_>, state: usize, iter: u64) -> Result<Vec<usize>, EvalError> {
    ctx.exec
        .map(ctx.model.num_agents(), |k| {
            let mut rng = ctx.streams.agent(k, iter, Phase::Observe);
            let lik = &ctx.model.agent(k).likelihood;
            sample_observation(std::slice::from_ref(lik), 0, state, &mut rng)
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

fn act_all(ctx: &StepContext<'_>, beliefs: &[&Belief], iter: u64) -> Vec<usize> {
    ctx.exec.map(beliefs.len(), |k| {
        let mut rng = ctx.streams.agent(k, iter, Phase::Act);
        ctx.model.agent(k).policy.sample(beliefs[k], &mut rng)
    })
}

fn transition(
    ctx: &StepContext<'_>,
    state: usize,
    joint: &[usize],
    iter: u64,
) -> Result<(usize, Vec<f64>), EvalError> {
    let mut rng = ctx.streams.env(iter, Phase::Transition);
    let next = sample_next_state(ctx.model.transition(), state, joint, &mut rng)?;
    let rewards = (0..ctx.model.num_agents())
        .map(|k| ctx.model.reward(k, state, joint, next))
        .collect();
    Ok((next, rewards))
}

/// Local DHS adapt + combine for every agent.
fn dhs_beliefs(
    ctx: &StepContext<'_>,
    network: &CombinationMatrix,
    agents: &[AgentState],
    observations: &[usize],
) -> Result<Vec<Belief>, EvalError> {
    let beta = ctx.learner.beta;
    let psis: Vec<Belief> = ctx
        .exec
        .map(agents.len(), |k| {
            dhs_adapt(&agents[k].eta, observations[k], &ctx.model.agent(k).likelihood, beta)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    ctx.exec
        .map(agents.len(), |k| {
            let (idx, weights): (Vec<usize>, Vec<f64>) = network.incoming(k).into_iter().unzip();
            let ps: Vec<&Belief> = idx.iter().map(|&l| &psis[l]).collect();
            dhs_combine(&ps, &weights)
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// Local time update through each agent's marginalized transition model.
fn dhs_time_update(
    ctx: &StepContext<'_>,
    network: &CombinationMatrix,
    mus: &[&Belief],
    joint: &[usize],
    iter: u64,
) -> Result<Vec<Belief>, EvalError> {
    let k_agents = mus.len();
    ctx.exec
        .map(k_agents, |k| {
            let mut known = vec![None; k_agents];
            known[k] = Some(joint[k]);
            for l in network.neighbors(k) {
                known[l] = Some(joint[l]);
            }
            let mut rng = ctx.streams.agent(k, iter, Phase::Marginalize);
            let local = local_transition_model(
                ctx.model,
                ctx.supports,
                &known,
                ctx.marginalization,
                &mut rng,
            )?;
            dhs_evolve(mus[k], &local)
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

fn check_finite(w: &[f64], iter: u64) -> Result<(), EvalError> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite(iter))
    }
}

fn kl_list(central: &Belief, locals: &[&Belief]) -> Vec<KlDivergence> {
    locals.iter().map(|m| kl_divergence(central, m)).collect()
}

/// One iteration of centralized policy evaluation.
pub fn step_centralized(
    state: &mut CentralizedState,
    ctx: &StepContext<'_>,
) -> Result<StepRecord, EvalError> {
    let World { state: s, iter } = state.world;
    let model = ctx.model;
    let mut phases = vec![StepPhase::Observe];
    let observations = observe_all(ctx, s, iter)?;

    phases.push(StepPhase::CentralAdapt);
    let liks: Vec<_> = model.agents().iter().map(|a| &a.likelihood).collect();
    let mu = centralized_adapt(&state.belief.eta, &observations, &liks)?;

    phases.push(StepPhase::Act);
    let actions = act_all(ctx, &vec![&mu; model.num_agents()], iter);
    phases.push(StepPhase::Transition);
    let (next, rewards) = transition(ctx, s, &actions, iter)?;

    phases.push(StepPhase::CentralEvolve);
    let eta_next = centralized_evolve(&mu, &actions, model.transition())?;

    phases.push(StepPhase::TdUpdate);
    let r_avg = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let phi_mu = ctx.features.apply(&mu);
    let phi_eta = ctx.features.apply(&eta_next);
    let delta = td_error(r_avg, &phi_eta, &phi_mu, &state.w, ctx.learner.gamma)?;
    state.w = local_adapt(&state.w, delta, &phi_mu, ctx.learner);
    check_finite(&state.w, iter)?;

    state.belief = CentralBelief {
        mu: mu.clone(),
        eta: eta_next,
    };
    state.world = World {
        state: next,
        iter: iter + 1,
    };
    Ok(StepRecord {
        iter,
        state: s,
        next_state: next,
        observations,
        actions,
        rewards,
        deltas: vec![delta],
        acting_beliefs: vec![mu],
        kl_to_central: Vec::new(),
        phases,
    })
}

/// One iteration of diffusion policy evaluation.
pub fn step_diffusion(
    state: &mut DiffusionState,
    ctx: &StepContext<'_>,
    network: &CombinationMatrix,
) -> Result<StepRecord, EvalError> {
    let World { state: s, iter } = state.world;
    let model = ctx.model;
    let k_agents = model.num_agents();
    let mut phases = vec![StepPhase::Observe];
    let observations = observe_all(ctx, s, iter)?;

    phases.extend([StepPhase::LocalAdapt, StepPhase::Combine]);
    let mus = dhs_beliefs(ctx, network, &state.agents, &observations)?;
    let mu_refs: Vec<&Belief> = mus.iter().collect();

    phases.push(StepPhase::Act);
    let actions = act_all(ctx, &mu_refs, iter);
    phases.push(StepPhase::Transition);
    let (next, rewards) = transition(ctx, s, &actions, iter)?;

    phases.push(StepPhase::LocalEvolve);
    let etas = dhs_time_update(ctx, network, &mu_refs, &actions, iter)?;

    // shadow centralized chain for disagreement measurements
    let liks: Vec<_> = model.agents().iter().map(|a| &a.likelihood).collect();
    let central_mu = centralized_adapt(&state.shadow.eta, &observations, &liks)?;
    let central_eta = centralized_evolve(&central_mu, &actions, model.transition())?;
    let kl = kl_list(&central_mu, &mu_refs);

    phases.push(StepPhase::TdUpdate);
    let gamma = ctx.learner.gamma;
    let updates: Vec<(f64, Vec<f64>)> = ctx
        .exec
        .map(k_agents, |k| {
            let phi_mu = ctx.features.apply(&mus[k]);
            let phi_eta = ctx.features.apply(&etas[k]);
            let w = &state.agents[k].w;
            let delta = td_error(rewards[k], &phi_eta, &phi_mu, w, gamma)?;
            Ok((delta, local_adapt(w, delta, &phi_mu, ctx.learner)))
        })
        .into_iter()
        .collect::<Result<_, EvalError>>()?;

    phases.push(StepPhase::ParamCombine);
    let new_ws: Vec<Vec<f64>> = ctx
        .exec
        .map(k_agents, |k| {
            let (idx, weights): (Vec<usize>, Vec<f64>) = network.incoming(k).into_iter().unzip();
            let zs: Vec<&[f64]> = idx.iter().map(|&l| updates[l].1.as_slice()).collect();
            param_combine(&zs, &weights)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;

    for (k, (agent, w)) in state.agents.iter_mut().zip(new_ws).enumerate() {
        check_finite(&w, iter)?;
        agent.w = w;
        agent.mu = mus[k].clone();
        agent.eta = etas[k].clone();
        agent.last_action = Some(actions[k]);
        agent.last_reward = Some(rewards[k]);
    }
    state.shadow = CentralBelief {
        mu: central_mu,
        eta: central_eta,
    };
    state.world = World {
        state: next,
        iter: iter + 1,
    };
    Ok(StepRecord {
        iter,
        state: s,
        next_state: next,
        observations,
        actions,
        rewards,
        deltas: updates.into_iter().map(|(d, _)| d).collect(),
        acting_beliefs: mus,
        kl_to_central: kl,
        phases,
    })
}

/// One iteration of the centralized-training / decentralized-execution
/// baseline: local beliefs drive the actions, the centralized belief drives
/// a single parameter vector trained on the average reward.
pub fn step_baseline(
    state: &mut BaselineState,
    ctx: &StepContext<'_>,
    network: &CombinationMatrix,
) -> Result<StepRecord, EvalError> {
    let World { state: s, iter } = state.world;
    let model = ctx.model;
    let mut phases = vec![StepPhase::Observe];
    let observations = observe_all(ctx, s, iter)?;

    phases.extend([StepPhase::LocalAdapt, StepPhase::Combine]);
    let mus = dhs_beliefs(ctx, network, &state.agents, &observations)?;
    let mu_refs: Vec<&Belief> = mus.iter().collect();

    phases.push(StepPhase::CentralAdapt);
    let liks: Vec<_> = model.agents().iter().map(|a| &a.likelihood).collect();
    let central_mu = centralized_adapt(&state.central.eta, &observations, &liks)?;

    phases.push(StepPhase::Act);
    let actions = act_all(ctx, &mu_refs, iter);
    phases.push(StepPhase::Transition);
    let (next, rewards) = transition(ctx, s, &actions, iter)?;
    let r_star = rewards.iter().sum::<f64>() / rewards.len() as f64;

    phases.push(StepPhase::LocalEvolve);
    let etas = dhs_time_update(ctx, network, &mu_refs, &actions, iter)?;
    phases.push(StepPhase::CentralEvolve);
    let central_eta = centralized_evolve(&central_mu, &actions, model.transition())?;

    phases.push(StepPhase::TdUpdate);
    let phi_mu = ctx.features.apply(&central_mu);
    let phi_eta = ctx.features.apply(&central_eta);
    let delta = td_error(r_star, &phi_eta, &phi_mu, &state.w_star, ctx.learner.gamma)?;
    state.w_star = local_adapt(&state.w_star, delta, &phi_mu, ctx.learner);
    check_finite(&state.w_star, iter)?;

    let kl = kl_list(&central_mu, &mu_refs);
    for (k, agent) in state.agents.iter_mut().enumerate() {
        agent.mu = mus[k].clone();
        agent.eta = etas[k].clone();
        agent.last_action = Some(actions[k]);
        agent.last_reward = Some(rewards[k]);
    }
    state.central = CentralBelief {
        mu: central_mu,
        eta: central_eta,
    };
    state.world = World {
        state: next,
        iter: iter + 1,
    };
    Ok(StepRecord {
        iter,
        state: s,
        next_state: next,
        observations,
        actions,
        rewards,
        deltas: vec![delta],
        acting_beliefs: mus,
        kl_to_central: kl,
        phases,
    })
}

/// Warn once if the learner is outside the boundedness regime.
pub fn warn_regime(cfg: &LearnerConfig, features: &FeatureMap) {
    if let Some(msg) = cfg.regime_warning(features) {
        warn!("{msg}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, rho: f64) -> LearnerConfig {
        LearnerConfig {
            alpha,
            rho,
            gamma: 0.9,
            beta: 1.0,
        }
    }

    #[test]
    fn td_error_examples() {
        assert_eq!(td_error(0.0, &[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], 0.9).unwrap(), 0.0);
        // <φ(η'),w> = 0.5 and <φ(μ),w> = 0.5
        let d = td_error(1.0, &[0.5, 0.0], &[0.0, 0.5], &[1.0, 1.0], 0.9).unwrap();
        assert!((d - 0.95).abs() < 1e-15);
        let d = td_error(2.0, &[0.3, 0.7], &[0.25, 0.75], &[1.0, 2.0], 0.0).unwrap();
        assert!((d - (2.0 - 1.75)).abs() < 1e-15);
        assert!(td_error(0.0, &[1.0], &[1.0, 0.0], &[0.0, 0.0], 0.9).is_err());
    }

    #[test]
    fn local_adapt_examples() {
        let w = [0.3, -0.2];
        assert_eq!(local_adapt(&w, 0.0, &[1.0, 1.0], &cfg(0.1, 0.0)), w.to_vec());
        let z = local_adapt(&[0.0, 0.0], 2.0, &[0.5, 0.25], &cfg(0.1, 0.3));
        assert_eq!(z, vec![0.1 * 2.0 * 0.5, 0.1 * 2.0 * 0.25]);
        let z = local_adapt(&[1.0, 0.0], 2.0, &[0.0, 1.0], &cfg(0.1, 0.5));
        assert!((z[0] - 0.9).abs() < 1e-15 && (z[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn param_combine_examples() {
        let z = [0.4, -1.0];
        assert_eq!(param_combine(&[&z], &[1.0]).unwrap(), z.to_vec());
        assert_eq!(param_combine(&[&z, &z], &[0.5, 0.5]).unwrap(), z.to_vec());
        let out = param_combine(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.25, 0.75]).unwrap();
        assert_eq!(out, vec![0.25, 0.75]);
        assert!(param_combine(&[&[1.0], &[0.0, 1.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn identity_features_bounds() {
        let f = FeatureMap::Identity;
        assert_eq!((f.bound(), f.lipschitz()), (1.0, 1.0));
        let lin = FeatureMap::Linear {
            matrix: vec![vec![2.0, 0.0], vec![0.0, 1.0]],
        };
        assert!((lin.bound() - 2.0).abs() < 1e-15);
        assert!((lin.lipschitz() - 2.0).abs() < 1e-12);
        assert_eq!(lin.apply(&Belief::new(vec![0.5, 0.5]).unwrap()), vec![1.0, 0.5]);
    }

    #[test]
    fn regime_warning_threshold() {
        let f = FeatureMap::Identity;
        assert!(cfg(0.1, 0.0001).regime_warning(&f).is_some());
        assert!(cfg(0.1, 0.675).regime_warning(&f).is_none());
        assert!(cfg(0.0, 0.1).check().is_err());
        assert!(LearnerConfig { beta: 0.0, ..cfg(0.1, 0.1) }.check().is_err());
    }
}
