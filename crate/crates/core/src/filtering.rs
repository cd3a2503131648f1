//! Belief recursions: the centralized Bayes filter and the diffusion HMM
//! strategy (β-scaled local update, geometric averaging over neighbours,
//! local time update through a marginalized transition model).
//!
//! All products of probabilities are formed as sums of logarithms and
//! normalized once, so (L)^β terms over many agents never underflow.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Belief, DecPomdpModel, LikelihoodModel, ModelError, TransitionKernel};
use crate::rng::sample_categorical;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("posterior has zero mass in every state")]
    ZeroMass,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("combination weights must be nonnegative and sum to 1 (sum {0})")]
    Weights(f64),
    #[error("beta must be positive, got {0}")]
    Beta(f64),
    #[error("non-neighbour joint action space has {size} tuples, cap is {cap}")]
    EnumerationCap { size: String, cap: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const WEIGHT_TOL: f64 = 1e-12;

/// Log-probabilities over states; unnormalized between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBelief(Vec<f64>);

impl LogBelief {
    pub fn from_belief(b: &Belief) -> Self {
        Self(b.as_slice().iter().map(|p| p.ln()).collect())
    }

    pub fn from_logs(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Exponentiate and normalize (log-sum-exp).
    pub fn normalize(&self) -> Result<Belief, FilterError> {
        let max = self
            .0
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(FilterError::ZeroMass);
        }
        let mut out: Vec<f64> = self.0.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= total);
        Ok(Belief::from_normalized_unchecked(out))
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), FilterError> {
    if got != want {
        return Err(FilterError::Dimension(format!("{what}: {got} != {want}")));
    }
    Ok(())
}

/// μ(s) ∝ Π_k L_k(ξ_k | s) · η(s).
pub fn centralized_adapt(
    eta: &Belief,
    observations: &[usize],
    likelihoods: &[&LikelihoodModel],
) -> Result<Belief, FilterError> {
    check_len("observations vs agents", observations.len(), likelihoods.len())?;
    let mut log = LogBelief::from_belief(eta).0;
    for (&xi, lik) in observations.iter().zip(likelihoods) {
        check_len("likelihood states", lik.num_states(), eta.len())?;
        if xi >= lik.num_observations() {
            return Err(ModelError::IndexOutOfRange {
                what: "observation",
                index: xi,
                len: lik.num_observations(),
            }
            .into());
        }
        for (l, &ll) in log.iter_mut().zip(lik.log_column(xi)) {
            *l += ll;
        }
    }
    LogBelief(log).normalize()
}

/// η(s) = Σ_{s′} 𝕋(s | s′, a) μ(s′).
pub fn centralized_evolve(
    mu: &Belief,
    joint: &[usize],
    kernel: &TransitionKernel,
) -> Result<Belief, FilterError> {
    check_len("belief vs kernel states", mu.len(), kernel.num_states())?;
    match kernel {
        TransitionKernel::Dense(d) => d.codec().check(joint)?,
        TransitionKernel::Grid(g) => g.check_joint(joint)?,
    }
    let mut eta = vec![0.0; mu.len()];
    for (sp, &m) in mu.as_slice().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (e, &t) in eta.iter_mut().zip(kernel.column(sp, joint).iter()) {
            *e += t * m;
        }
    }
    renormalize(eta)
}

fn renormalize(mut v: Vec<f64>) -> Result<Belief, FilterError> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FilterError::ZeroMass);
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(Belief::from_normalized_unchecked(v))
}

/// ψ(s) ∝ L(ξ | s)^β · η(s).
pub fn dhs_adapt(
    eta: &Belief,
    xi: usize,
    likelihood: &LikelihoodModel,
    beta: f64,
) -> Result<Belief, FilterError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(FilterError::Beta(beta));
    }
    check_len("likelihood states", likelihood.num_states(), eta.len())?;
    if xi >= likelihood.num_observations() {
        return Err(ModelError::IndexOutOfRange {
            what: "observation",
            index: xi,
            len: likelihood.num_observations(),
        }
        .into());
    }
    let log: Vec<f64> = eta
        .as_slice()
        .iter()
        .zip(likelihood.log_column(xi))
        .map(|(e, ll)| e.ln() + beta * ll)
        .collect();
    LogBelief(log).normalize()
}

/// μ(s) ∝ Π_ℓ ψ_ℓ(s)^{c_ℓ}.
pub fn dhs_combine(psis: &[&Belief], weights: &[f64]) -> Result<Belief, FilterError> {
    check_len("beliefs vs weights", psis.len(), weights.len())?;
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > WEIGHT_TOL {
        return Err(FilterError::Weights(total));
    }
    let n = psis
        .first()
        .map(|b| b.len())
        .ok_or_else(|| FilterError::Dimension("no beliefs to combine".into()))?;
    let mut log = vec![0.0; n];
    for (psi, &c) in psis.iter().zip(weights) {
        check_len("combined belief length", psi.len(), n)?;
        if c == 0.0 {
            continue;
        }
        for (l, &p) in log.iter_mut().zip(psi.as_slice()) {
            *l += c * p.ln();
        }
    }
    LogBelief(log).normalize()
}

/// How the non-neighbour actions are marginalized out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginalization {
    /// Sum over every non-neighbour action tuple.
    Exact {
        #[serde(default = "default_cap")]
        enumeration_cap: u64,
    },
    /// Average over sampled non-neighbour tuples.
    MonteCarlo {
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;
pub const DEFAULT_MC_SAMPLES: usize = 1000;

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

fn default_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

impl Default for Marginalization {
    fn default() -> Self {
        Marginalization::Exact {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo { samples: usize },
}

/// 𝕋ᵏ_π(s | s′, a_𝒩): one distribution over next states per previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTransitionMatrix {
    num_states: usize,
    /// `[s′][s]`
    columns: Vec<f64>,
    provenance: Provenance,
}

impl LocalTransitionMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>, provenance: Provenance) -> Self {
        let num_states = columns.len();
        Self {
            num_states,
            columns: columns.into_iter().flatten().collect(),
            provenance,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn column(&self, s_prev: usize) -> &[f64] {
        &self.columns[s_prev * self.num_states..(s_prev + 1) * self.num_states]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// Sparse π_ℓ(· | one_hot(s′)) for every agent and state, shared across steps.
#[derive(Debug, Clone)]
pub struct PolicySupports {
    /// `[agent][s′]` → (action, probability) pairs with positive probability.
    table: Vec<Vec<Vec<(usize, f64)>>>,
    action_counts: Vec<usize>,
}

impl PolicySupports {
    pub fn new(model: &DecPomdpModel) -> Self {
        let table = model
            .agents()
            .iter()
            .map(|a| {
                (0..model.num_states())
                    .map(|s| {
                        a.policy
                            .at_state(s)
                            .into_iter()
                            .enumerate()
                            .filter(|(_, p)| *p > 0.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            table,
            action_counts: model.action_counts(),
        }
    }

    pub fn support(&self, agent: usize, s_prev: usize) -> &[(usize, f64)] {
        &self.table[agent][s_prev]
    }
}

/// Build 𝕋ᵏ_π for the agent whose known actions are the `Some` entries of
/// `known` (its neighbourhood, itself included).
///
/// For each s′ the column is Σ over non-neighbour tuples a^c of
/// 𝕋(· | s′, a_𝒩, a^c) · Π_{ℓ∉𝒩} π_ℓ(a^c_ℓ | s′). The neighbours' own policy
/// factor is constant in s and cancels in the per-column normalization.
/// The random stream is only consumed in Monte-Carlo mode.
pub fn local_transition_model<R: Rng + ?Sized>(
    model: &DecPomdpModel,
    supports: &PolicySupports,
    known: &[Option<usize>],
    mode: Marginalization,
    rng: &mut R,
) -> Result<LocalTransitionMatrix, FilterError> {
    let k_agents = model.num_agents();
    check_len("known actions vs agents", known.len(), k_agents)?;
    for (agent, a) in known.iter().enumerate() {
        if let Some(a) = *a {
            if a >= supports.action_counts[agent] {
                return Err(ModelError::IndexOutOfRange {
                    what: "action",
                    index: a,
                    len: supports.action_counts[agent],
                }
                .into());
            }
        }
    }
    let unknown: Vec<usize> = (0..k_agents).filter(|&l| known[l].is_none()).collect();
    let kernel = model.transition();
    let n = model.num_states();

    if let Marginalization::Exact { enumeration_cap } = mode {
        let size = unknown
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(supports.action_counts[l] as u64));
        match size {
            Some(s) if s <= enumeration_cap => {}
            other => {
                return Err(FilterError::EnumerationCap {
                    size: other.map_or_else(|| "overflow".into(), |s| s.to_string()),
                    cap: enumeration_cap,
                })
            }
        }
    }

    let base: Vec<usize> = known.iter().map(|a| a.unwrap_or(0)).collect();
    let mut columns = Vec::with_capacity(n * n);
    let mut joint = base.clone();
    for sp in 0..n {
        let mut col = vec![0.0; n];
        let degenerate = unknown
            .iter()
            .all(|&l| supports.support(l, sp).len() == 1);
        if degenerate {
            for &l in &unknown {
                joint[l] = supports.support(l, sp)[0].0;
            }
            col.copy_from_slice(&kernel.column(sp, &joint));
        } else {
            match mode {
                Marginalization::Exact { .. } => {
                    accumulate_exact(kernel, supports, &unknown, sp, &mut joint, &mut col)
                }
                Marginalization::MonteCarlo { samples } => accumulate_sampled(
                    kernel, supports, &unknown, sp, samples, &mut joint, &mut col, rng,
                ),
            }
            let total: f64 = col.iter().sum();
            if !(total > 0.0) {
                return Err(FilterError::ZeroMass);
            }
            col.iter_mut().for_each(|v| *v /= total);
        }
        columns.extend_from_slice(&col);
    }
    let provenance = match mode {
        Marginalization::Exact { .. } => Provenance::Exact,
        Marginalization::MonteCarlo { samples } => Provenance::MonteCarlo { samples },
    };
    Ok(LocalTransitionMatrix {
        num_states: n,
        columns,
        provenance,
    })
}

fn accumulate_exact(
    kernel: &TransitionKernel,
    supports: &PolicySupports,
    unknown: &[usize],
    sp: usize,
    joint: &mut [usize],
    col: &mut [f64],
) {
    let sups: Vec<&[(usize, f64)]> = unknown.iter().map(|&l| supports.support(l, sp)).collect();
    let mut digits = vec![0usize; unknown.len()];
    loop {
        let mut w = 1.0;
        for ((&l, sup), &d) in unknown.iter().zip(&sups).zip(&digits) {
            joint[l] = sup[d].0;
            w *= sup[d].1;
        }
        for (c, &t) in col.iter_mut().zip(kernel.column(sp, joint).iter()) {
            *c += w * t;
        }
        // odometer over supports
        let mut i = 0;
        loop {
            if i == digits.len() {
                return;
            }
            digits[i] += 1;
            if digits[i] < sups[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_sampled<R: Rng + ?Sized>(
    kernel: &TransitionKernel,
    supports: &PolicySupports,
    unknown: &[usize],
    sp: usize,
    samples: usize,
    joint: &mut [usize],
    col: &mut [f64],
    rng: &mut R,
) {
    let probs: Vec<(Vec<usize>, Vec<f64>)> = unknown
        .iter()
        .map(|&l| supports.support(l, sp).iter().copied().unzip())
        .collect();
    let mut draws: Vec<Vec<usize>> = (0..samples.max(1))
        .map(|_| {
            probs
                .iter()
                .map(|(acts, ps)| acts[sample_categorical(ps, rng)])
                .collect()
        })
        .collect();
    draws.sort_unstable();
    let mut i = 0;
    while i < draws.len() {
        let mut j = i + 1;
        while j < draws.len() && draws[j] == draws[i] {
            j += 1;
        }
        for (&l, &a) in unknown.iter().zip(&draws[i]) {
            joint[l] = a;
        }
        let w = (j - i) as f64;
        for (c, &t) in col.iter_mut().zip(kernel.column(sp, joint).iter()) {
            *c += w * t;
        }
        i = j;
    }
}

/// η_k(s) = Σ_{s′} 𝕋ᵏ_π(s | s′) μ_k(s′).
pub fn dhs_evolve(mu: &Belief, local: &LocalTransitionMatrix) -> Result<Belief, FilterError> {
    check_len("belief vs local kernel", mu.len(), local.num_states)?;
    let mut eta = vec![0.0; mu.len()];
    for (sp, &m) in mu.as_slice().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (e, &t) in eta.iter_mut().zip(local.column(sp)) {
            *e += t * m;
        }
    }
    renormalize(eta)
}
