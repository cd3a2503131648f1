use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::gridworld::{GridReward, GridTransition};
use crate::rng::sample_categorical;

/// Mixed-radix codec between joint-action tuples and flat indices.
///
/// Agent 0 is the least-significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointActionCodec {
    radices: Vec<usize>,
}

impl JointActionCodec {
    pub fn new(radices: Vec<usize>) -> Result<Self, ModelError> {
        if radices.is_empty() || radices.contains(&0) {
            return Err(ModelError::Shape("every agent needs at least one action".into()));
        }
        Ok(Self { radices })
    }

    pub fn num_agents(&self) -> usize {
        self.radices.len()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Number of joint actions, or `None` when it overflows `usize`.
    pub fn size(&self) -> Option<usize> {
        self.radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r))
    }

    pub fn check(&self, joint: &[usize]) -> Result<(), ModelError> {
        if joint.len() != self.radices.len() {
            return Err(ModelError::Shape(format!(
                "joint action has {} entries, expected {}",
                joint.len(),
                self.radices.len()
            )));
        }
        for (&a, &r) in joint.iter().zip(&self.radices) {
            if a >= r {
                return Err(ModelError::IndexOutOfRange {
                    what: "action",
                    index: a,
                    len: r,
                });
            }
        }
        Ok(())
    }

    pub fn encode(&self, joint: &[usize]) -> usize {
        joint
            .iter()
            .zip(&self.radices)
            .rev()
            .fold(0, |acc, (&a, &r)| acc * r + a)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        self.radices
            .iter()
            .map(|&r| {
                let a = index % r;
                index /= r;
                a
            })
            .collect()
    }
}

/// Dense 𝕋(s | s′, a) stored as `[joint][s′][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    num_states: usize,
    codec: JointActionCodec,
    table: Vec<f64>,
}

impl DenseKernel {
    pub fn new(
        num_states: usize,
        codec: JointActionCodec,
        table: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let joint = codec
            .size()
            .ok_or_else(|| ModelError::Shape("joint action space overflows".into()))?;
        if table.len() != joint * num_states * num_states {
            return Err(ModelError::Shape(format!(
                "dense kernel needs {} entries, got {}",
                joint * num_states * num_states,
                table.len()
            )));
        }
        Ok(Self {
            num_states,
            codec,
            table,
        })
    }

    /// Build from nested `[joint][s′][s]` rows.
    pub fn from_nested(
        num_states: usize,
        codec: JointActionCodec,
        nested: &[Vec<Vec<f64>>],
    ) -> Result<Self, ModelError> {
        let mut table = Vec::new();
        for block in nested {
            if block.len() != num_states || block.iter().any(|r| r.len() != num_states) {
                return Err(ModelError::Shape("transition block must be SxS".into()));
            }
            block.iter().for_each(|r| table.extend_from_slice(r));
        }
        Self::new(num_states, codec, table)
    }

    pub fn codec(&self) -> &JointActionCodec {
        &self.codec
    }

    pub fn column_by_index(&self, joint_index: usize, s_prev: usize) -> &[f64] {
        let s = self.num_states;
        let start = (joint_index * s + s_prev) * s;
        &self.table[start..start + s]
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let s = self.num_states;
        self.table
            .chunks(s * s)
            .map(|b| b.chunks(s).map(<[f64]>::to_vec).collect())
            .collect()
    }
}

/// The shared state-transition law.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKernel {
    Dense(DenseKernel),
    Grid(GridTransition),
}

impl TransitionKernel {
    pub fn num_states(&self) -> usize {
        match self {
            TransitionKernel::Dense(d) => d.num_states,
            TransitionKernel::Grid(g) => g.num_states(),
        }
    }

    pub fn num_agents(&self) -> usize {
        match self {
            TransitionKernel::Dense(d) => d.codec.num_agents(),
            TransitionKernel::Grid(g) => g.num_agents(),
        }
    }

    /// 𝕋(· | s′, a) as a distribution over next states.
    pub fn column(&self, s_prev: usize, joint: &[usize]) -> Cow<'_, [f64]> {
        match self {
            TransitionKernel::Dense(d) => {
                Cow::Borrowed(d.column_by_index(d.codec.encode(joint), s_prev))
            }
            TransitionKernel::Grid(g) => g.column(s_prev, joint),
        }
    }

    /// One joint action per distinct transition matrix the kernel can produce.
    ///
    /// Dense kernels enumerate every joint action; the grid kernel depends on
    /// the joint action only through the rounded mean hit cell.
    pub fn action_classes(&self) -> Vec<Vec<usize>> {
        match self {
            TransitionKernel::Dense(d) => {
                let n = d.codec.size().unwrap_or(0);
                (0..n).map(|j| d.codec.decode(j)).collect()
            }
            TransitionKernel::Grid(g) => g.action_classes(),
        }
    }

    /// Columns of the S×S matrix for a fixed joint action.
    pub fn matrix(&self, joint: &[usize]) -> Vec<Vec<f64>> {
        (0..self.num_states())
            .map(|sp| self.column(sp, joint).to_vec())
            .collect()
    }
}

/// Per-agent observation model L_k(ξ | s).
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    num_states: usize,
    num_obs: usize,
    /// `[s][ξ]`
    table: Vec<f64>,
    /// `[ξ][s]`, natural log
    log_by_obs: Vec<f64>,
}

impl LikelihoodModel {
    /// `rows[s][ξ]` = L(ξ | s).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let num_states = rows.len();
        let num_obs = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_obs == 0 || rows.iter().any(|r| r.len() != num_obs) {
            return Err(ModelError::Shape("likelihood table must be Sx(O>0)".into()));
        }
        let table: Vec<f64> = rows.iter().flatten().copied().collect();
        let mut log_by_obs = vec![0.0; num_obs * num_states];
        for s in 0..num_states {
            for xi in 0..num_obs {
                log_by_obs[xi * num_states + s] = table[s * num_obs + xi].ln();
            }
        }
        Ok(Self {
            num_states,
            num_obs,
            table,
            log_by_obs,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_observations(&self) -> usize {
        self.num_obs
    }

    pub fn prob(&self, xi: usize, s: usize) -> f64 {
        self.table[s * self.num_obs + xi]
    }

    /// L(· | s) as a distribution over observations.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.num_obs..(s + 1) * self.num_obs]
    }

    /// log L(ξ | s) for every state s.
    pub fn log_column(&self, xi: usize) -> &[f64] {
        &self.log_by_obs[xi * self.num_states..(xi + 1) * self.num_states]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states).map(|s| self.row(s).to_vec()).collect()
    }
}

/// Per-agent reward r_k(s, a, s_next).
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    /// One `[s][joint][s_next]` table per agent.
    Dense {
        num_states: usize,
        codec: JointActionCodec,
        tables: Vec<Vec<f64>>,
    },
    Grid(GridReward),
}

impl RewardModel {
    pub fn reward(&self, k: usize, s: usize, joint: &[usize], s_next: usize) -> f64 {
        match self {
            RewardModel::Dense {
                num_states,
                codec,
                tables,
            } => {
                let j = codec.encode(joint);
                let n = codec.size().unwrap_or(0);
                tables[k][(s * n + j) * num_states + s_next]
            }
            RewardModel::Grid(g) => g.reward(k, s, joint, s_next),
        }
    }

    /// Every reward value the model can emit, with a location label.
    pub(crate) fn values(&self) -> Vec<(String, f64)> {
        match self {
            RewardModel::Dense { tables, .. } => tables
                .iter()
                .enumerate()
                .flat_map(|(k, t)| {
                    t.iter()
                        .enumerate()
                        .map(move |(i, &v)| (format!("agent {k} entry {i}"), v))
                })
                .collect(),
            RewardModel::Grid(g) => vec![
                ("exact hit".into(), g.exact),
                ("near hit".into(), g.near),
                ("miss".into(), 0.0),
            ],
        }
    }
}

/// Draw s ∼ 𝕋(· | s_prev, a).
pub fn sample_next_state<R: Rng + ?Sized>(
    kernel: &TransitionKernel,
    s_prev: usize,
    joint: &[usize],
    rng: &mut R,
) -> Result<usize, ModelError> {
    let n = kernel.num_states();
    if s_prev >= n {
        return Err(ModelError::IndexOutOfRange {
            what: "state",
            index: s_prev,
            len: n,
        });
    }
    match kernel {
        TransitionKernel::Dense(d) => d.codec.check(joint)?,
        TransitionKernel::Grid(g) => g.check_joint(joint)?,
    }
    Ok(sample_categorical(&kernel.column(s_prev, joint), rng))
}

/// Draw ξ ∼ L_k(· | s).
pub fn sample_observation<R: Rng + ?Sized>(
    likelihoods: &[LikelihoodModel],
    k: usize,
    s: usize,
    rng: &mut R,
) -> Result<usize, ModelError> {
    let lik = likelihoods.get(k).ok_or(ModelError::IndexOutOfRange {
        what: "agent",
        index: k,
        len: likelihoods.len(),
    })?;
    if s >= lik.num_states {
        return Err(ModelError::IndexOutOfRange {
            what: "state",
            index: s,
            len: lik.num_states,
        });
    }
    Ok(sample_categorical(lik.row(s), rng))
}
