//! Dec-POMDP data model: states, per-agent actions and observations, the
//! shared transition law, local rewards and the fixed policies under
//! evaluation.

mod belief;
mod kernel;
mod policy;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use belief::{one_hot_belief, Belief, SIMPLEX_TOL};
pub use kernel::{
    sample_next_state, sample_observation, DenseKernel, JointActionCodec, LikelihoodModel,
    RewardModel, TransitionKernel,
};
pub use policy::Policy;

/// Tolerance for row sums of stochastic tables.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid model document: {0}")]
    Document(String),
}

/// Everything one agent brings to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub num_actions: usize,
    pub likelihood: LikelihoodModel,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecPomdpModel {
    num_states: usize,
    agents: Vec<AgentModel>,
    transition: TransitionKernel,
    rewards: RewardModel,
    gamma: f64,
    r_max: f64,
}

impl DecPomdpModel {
    /// Assemble a model, checking only that the pieces fit together.
    /// Numerical invariants are reported by [`validate_model`].
    pub fn new(
        num_states: usize,
        agents: Vec<AgentModel>,
        transition: TransitionKernel,
        rewards: RewardModel,
        gamma: f64,
        r_max: f64,
    ) -> Result<Self, ModelError> {
        if num_states == 0 {
            return Err(ModelError::Shape("model needs at least one state".into()));
        }
        if agents.is_empty() {
            return Err(ModelError::Shape("model needs at least one agent".into()));
        }
        if transition.num_states() != num_states {
            return Err(ModelError::Shape(format!(
                "transition kernel has {} states, model has {num_states}",
                transition.num_states()
            )));
        }
        if transition.num_agents() != agents.len() {
            return Err(ModelError::Shape(format!(
                "transition kernel expects {} agents, model has {}",
                transition.num_agents(),
                agents.len()
            )));
        }
        for (k, a) in agents.iter().enumerate() {
            if a.num_actions == 0 {
                return Err(ModelError::Shape(format!("agent {k} has no actions")));
            }
            if a.likelihood.num_states() != num_states {
                return Err(ModelError::Shape(format!(
                    "agent {k} likelihood covers {} states",
                    a.likelihood.num_states()
                )));
            }
            a.policy.check_shape(num_states)?;
            if a.policy.num_actions() != a.num_actions {
                return Err(ModelError::Shape(format!(
                    "agent {k} policy has {} actions, agent has {}",
                    a.policy.num_actions(),
                    a.num_actions
                )));
            }
        }
        if let TransitionKernel::Dense(d) = &transition {
            let radices: Vec<usize> = agents.iter().map(|a| a.num_actions).collect();
            if d.codec().radices() != radices.as_slice() {
                return Err(ModelError::Shape(
                    "transition codec disagrees with agent action counts".into(),
                ));
            }
        }
        if let RewardModel::Dense {
            num_states: rs,
            codec,
            tables,
        } = &rewards
        {
            let j = codec.size().unwrap_or(0);
            if *rs != num_states
                || tables.len() != agents.len()
                || tables.iter().any(|t| t.len() != num_states * j * num_states)
            {
                return Err(ModelError::Shape("reward tables must be K x [S][J][S]".into()));
            }
        }
        Ok(Self {
            num_states,
            agents,
            transition,
            rewards,
            gamma,
            r_max,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentModel] {
        &self.agents
    }

    pub fn agent(&self, k: usize) -> &AgentModel {
        &self.agents[k]
    }

    pub fn transition(&self) -> &TransitionKernel {
        &self.transition
    }

    pub fn rewards(&self) -> &RewardModel {
        &self.rewards
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn likelihoods(&self) -> Vec<&LikelihoodModel> {
        self.agents.iter().map(|a| &a.likelihood).collect()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.num_actions).collect()
    }

    pub fn reward(&self, k: usize, s: usize, joint: &[usize], s_next: usize) -> f64 {
        self.rewards.reward(k, s, joint, s_next)
    }

    /// Parse the JSON model document (dense models only).
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        doc.into_model()
    }

    /// Serialize a dense model to its JSON document.
    pub fn to_doc(&self) -> Result<ModelDoc, ModelError> {
        let (TransitionKernel::Dense(kernel), RewardModel::Dense { tables, .. }) =
            (&self.transition, &self.rewards)
        else {
            return Err(ModelError::Document(
                "only dense models have a JSON document form".into(),
            ));
        };
        let s = self.num_states;
        let j = kernel.codec().size().unwrap_or(0);
        Ok(ModelDoc {
            num_states: s,
            gamma: self.gamma,
            r_max: self.r_max,
            agents: self
                .agents
                .iter()
                .map(|a| AgentDoc {
                    num_actions: a.num_actions,
                    likelihood: a.likelihood.rows(),
                    policy: a.policy.clone(),
                })
                .collect(),
            transition: kernel.to_nested(),
            rewards: tables
                .iter()
                .map(|t| {
                    t.chunks(j * s)
                        .map(|b| b.chunks(s).map(<[f64]>::to_vec).collect())
                        .collect()
                })
                .collect(),
        })
    }
}

/// JSON form of a dense model.
///
/// `transition[j][s_prev][s]` and `rewards[k][s][j][s_next]`, where `j` is the
/// mixed-radix joint-action index with agent 0 as the least-significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub num_states: usize,
    pub gamma: f64,
    pub r_max: f64,
    pub agents: Vec<AgentDoc>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub num_actions: usize,
    /// `likelihood[s][ξ]`
    pub likelihood: Vec<Vec<f64>>,
    pub policy: Policy,
}

impl ModelDoc {
    pub fn into_model(self) -> Result<DecPomdpModel, ModelError> {
        let codec = JointActionCodec::new(self.agents.iter().map(|a| a.num_actions).collect())?;
        let j = codec
            .size()
            .ok_or_else(|| ModelError::Shape("joint action space overflows".into()))?;
        let kernel = DenseKernel::from_nested(self.num_states, codec.clone(), &self.transition)?;
        let mut tables = Vec::with_capacity(self.rewards.len());
        for per_agent in &self.rewards {
            let mut t = Vec::with_capacity(self.num_states * j * self.num_states);
            if per_agent.len() != self.num_states {
                return Err(ModelError::Shape("reward table outer dim must be S".into()));
            }
            for block in per_agent {
                if block.len() != j || block.iter().any(|r| r.len() != self.num_states) {
                    return Err(ModelError::Shape("reward table must be [S][J][S]".into()));
                }
                block.iter().for_each(|r| t.extend_from_slice(r));
            }
            tables.push(t);
        }
        let agents = self
            .agents
            .into_iter()
            .map(|a| {
                Ok(AgentModel {
                    num_actions: a.num_actions,
                    likelihood: LikelihoodModel::from_rows(&a.likelihood)?,
                    policy: a.policy,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        DecPomdpModel::new(
            self.num_states,
            agents,
            TransitionKernel::Dense(kernel),
            RewardModel::Dense {
                num_states: self.num_states,
                codec,
                tables,
            },
            self.gamma,
            self.r_max,
        )
    }
}

/// One failed invariant found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Discount {
        gamma: f64,
    },
    TransitionRowSum {
        joint: Vec<usize>,
        s_prev: usize,
        sum: f64,
    },
    NegativeTransition {
        joint: Vec<usize>,
        s_prev: usize,
        s: usize,
        value: f64,
    },
    LikelihoodRowSum {
        agent: usize,
        state: usize,
        sum: f64,
    },
    /// A zero (or negative) entry in an observation column that other states
    /// emit with positive probability: |log L| is unbounded there.
    UnboundedLogLikelihood {
        agent: usize,
        observation: usize,
        state: usize,
        value: f64,
    },
    PolicyRow {
        agent: usize,
        state: usize,
        sum: f64,
    },
    RewardOutOfRange {
        location: String,
        value: f64,
        r_max: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Discount { gamma } => write!(f, "discount {gamma} outside [0, 1)"),
            Violation::TransitionRowSum { joint, s_prev, sum } => {
                write!(f, "T(.|s'={s_prev}, a={joint:?}) sums to {sum}")
            }
            Violation::NegativeTransition {
                joint,
                s_prev,
                s,
                value,
            } => write!(f, "T(s={s}|s'={s_prev}, a={joint:?}) = {value} < 0"),
            Violation::LikelihoodRowSum { agent, state, sum } => {
                write!(f, "agent {agent}: L(.|s={state}) sums to {sum}")
            }
            Violation::UnboundedLogLikelihood {
                agent,
                observation,
                state,
                value,
            } => write!(
                f,
                "agent {agent}: L(xi={observation}|s={state}) = {value} on support; log-likelihood unbounded"
            ),
            Violation::PolicyRow { agent, state, sum } => {
                write!(f, "agent {agent}: policy row for state {state} sums to {sum}")
            }
            Violation::RewardOutOfRange {
                location,
                value,
                r_max,
            } => write!(f, "reward {value} at {location} outside [0, {r_max}]"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every numerical invariant of the model and list all failures.
pub fn validate_model(model: &DecPomdpModel) -> ValidationReport {
    let mut violations = Vec::new();
    if !(0.0..1.0).contains(&model.gamma) {
        violations.push(Violation::Discount { gamma: model.gamma });
    }

    let kernel = model.transition();
    for joint in kernel.action_classes() {
        for s_prev in 0..model.num_states {
            let col = kernel.column(s_prev, &joint);
            let sum: f64 = col.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > STOCHASTIC_TOL {
                violations.push(Violation::TransitionRowSum {
                    joint: joint.clone(),
                    s_prev,
                    sum,
                });
            }
            for (s, &v) in col.iter().enumerate() {
                if v < 0.0 {
                    violations.push(Violation::NegativeTransition {
                        joint: joint.clone(),
                        s_prev,
                        s,
                        value: v,
                    });
                }
            }
        }
    }

    for (k, agent) in model.agents.iter().enumerate() {
        let lik = &agent.likelihood;
        for s in 0..model.num_states {
            let sum: f64 = lik.row(s).iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > STOCHASTIC_TOL {
                violations.push(Violation::LikelihoodRowSum {
                    agent: k,
                    state: s,
                    sum,
                });
            }
        }
        for xi in 0..lik.num_observations() {
            let supported = (0..model.num_states).any(|s| lik.prob(xi, s) > 0.0);
            if !supported {
                continue;
            }
            for s in 0..model.num_states {
                let v = lik.prob(xi, s);
                if !(v > 0.0) {
                    violations.push(Violation::UnboundedLogLikelihood {
                        agent: k,
                        observation: xi,
                        state: s,
                        value: v,
                    });
                }
            }
        }
        if let Policy::BeliefMixture { table } = &agent.policy {
            for (s, row) in table.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    violations.push(Violation::PolicyRow {
                        agent: k,
                        state: s,
                        sum,
                    });
                }
            }
        }
    }

    for (location, value) in model.rewards.values() {
        if !(0.0..=model.r_max).contains(&value) {
            violations.push(Violation::RewardOutOfRange {
                location,
                value,
                r_max: model.r_max,
            });
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_doc() -> ModelDoc {
        ModelDoc {
            num_states: 2,
            gamma: 0.9,
            r_max: 1.0,
            agents: vec![AgentDoc {
                num_actions: 2,
                likelihood: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                policy: Policy::BeliefMixture {
                    table: vec![vec![0.5, 0.5], vec![0.1, 0.9]],
                },
            }],
            transition: vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            rewards: vec![vec![
                vec![vec![1.0, 0.0], vec![0.0, 0.5]],
                vec![vec![0.2, 0.2], vec![0.0, 1.0]],
            ]],
        }
    }

    #[test]
    fn valid_two_state_model() {
        let m = two_state_doc().into_model().unwrap();
        assert!(validate_model(&m).is_valid());
    }

    #[test]
    fn flags_row_sum_with_indices() {
        let mut doc = two_state_doc();
        doc.transition[1][0] = vec![0.5, 0.4];
        let r = validate_model(&doc.into_model().unwrap());
        assert_eq!(r.violations.len(), 1);
        match &r.violations[0] {
            Violation::TransitionRowSum { joint, s_prev, sum } => {
                assert_eq!(joint, &vec![1]);
                assert_eq!(*s_prev, 0);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            v => panic!("unexpected {v}"),
        }
    }

    #[test]
    fn flags_zero_likelihood_on_support() {
        let mut doc = two_state_doc();
        doc.agents[0].likelihood = vec![vec![1.0, 0.0], vec![0.3, 0.7]];
        let r = validate_model(&doc.into_model().unwrap());
        assert!(r.violations.iter().any(|v| matches!(
            v,
            Violation::UnboundedLogLikelihood {
                agent: 0,
                observation: 1,
                state: 0,
                ..
            }
        )));
    }

    #[test]
    fn unused_observation_is_not_on_support() {
        let mut doc = two_state_doc();
        doc.agents[0].likelihood = vec![vec![0.8, 0.2, 0.0], vec![0.3, 0.7, 0.0]];
        assert!(validate_model(&doc.into_model().unwrap()).is_valid());
    }

    #[test]
    fn flags_reward_and_discount() {
        let mut doc = two_state_doc();
        doc.rewards[0][1][1][0] = 1.5;
        doc.gamma = 1.0;
        let r = validate_model(&doc.into_model().unwrap());
        assert_eq!(r.violations.len(), 2);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::Discount { .. })));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RewardOutOfRange { value, .. } if *value == 1.5)));
    }

    #[test]
    fn shape_errors() {
        let mut doc = two_state_doc();
        doc.transition.pop();
        assert!(doc.into_model().is_err());
        let mut doc = two_state_doc();
        doc.agents[0].num_actions = 3;
        assert!(doc.into_model().is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = two_state_doc().into_model().unwrap();
        let text = serde_json::to_string(&m.to_doc().unwrap()).unwrap();
        assert_eq!(DecPomdpModel::from_json(&text).unwrap(), m);
    }
}
