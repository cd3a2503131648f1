use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Belief, ModelError};
use crate::rng::sample_categorical;

/// A deterministic map from beliefs to action distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Act on the most probable state: the action is `action_of_state[argmax μ]`.
    MaxAPosteriori {
        num_actions: usize,
        action_of_state: Vec<usize>,
    },
    /// π(a|μ) = Σ_s μ(s)·table[s][a]; each row of `table` is a distribution.
    BeliefMixture { table: Vec<Vec<f64>> },
}

impl Policy {
    /// MAP policy where actions and states share an index space.
    pub fn map_identity(num_states: usize) -> Self {
        Policy::MaxAPosteriori {
            num_actions: num_states,
            action_of_state: (0..num_states).collect(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::MaxAPosteriori { num_actions, .. } => *num_actions,
            Policy::BeliefMixture { table } => table.first().map_or(0, Vec::len),
        }
    }

    pub(crate) fn check_shape(&self, num_states: usize) -> Result<(), ModelError> {
        match self {
            Policy::MaxAPosteriori {
                num_actions,
                action_of_state,
            } => {
                if action_of_state.len() != num_states {
                    return Err(ModelError::Shape(format!(
                        "MAP policy maps {} states, model has {num_states}",
                        action_of_state.len()
                    )));
                }
                if let Some(&a) = action_of_state.iter().find(|&&a| a >= *num_actions) {
                    return Err(ModelError::IndexOutOfRange {
                        what: "action",
                        index: a,
                        len: *num_actions,
                    });
                }
            }
            Policy::BeliefMixture { table } => {
                let a = self.num_actions();
                if table.len() != num_states || a == 0 || table.iter().any(|r| r.len() != a) {
                    return Err(ModelError::Shape(format!(
                        "mixture policy table must be {num_states}x(A>0)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Action distribution at `belief`.
    pub fn distribution(&self, belief: &Belief) -> Vec<f64> {
        match self {
            Policy::MaxAPosteriori {
                num_actions,
                action_of_state,
            } => {
                let mut d = vec![0.0; *num_actions];
                d[action_of_state[belief.argmax()]] = 1.0;
                d
            }
            Policy::BeliefMixture { table } => {
                let mut d = vec![0.0; self.num_actions()];
                for (row, &m) in table.iter().zip(belief.as_slice()) {
                    if m == 0.0 {
                        continue;
                    }
                    for (o, &p) in d.iter_mut().zip(row) {
                        *o += m * p;
                    }
                }
                let total: f64 = d.iter().sum();
                d.iter_mut().for_each(|v| *v /= total);
                d
            }
        }
    }

    /// Action distribution at the one-hot belief on `state` (the π(a|s) shorthand).
    pub fn at_state(&self, state: usize) -> Vec<f64> {
        match self {
            Policy::MaxAPosteriori {
                num_actions,
                action_of_state,
            } => {
                let mut d = vec![0.0; *num_actions];
                d[action_of_state[state]] = 1.0;
                d
            }
            Policy::BeliefMixture { table } => {
                let total: f64 = table[state].iter().sum();
                table[state].iter().map(|p| p / total).collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, belief: &Belief, rng: &mut R) -> usize {
        match self {
            Policy::MaxAPosteriori {
                action_of_state, ..
            } => action_of_state[belief.argmax()],
            Policy::BeliefMixture { .. } => sample_categorical(&self.distribution(belief), rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::one_hot_belief;

    #[test]
    fn map_on_one_hot_is_that_state() {
        let p = Policy::map_identity(25);
        let b = one_hot_belief(17, 25).unwrap();
        let d = p.distribution(&b);
        assert_eq!(d[17], 1.0);
        assert_eq!(d.iter().sum::<f64>(), 1.0);
        assert_eq!(p.at_state(17), d);
    }

    #[test]
    fn mixture_sums_to_one_and_is_deterministic() {
        let p = Policy::BeliefMixture {
            table: vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.5, 0.5]],
        };
        let b = Belief::new(vec![0.2, 0.5, 0.3]).unwrap();
        let d = p.distribution(&b);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d[0] - (0.18 + 0.15 + 0.15)).abs() < 1e-15);
        assert_eq!(d, p.distribution(&b));
        for s in 0..3 {
            let one = one_hot_belief(s, 3).unwrap();
            assert_eq!(p.distribution(&one), p.at_state(s));
        }
    }
}
