#![allow(dead_code)]

use decpomdp::model::{AgentDoc, Belief, DecPomdpModel, ModelDoc, Policy};
use decpomdp::network::CombinationMatrix;
use rand::Rng;

fn positive_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    positive_dist(rng, n)
}

/// Dense model with strictly positive kernel and likelihoods.
pub fn random_doc<R: Rng>(
    rng: &mut R,
    num_states: usize,
    actions: &[usize],
    num_obs: usize,
    mixture: bool,
) -> ModelDoc {
    let joint: usize = actions.iter().product();
    let agents = actions
        .iter()
        .map(|&a| AgentDoc {
            num_actions: a,
            likelihood: (0..num_states).map(|_| positive_dist(rng, num_obs)).collect(),
            policy: if mixture {
                Policy::BeliefMixture {
                    table: (0..num_states).map(|_| positive_dist(rng, a)).collect(),
                }
            } else {
                Policy::MaxAPosteriori {
                    num_actions: a,
                    action_of_state: (0..num_states).map(|s| s % a).collect(),
                }
            },
        })
        .collect();
    let transition = (0..joint)
        .map(|_| (0..num_states).map(|_| positive_dist(rng, num_states)).collect())
        .collect();
    let rewards = actions
        .iter()
        .map(|_| {
            (0..num_states)
                .map(|_| {
                    (0..joint)
                        .map(|_| (0..num_states).map(|_| rng.random_range(0.0..1.0)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    ModelDoc {
        num_states,
        gamma: 0.9,
        r_max: 1.0,
        agents,
        transition,
        rewards,
    }
}

pub fn random_model<R: Rng>(
    rng: &mut R,
    num_states: usize,
    actions: &[usize],
    num_obs: usize,
    mixture: bool,
) -> DecPomdpModel {
    random_doc(rng, num_states, actions, num_obs, mixture)
        .into_model()
        .unwrap()
}

/// Metropolis weights on a path 0 - 1 - ... - (K-1).
pub fn path_network(k: usize) -> CombinationMatrix {
    let deg = |i: usize| -> usize { usize::from(i > 0) + usize::from(i + 1 < k) };
    let mut w = vec![vec![0.0; k]; k];
    for i in 0..k.saturating_sub(1) {
        let c = 1.0 / (1 + deg(i).max(deg(i + 1))) as f64;
        w[i][i + 1] = c;
        w[i + 1][i] = c;
    }
    for i in 0..k {
        let off: f64 = w[i].iter().sum();
        w[i][i] = 1.0 - off;
    }
    CombinationMatrix::from_rows(&w).unwrap()
}

/// Odometer over a mixed-radix space; calls `f` with every tuple.
pub fn for_each_tuple(radices: &[usize], mut f: impl FnMut(&[usize])) {
    let mut t = vec![0usize; radices.len()];
    loop {
        f(&t);
        let mut pos = 0;
        while pos < t.len() {
            t[pos] += 1;
            if t[pos] < radices[pos] {
                break;
            }
            t[pos] = 0;
            pos += 1;
        }
        if pos == t.len() {
            return;
        }
    }
}

/// Brute-force local transition model: sum the full kernel over every joint
/// action consistent with `known`, weighting the unknown agents' actions by
/// their policy at the previous state. Returns `[s′][s]`.
pub fn brute_local_transition(model: &DecPomdpModel, known: &[Option<usize>]) -> Vec<Vec<f64>> {
    let n = model.num_states();
    let counts = model.action_counts();
    (0..n)
        .map(|sp| {
            let mut col = vec![0.0; n];
            let pols: Vec<Vec<f64>> = model.agents().iter().map(|a| a.policy.at_state(sp)).collect();
            for_each_tuple(&counts, |joint| {
                if known.iter().zip(joint).any(|(k, a)| matches!(k, Some(x) if x != a)) {
                    return;
                }
                let weight: f64 = (0..joint.len())
                    .filter(|&l| known[l].is_none())
                    .map(|l| pols[l][joint[l]])
                    .product();
                if weight == 0.0 {
                    return;
                }
                let t = model.transition().column(sp, joint);
                for s in 0..n {
                    col[s] += weight * t[s];
                }
            });
            let total: f64 = col.iter().sum();
            col.iter().map(|v| v / total).collect()
        })
        .collect()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn belief(v: Vec<f64>) -> Belief {
    Belief::new(v).unwrap()
}

/// Posterior over the final state by summing over every state path, with a
/// uniform initial prior. `obs[t][k]`, `acts[t]` is the joint action taken
/// after observing at time t.
pub fn brute_posterior(model: &DecPomdpModel, obs: &[Vec<usize>], acts: &[Vec<usize>]) -> Vec<f64> {
    let n = model.num_states();
    let steps = obs.len();
    let mut post = vec![0.0; n];
    for_each_tuple(&vec![n; steps], |path| {
        let mut w = 1.0 / n as f64;
        for t in 0..steps {
            for (k, a) in model.agents().iter().enumerate() {
                w *= a.likelihood.prob(obs[t][k], path[t]);
            }
            if t + 1 < steps {
                w *= model.transition().column(path[t], &acts[t])[path[t + 1]];
            }
        }
        post[path[steps - 1]] += w;
    });
    let total: f64 = post.iter().sum();
    post.into_iter().map(|v| v / total).collect()
}
