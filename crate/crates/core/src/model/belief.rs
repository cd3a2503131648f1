use serde::{Deserialize, Serialize};

use super::ModelError;

/// Simplex tolerance applied after every normalization.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// A probability vector over the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Wrap an already-normalized vector, checking the simplex invariant.
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        check_simplex(&values)?;
        Ok(Self(values))
    }

    /// Normalize a nonnegative vector with positive mass.
    pub fn from_weights(mut values: Vec<f64>) -> Result<Self, ModelError> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidBelief(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(ModelError::InvalidBelief("weights have zero mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self(values))
    }

    pub fn uniform(num_states: usize) -> Self {
        assert!(num_states > 0, "belief over an empty state space");
        Self(vec![1.0 / num_states as f64; num_states])
    }

    pub fn one_hot(state: usize, num_states: usize) -> Result<Self, ModelError> {
        if state >= num_states {
            return Err(ModelError::IndexOutOfRange {
                what: "state",
                index: state,
                len: num_states,
            });
        }
        let mut v = vec![0.0; num_states];
        v[state] = 1.0;
        Ok(Self(v))
    }

    pub(crate) fn from_normalized_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&values).is_ok(), "{values:?}");
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// ℓ∞ distance to another belief of the same length.
    pub fn max_abs_diff(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when every entry is finite, nonnegative and the total is 1.
    pub fn is_valid(&self) -> bool {
        check_simplex(&self.0).is_ok()
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = ModelError;
    fn try_from(v: Vec<f64>) -> Result<Self, ModelError> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

fn check_simplex(values: &[f64]) -> Result<(), ModelError> {
    if values.is_empty() {
        return Err(ModelError::InvalidBelief("empty belief".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(ModelError::InvalidBelief(format!("entry {v} outside [0, inf)")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(ModelError::InvalidBelief(format!("entries sum to {total}")));
    }
    Ok(())
}

/// The belief that puts all mass on `state`.
pub fn one_hot_belief(state: usize, num_states: usize) -> Result<Belief, ModelError> {
    Belief::one_hot(state, num_states)
}
