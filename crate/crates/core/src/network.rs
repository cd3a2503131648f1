//! Combination matrices over the communication graph and their spectral
//! diagnostics.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::Cell;

/// Tolerance on C𝟙 = 𝟙 and C = Cᵀ.
pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-12;
pub const DEFAULT_SINKHORN_ITERS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("matrix must be {k}x{k} with {expected} entries, got {got}")]
    Shape { k: usize, expected: usize, got: usize },
    #[error("need at least one agent")]
    Empty,
    #[error("agent positions must be distinct (agents {0} and {1} share a cell)")]
    DuplicatePosition(usize, usize),
    #[error("graph is disconnected at distance threshold {threshold}; use a larger threshold")]
    Disconnected { threshold: f64 },
    #[error("balancing input invalid: {0}")]
    BalanceInput(String),
    #[error("balancing did not converge in {iterations} iterations (row error {error:e})")]
    NonConvergence { iterations: usize, error: f64 },
}

/// K×K weights; entry `(ℓ, k)` scales what agent k receives from agent ℓ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CombinationDoc", into = "CombinationDoc")]
pub struct CombinationMatrix {
    k: usize,
    weights: Vec<f64>,
}

/// JSON form: dense row-major weights plus K.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationDoc {
    pub k: usize,
    pub weights: Vec<f64>,
}

impl TryFrom<CombinationDoc> for CombinationMatrix {
    type Error = NetworkError;
    fn try_from(d: CombinationDoc) -> Result<Self, NetworkError> {
        CombinationMatrix::from_dense(d.k, d.weights)
    }
}

impl From<CombinationMatrix> for CombinationDoc {
    fn from(c: CombinationMatrix) -> Self {
        CombinationDoc {
            k: c.k,
            weights: c.weights,
        }
    }
}

impl CombinationMatrix {
    /// Wrap a row-major K×K matrix. Only the shape is checked here; see
    /// [`validate_combination`].
    pub fn from_dense(k: usize, weights: Vec<f64>) -> Result<Self, NetworkError> {
        if k == 0 {
            return Err(NetworkError::Empty);
        }
        if weights.len() != k * k {
            return Err(NetworkError::Shape {
                k,
                expected: k * k,
                got: weights.len(),
            });
        }
        Ok(Self { k, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NetworkError> {
        Self::from_dense(rows.len(), rows.iter().flatten().copied().collect())
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.weights[l * self.k + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Agents ℓ with c_{ℓk} > 0 (k itself included when it keeps a self-loop).
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        (0..self.k).filter(|&l| self.get(l, k) > 0.0).collect()
    }

    /// Column k restricted to the neighbours: (ℓ, c_{ℓk}).
    pub fn incoming(&self, k: usize) -> Vec<(usize, f64)> {
        (0..self.k)
            .map(|l| (l, self.get(l, k)))
            .filter(|(_, c)| *c > 0.0)
            .collect()
    }

    /// Cumulative hop neighbourhoods of `k`: entry n-1 holds every agent
    /// within n hops (k included), up to the whole connected component.
    pub fn hop_sets(&self, k: usize) -> Vec<Vec<usize>> {
        let mut dist = vec![usize::MAX; self.k];
        dist[k] = 0;
        let mut queue = VecDeque::from([k]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.k {
                if v != u && self.get(u, v) > 0.0 && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let max_hop = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0);
        (1..=max_hop.max(1))
            .map(|n| (0..self.k).filter(|&v| dist[v] <= n).collect())
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.hop_sets(0).last().map_or(false, |s| s.len() == self.k)
    }

    /// C^power via repeated multiplication.
    pub fn power(&self, power: u32) -> DMatrix<f64> {
        let c = self.to_matrix();
        let mut out = DMatrix::identity(self.k, self.k);
        for _ in 0..power {
            out = &out * &c;
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k, self.k, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkDiagnostics {
    pub lambda2: f64,
    pub d_min: usize,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkIssue {
    NegativeWeight { l: usize, k: usize, value: f64 },
    Asymmetric { l: usize, k: usize, diff: f64 },
    RowSum { k: usize, sum: f64 },
    Disconnected,
    NoSelfLoop,
}

/// Check the doubly-stochastic, symmetric and primitive conditions.
pub fn validate_combination(c: &CombinationMatrix) -> Result<NetworkDiagnostics, Vec<NetworkIssue>> {
    let mut issues = Vec::new();
    let k = c.size();
    for l in 0..k {
        for j in 0..k {
            let v = c.get(l, j);
            if !(v >= 0.0) || !v.is_finite() {
                issues.push(NetworkIssue::NegativeWeight { l, k: j, value: v });
            }
            if j > l {
                let diff = (v - c.get(j, l)).abs();
                if !(diff <= DOUBLY_STOCHASTIC_TOL) {
                    issues.push(NetworkIssue::Asymmetric { l, k: j, diff });
                }
            }
        }
        let sum: f64 = (0..k).map(|j| c.get(l, j)).sum();
        if !((sum - 1.0).abs() <= DOUBLY_STOCHASTIC_TOL) {
            issues.push(NetworkIssue::RowSum { k: l, sum });
        }
    }
    let connected = c.is_connected();
    if !connected {
        issues.push(NetworkIssue::Disconnected);
    }
    if !(0..k).any(|j| c.get(j, j) > 0.0) {
        issues.push(NetworkIssue::NoSelfLoop);
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(NetworkDiagnostics {
        lambda2: mixing_rate(c),
        d_min: min_degree(c),
        connected,
    })
}

/// c_{ℓk} = 1/K for every pair.
pub fn build_uniform(k: usize) -> Result<CombinationMatrix, NetworkError> {
    CombinationMatrix::from_dense(k, vec![1.0 / k as f64; k * k])
}

/// λ₂ = ‖C − (1/K)𝟙𝟙ᵀ‖₂, the second largest eigenvalue modulus of a
/// symmetric doubly-stochastic C.
pub fn mixing_rate(c: &CombinationMatrix) -> f64 {
    let k = c.size();
    let centered = c.to_matrix().map(|v| v - 1.0 / k as f64);
    SymmetricEigen::new(centered)
        .eigenvalues
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Smallest neighbourhood size, self included.
pub fn min_degree(c: &CombinationMatrix) -> usize {
    (0..c.size())
        .map(|k| c.neighbors(k).len())
        .min()
        .unwrap_or(0)
}

/// Symmetric Sinkhorn–Knopp scaling: find D so that D·A·D is doubly
/// stochastic. Symmetry and the zero pattern are preserved.
pub fn sinkhorn_balance(raw: &[Vec<f64>], max_iter: usize) -> Result<CombinationMatrix, NetworkError> {
    let k = raw.len();
    if k == 0 {
        return Err(NetworkError::Empty);
    }
    if raw.iter().any(|r| r.len() != k) {
        return Err(NetworkError::BalanceInput("matrix must be square".into()));
    }
    for i in 0..k {
        if !(raw[i][i] > 0.0) {
            return Err(NetworkError::BalanceInput(format!("diagonal entry {i} not positive")));
        }
        for j in 0..k {
            if !(raw[i][j] >= 0.0) || !raw[i][j].is_finite() {
                return Err(NetworkError::BalanceInput(format!("entry ({i},{j}) invalid")));
            }
            if raw[i][j] != raw[j][i] {
                return Err(NetworkError::BalanceInput(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    let pattern = CombinationMatrix::from_rows(raw)?;
    if !pattern.is_connected() {
        return Err(NetworkError::BalanceInput("matrix is reducible".into()));
    }

    let mut d = vec![1.0; k];
    let row_sums = |d: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| d[i] * (0..k).map(|j| raw[i][j] * d[j]).sum::<f64>())
            .collect()
    };
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let r = row_sums(&d);
        err = r.iter().fold(0.0, |m: f64, v| m.max((v - 1.0).abs()));
        if err <= 1e-14 {
            break;
        }
        for (di, ri) in d.iter_mut().zip(&r) {
            *di /= ri.sqrt();
        }
        iterations += 1;
    }

    let mut w = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let v = d[i] * raw[i][j] * d[j];
            w[i * k + j] = v;
            w[j * k + i] = v;
        }
    }
    // Put the remaining round-off on the diagonal; the off-diagonal part is
    // already exactly symmetric.
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| w[i * k + j]).sum();
        w[i * k + i] = 1.0 - off;
        if !(w[i * k + i] > 0.0) {
            return Err(NetworkError::NonConvergence { iterations, error: err });
        }
    }
    let c = CombinationMatrix::from_dense(k, w)?;
    let final_err = (0..k)
        .map(|i| ((0..k).map(|j| c.get(i, j)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    if err > 1e-12 || final_err > DOUBLY_STOCHASTIC_TOL {
        return Err(NetworkError::NonConvergence {
            iterations,
            error: err.max(final_err),
        });
    }
    Ok(c)
}

/// Smallest ℓ₁ cutoff under which the distance graph is connected.
pub fn connecting_threshold(positions: &[Cell]) -> f64 {
    let mut dists: Vec<usize> = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            dists.push(positions[i].l1(positions[j]));
        }
    }
    dists.sort_unstable();
    dists.dedup();
    for &d in &dists {
        if distance_graph_connected(positions, d as f64) {
            return d as f64;
        }
    }
    dists.last().copied().unwrap_or(0) as f64
}

fn distance_graph_connected(positions: &[Cell], threshold: f64) -> bool {
    let n = positions.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if !seen[v] && positions[u].l1(positions[v]) as f64 <= threshold {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Weights ∝ 1/ℓ₁-distance for pairs within `threshold` (all pairs when
/// `None` is replaced by the connecting threshold), self-loops equal to the
/// largest incident weight, then Sinkhorn-balanced.
pub fn build_from_positions(
    positions: &[Cell],
    threshold: Option<f64>,
) -> Result<(CombinationMatrix, f64), NetworkError> {
    let k = positions.len();
    if k == 0 {
        return Err(NetworkError::Empty);
    }
    for i in 0..k {
        for j in i + 1..k {
            if positions[i] == positions[j] {
                return Err(NetworkError::DuplicatePosition(i, j));
            }
        }
    }
    let threshold = threshold.unwrap_or_else(|| connecting_threshold(positions));
    if !distance_graph_connected(positions, threshold) {
        return Err(NetworkError::Disconnected { threshold });
    }
    let mut raw = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let d = positions[i].l1(positions[j]);
            if i != j && d as f64 <= threshold {
                raw[i][j] = 1.0 / d as f64;
            }
        }
    }
    for i in 0..k {
        let loop_w = raw[i].iter().copied().fold(0.0, f64::max);
        raw[i][i] = if loop_w > 0.0 { loop_w } else { 1.0 };
    }
    Ok((sinkhorn_balance(&raw, DEFAULT_SINKHORN_ITERS)?, threshold))
}
