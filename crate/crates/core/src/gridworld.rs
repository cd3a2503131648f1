//! Multi-sensor target tracking on a grid.
//!
//! A target moves between the cells of a `width × height` grid. Each agent
//! sits on a fixed cell, receives a noisy report of the target cell, and
//! "hits" one cell per step. The target prefers cells near its current
//! position and away from the average hit location. Scores from two lookup
//! tables are normalized into the transition kernel and the likelihoods.
//!
//! Cells are indexed row-major: `index = y * width + x`.

use std::borrow::Cow;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::model::{
    AgentModel, Belief, DecPomdpModel, LikelihoodModel, ModelError, Policy, RewardModel,
    TransitionKernel,
};
use crate::analysis::DEFAULT_SBE_WINDOW;
use crate::evaluation::FeatureMap;
use crate::exec::Exec;
use crate::filtering::{Marginalization, DEFAULT_MC_SAMPLES};
use crate::harness::{
    Algorithm, ExperimentConfig, LearnerSpec, ModelSource, NetworkRecipe, TheoryOverrides,
};
use crate::rng::{Phase, Streams};

/// Above this many table entries the transition columns are computed on demand.
const PRECOMPUTE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn l1(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn num_cells(self) -> usize {
        self.width * self.height
    }

    pub fn cell(self, index: usize) -> Cell {
        Cell {
            x: index % self.width,
            y: index / self.width,
        }
    }

    pub fn index(self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn dist(self, a: usize, b: usize) -> usize {
        self.cell(a).l1(self.cell(b))
    }

    /// Per-axis arithmetic mean of the hit cells, rounded half-up.
    pub fn mean_cell(self, hits: &[usize]) -> usize {
        let n = hits.len() as f64;
        let (sx, sy) = hits.iter().fold((0usize, 0usize), |(sx, sy), &h| {
            let c = self.cell(h);
            (sx + c.x, sy + c.y)
        });
        let round = |v: f64| (v + 0.5).floor() as usize;
        self.index(Cell {
            x: round(sx as f64 / n).min(self.width - 1),
            y: round(sy as f64 / n).min(self.height - 1),
        })
    }
}

/// Transition scores keyed on two distances of the candidate next cell:
/// to the target's current cell (`<= target_radius` is "near") and to the
/// mean hit cell (`< hits_radius` is "near").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionScores {
    pub near_target_near_hits: f64,
    pub far_target_near_hits: f64,
    pub near_target_far_hits: f64,
    pub far_target_far_hits: f64,
    pub target_radius: usize,
    pub hits_radius: usize,
}

impl Default for TransitionScores {
    fn default() -> Self {
        Self {
            near_target_near_hits: 10.0,
            far_target_near_hits: 5.0,
            near_target_far_hits: 100.0,
            far_target_far_hits: 50.0,
            target_radius: 4,
            hits_radius: 4,
        }
    }
}

impl TransitionScores {
    pub fn score(&self, dist_to_target: usize, dist_to_hits: usize) -> f64 {
        let near_target = dist_to_target <= self.target_radius;
        match (near_target, dist_to_hits < self.hits_radius) {
            (true, true) => self.near_target_near_hits,
            (false, true) => self.far_target_near_hits,
            (true, false) => self.near_target_far_hits,
            (false, false) => self.far_target_far_hits,
        }
    }
}

/// Likelihood scores: `table[agent band][report band]`.
///
/// Agent band (agent ↔ target distance d): 0 if d < 3, 1 if 3 <= d <= 6,
/// 2 if d > 6. Report band (reported cell ↔ target distance e): 0 if e = 0,
/// 1 if e < 3, 2 if e < 5, 3 if e < 7, 4 if e < 9, 5 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LikelihoodScores {
    pub table: [[f64; 6]; 3],
}

impl Default for LikelihoodScores {
    fn default() -> Self {
        Self {
            table: [
                [400.0, 200.0, 30.0, 1.0, 1.0, 1.0],
                [200.0, 180.0, 100.0, 1.0, 1.0, 1.0],
                [25.0, 25.0, 25.0, 25.0, 4.0, 1.0],
            ],
        }
    }
}

impl LikelihoodScores {
    pub fn agent_band(d: usize) -> usize {
        match d {
            0..=2 => 0,
            3..=6 => 1,
            _ => 2,
        }
    }

    pub fn report_band(e: usize) -> usize {
        match e {
            0 => 0,
            1..=2 => 1,
            3..=4 => 2,
            5..=6 => 3,
            7..=8 => 4,
            _ => 5,
        }
    }

    pub fn score(&self, agent_to_target: usize, report_to_target: usize) -> f64 {
        self.table[Self::agent_band(agent_to_target)][Self::report_band(report_to_target)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardRule {
    pub exact: f64,
    pub near: f64,
    /// A hit strictly closer than this (ℓ₁) but not exact earns `near`.
    pub near_radius: usize,
}

impl Default for RewardRule {
    fn default() -> Self {
        Self {
            exact: 1.0,
            near: 0.2,
            near_radius: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub num_agents: usize,
    /// `[x, y]` per agent; drawn from the layout stream when absent.
    pub agent_positions: Option<Vec<[usize; 2]>>,
    pub transition_scores: TransitionScores,
    pub likelihood_scores: LikelihoodScores,
    pub rewards: RewardRule,
    pub gamma: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            num_agents: 8,
            agent_positions: None,
            transition_scores: TransitionScores::default(),
            likelihood_scores: LikelihoodScores::default(),
            rewards: RewardRule::default(),
            gamma: 0.9,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
        }
    }

    /// Agent cells: the configured ones, or distinct uniform cells drawn
    /// from the layout stream of `seed`.
    pub fn resolve_positions(&self, seed: u64) -> Result<Vec<usize>, ModelError> {
        let grid = self.grid();
        match &self.agent_positions {
            Some(list) => {
                if list.len() != self.num_agents {
                    return Err(ModelError::Shape(format!(
                        "{} agent positions for {} agents",
                        list.len(),
                        self.num_agents
                    )));
                }
                let cells = list
                    .iter()
                    .map(|&[x, y]| {
                        if x >= self.width || y >= self.height {
                            Err(ModelError::Shape(format!("agent position ({x}, {y}) off grid")))
                        } else {
                            Ok(grid.index(Cell { x, y }))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut sorted = cells.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != cells.len() {
                    return Err(ModelError::Shape("agent positions must be distinct".into()));
                }
                Ok(cells)
            }
            None => {
                let mut rng = Streams::new(seed).env(0, Phase::Layout);
                Ok(sample_indices(&mut rng, grid.num_cells(), self.num_agents).into_vec())
            }
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.width == 0 || self.height == 0 {
            return Err(ModelError::Shape("grid must have positive size".into()));
        }
        if self.num_agents == 0 || self.num_agents > self.width * self.height {
            return Err(ModelError::Shape(format!(
                "{} agents do not fit on a {}x{} grid",
                self.num_agents, self.width, self.height
            )));
        }
        let t = &self.transition_scores;
        let tscores = [
            t.near_target_near_hits,
            t.far_target_near_hits,
            t.near_target_far_hits,
            t.far_target_far_hits,
        ];
        let lscores = self.likelihood_scores.table.iter().flatten();
        if tscores.iter().chain(lscores).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::Shape("score tables must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Transition law of the target; depends on the joint hit only through its
/// rounded mean cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTransition {
    grid: Grid,
    num_agents: usize,
    scores: TransitionScores,
    /// `[mean cell][s′][s]`, when small enough to precompute.
    table: Option<Arc<Vec<f64>>>,
}

impl GridTransition {
    pub fn new(grid: Grid, num_agents: usize, scores: TransitionScores) -> Self {
        let mut t = Self {
            grid,
            num_agents,
            scores,
            table: None,
        };
        let n = grid.num_cells();
        if n.pow(3) <= PRECOMPUTE_LIMIT {
            let mut table = Vec::with_capacity(n.pow(3));
            for m in 0..n {
                for sp in 0..n {
                    table.extend(t.compute_column(sp, m));
                }
            }
            t.table = Some(Arc::new(table));
        }
        t
    }

    fn compute_column(&self, s_prev: usize, mean: usize) -> Vec<f64> {
        let n = self.grid.num_cells();
        let mut col: Vec<f64> = (0..n)
            .map(|s| {
                self.scores
                    .score(self.grid.dist(s, s_prev), self.grid.dist(s, mean))
            })
            .collect();
        let total: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= total);
        col
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_states(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn check_joint(&self, joint: &[usize]) -> Result<(), ModelError> {
        if joint.len() != self.num_agents {
            return Err(ModelError::Shape(format!(
                "joint action has {} entries, expected {}",
                joint.len(),
                self.num_agents
            )));
        }
        let n = self.num_states();
        match joint.iter().find(|&&a| a >= n) {
            Some(&a) => Err(ModelError::IndexOutOfRange {
                what: "action",
                index: a,
                len: n,
            }),
            None => Ok(()),
        }
    }

    /// Column for a given mean hit cell.
    pub fn column_for_mean(&self, s_prev: usize, mean: usize) -> Cow<'_, [f64]> {
        match &self.table {
            Some(t) => {
                let n = self.num_states();
                let start = (mean * n + s_prev) * n;
                Cow::Borrowed(&t[start..start + n])
            }
            None => Cow::Owned(self.compute_column(s_prev, mean)),
        }
    }

    pub fn column(&self, s_prev: usize, joint: &[usize]) -> Cow<'_, [f64]> {
        self.column_for_mean(s_prev, self.grid.mean_cell(joint))
    }

    /// Every cell can be a mean hit location (all agents hitting it).
    pub fn action_classes(&self) -> Vec<Vec<usize>> {
        (0..self.num_states())
            .map(|m| vec![m; self.num_agents])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReward {
    pub grid: Grid,
    pub exact: f64,
    pub near: f64,
    pub near_radius: usize,
}

impl GridReward {
    /// Reward for agent `k`'s hit against the target cell `s` it aimed at.
    pub fn reward(&self, k: usize, s: usize, joint: &[usize], _s_next: usize) -> f64 {
        let d = self.grid.dist(joint[k], s);
        if d == 0 {
            self.exact
        } else if d < self.near_radius {
            self.near
        } else {
            0.0
        }
    }
}

/// A built grid model plus the agent cells it was built for.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub model: DecPomdpModel,
    pub grid: Grid,
    pub positions: Vec<usize>,
}

impl GridWorld {
    pub fn position_cells(&self) -> Vec<Cell> {
        self.positions.iter().map(|&p| self.grid.cell(p)).collect()
    }
}

/// Likelihood of agent at `pos`: L(ξ | s) ∝ score(d(pos, s), d(ξ, s)).
pub fn grid_likelihood(grid: Grid, pos: usize, scores: &LikelihoodScores) -> LikelihoodModel {
    let n = grid.num_cells();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let d_agent = grid.dist(pos, s);
            let mut row: Vec<f64> = (0..n)
                .map(|xi| scores.score(d_agent, grid.dist(xi, s)))
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect();
    LikelihoodModel::from_rows(&rows).expect("grid likelihood is square and nonempty")
}

/// Build the tracking model. `layout_seed` only matters when positions are
/// not configured.
pub fn build_grid_model(cfg: &GridConfig, layout_seed: u64) -> Result<GridWorld, ModelError> {
    cfg.check()?;
    let grid = cfg.grid();
    let n = grid.num_cells();
    let positions = cfg.resolve_positions(layout_seed)?;
    let agents = positions
        .iter()
        .map(|&p| AgentModel {
            num_actions: n,
            likelihood: grid_likelihood(grid, p, &cfg.likelihood_scores),
            policy: Policy::map_identity(n),
        })
        .collect();
    let transition =
        TransitionKernel::Grid(GridTransition::new(grid, cfg.num_agents, cfg.transition_scores));
    let rewards = RewardModel::Grid(GridReward {
        grid,
        exact: cfg.rewards.exact,
        near: cfg.rewards.near,
        near_radius: cfg.rewards.near_radius,
    });
    let r_max = cfg.rewards.exact.max(cfg.rewards.near).max(0.0);
    let model = DecPomdpModel::new(n, agents, transition, rewards, cfg.gamma, r_max)?;
    Ok(GridWorld {
        model,
        grid,
        positions,
    })
}

/// Hit the cell holding the largest belief entry (lowest index on ties).
pub fn map_policy(mu: &Belief) -> usize {
    mu.argmax()
}

/// The tracking experiment with the published hyperparameters: α = 0.1,
/// ρ = 0.0001, β = K = 8, identity features, inverse-distance weights over
/// the agent cells, three seeds.
pub fn default_experiment_config() -> ExperimentConfig {
    let grid = GridConfig::default();
    ExperimentConfig {
        learner: LearnerSpec {
            alpha: 0.1,
            rho: 0.0001,
            beta: grid.num_agents as f64,
        },
        model: ModelSource::BuiltinGrid(grid),
        algorithms: vec![Algorithm::Centralized, Algorithm::Diffusion, Algorithm::Baseline],
        features: FeatureMap::Identity,
        network: NetworkRecipe::Positions {
            positions: None,
            threshold: None,
        },
        num_iterations: 1000,
        seeds: vec![1, 2, 3],
        marginalization: Marginalization::MonteCarlo {
            samples: DEFAULT_MC_SAMPLES,
        },
        output_dir: "out".into(),
        sbe_window: DEFAULT_SBE_WINDOW,
        theory: TheoryOverrides::default(),
        exec: Exec::default(),
    }
}
