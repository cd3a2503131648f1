//! Experiment configuration and per-seed setup.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::evaluation::{FeatureMap, LearnerConfig};
use crate::exec::Exec;
use crate::filtering::{Marginalization, DEFAULT_ENUMERATION_CAP};
use crate::gridworld::{build_grid_model, Cell, GridConfig};
use crate::model::DecPomdpModel;
use crate::network::{build_from_positions, build_uniform, CombinationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Centralized,
    Diffusion,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Centralized => "centralized",
            Algorithm::Diffusion => "diffusion",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    BuiltinGrid(GridConfig),
    /// Path to a model JSON document, relative to the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkRecipe {
    /// c_ℓk = 1/K.
    #[default]
    Uniform,
    /// Inverse-distance weights between agent cells. Grid models default to
    /// their own agent cells; `threshold` defaults to the smallest one that
    /// keeps the graph connected.
    Positions {
        #[serde(default)]
        positions: Option<Vec<[usize; 2]>>,
        #[serde(default)]
        threshold: Option<f64>,
    },
    Explicit { weights: Vec<Vec<f64>> },
}

/// Learner hyperparameters; γ comes from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryOverrides {
    pub tau: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub enumeration_cap: u64,
}

impl Default for TheoryOverrides {
    fn default() -> Self {
        Self {
            tau: None,
            b: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_window() -> usize {
    crate::analysis::DEFAULT_SBE_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub algorithms: Vec<Algorithm>,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub features: FeatureMap,
    #[serde(default)]
    pub network: NetworkRecipe,
    pub num_iterations: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub marginalization: Marginalization,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_window")]
    pub sbe_window: usize,
    #[serde(default)]
    pub theory: TheoryOverrides,
    #[serde(default)]
    pub exec: Exec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config("at least one algorithm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.num_iterations == 0 {
            return Err(HarnessError::Config("num_iterations must be >= 1".into()));
        }
        if self.sbe_window == 0 {
            return Err(HarnessError::Config("sbe_window must be >= 1".into()));
        }
        let mut algs = self.algorithms.clone();
        algs.sort();
        algs.dedup();
        if algs.len() != self.algorithms.len() {
            return Err(HarnessError::Config("algorithms must not repeat".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must not repeat".into()));
        }
        Ok(())
    }

    pub fn wants(&self, alg: Algorithm) -> bool {
        self.algorithms.contains(&alg)
    }
}

/// Model source with any file already loaded.
#[derive(Debug, Clone)]
pub enum ResolvedModel {
    Grid(GridConfig),
    Fixed(DecPomdpModel),
}

impl ResolvedModel {
    pub fn load(source: &ModelSource, base_dir: &Path) -> Result<Self, HarnessError> {
        match source {
            ModelSource::BuiltinGrid(g) => Ok(ResolvedModel::Grid(g.clone())),
            ModelSource::File(p) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                Ok(ResolvedModel::Fixed(DecPomdpModel::from_json(&text)?))
            }
        }
    }
}

/// Model and network for one seed.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: DecPomdpModel,
    pub network: CombinationMatrix,
    /// Distance threshold actually used by the positions recipe.
    pub threshold: Option<f64>,
    /// Agent cells for grid models.
    pub positions: Option<Vec<Cell>>,
}

pub fn build_setup(
    model: &ResolvedModel,
    recipe: &NetworkRecipe,
    seed: u64,
) -> Result<Setup, HarnessError> {
    let (model, positions) = match model {
        ResolvedModel::Grid(g) => {
            let world = build_grid_model(g, seed)?;
            let cells = world.position_cells();
            (world.model, Some(cells))
        }
        ResolvedModel::Fixed(m) => (m.clone(), None),
    };
    let k = model.num_agents();
    let (network, threshold) = match recipe {
        NetworkRecipe::Uniform => (build_uniform(k)?, None),
        NetworkRecipe::Positions {
            positions: explicit,
            threshold,
        } => {
            let cells: Vec<Cell> = match (explicit, &positions) {
                (Some(list), _) => list.iter().map(|&[x, y]| Cell { x, y }).collect(),
                (None, Some(cells)) => cells.clone(),
                (None, None) => {
                    return Err(HarnessError::Config(
                        "positions recipe needs explicit positions for file models".into(),
                    ))
                }
            };
            if cells.len() != k {
                return Err(HarnessError::Config(format!(
                    "{} network positions for {k} agents",
                    cells.len()
                )));
            }
            let (c, t) = build_from_positions(&cells, *threshold)?;
            (c, Some(t))
        }
        NetworkRecipe::Explicit { weights } => (CombinationMatrix::from_rows(weights)?, None),
    };
    if network.size() != k {
        return Err(HarnessError::Config(format!(
            "network has {} agents, model has {k}",
            network.size()
        )));
    }
    Ok(Setup {
        model,
        network,
        threshold,
        positions,
    })
}

/// Everything a simulation needs besides the setup.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub learner: LearnerConfig,
    pub features: FeatureMap,
    pub marginalization: Marginalization,
    pub exec: Exec,
    pub iterations: u64,
    pub sbe_window: usize,
}

impl SimParams {
    pub fn from_config(cfg: &ExperimentConfig, gamma: f64) -> Self {
        Self {
            learner: LearnerConfig {
                alpha: cfg.learner.alpha,
                rho: cfg.learner.rho,
                gamma,
                beta: cfg.learner.beta,
            },
            features: cfg.features.clone(),
            marginalization: cfg.marginalization,
            exec: cfg.exec,
            iterations: cfg.num_iterations,
            sbe_window: cfg.sbe_window,
        }
    }
}
