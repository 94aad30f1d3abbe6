//! Experiment specification files (TOML).
//!
//! ```toml
//! format_version = 1
//! algorithm = "ma2ql-dp"
//! seeds = [1, 2, 3, 4, 5]
//!
//! [game]            # or: path = "game.bin"
//! num_states = 30
//!
//! [train]
//! dp_rounds = 200
//!
//! [sweep]
//! axis = "t"
//! values = [1, 5, 10, 50]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{generate_game, load_game, GameParams, StochasticGame};
use crate::learn::{Algorithm, TrainConfig};

pub const SPEC_FORMAT_VERSION: u32 = 1;

/// Game section: either a saved game or generation parameters. Without an
/// explicit `seed`, each run seed also seeds game generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSource {
    pub path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub num_states: usize,
    pub num_agents: usize,
    pub actions_per_agent: usize,
    pub gamma: f64,
    pub noise_delta: f64,
    pub horizon: usize,
}

impl Default for GameSource {
    fn default() -> Self {
        let d = GameParams::didactic(0);
        GameSource {
            path: None,
            seed: None,
            num_states: d.num_states,
            num_agents: d.num_agents,
            actions_per_agent: d.actions_per_agent,
            gamma: d.gamma,
            noise_delta: d.noise_delta,
            horizon: d.horizon,
        }
    }
}

impl GameSource {
    pub fn params(&self, run_seed: u64) -> GameParams {
        GameParams {
            seed: self.seed.unwrap_or(run_seed),
            num_states: self.num_states,
            num_agents: self.num_agents,
            actions_per_agent: self.actions_per_agent,
            gamma: self.gamma,
            noise_delta: self.noise_delta,
            horizon: self.horizon,
        }
    }

    /// Loads or generates the game for one run seed. Relative paths resolve
    /// against `base`.
    pub fn build(&self, run_seed: u64, base: &Path) -> Result<StochasticGame> {
        match &self.path {
            Some(p) => load_game(&base.join(p)),
            None => generate_game(&self.params(run_seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Exact backups per turn (`dp_iters_per_turn`).
    T,
    /// Batches per turn (`updates_per_turn`).
    K,
    /// Transitions per update (`samples_per_update`).
    Samples,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::T => "t",
            SweepAxis::K => "k",
            SweepAxis::Samples => "samples",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: u64) {
        match self {
            SweepAxis::T => cfg.dp_iters_per_turn = value as usize,
            SweepAxis::K => cfg.updates_per_turn = value,
            SweepAxis::Samples => cfg.samples_per_update = value,
        }
    }

    fn compatible(self, algorithm: Algorithm) -> bool {
        match self {
            SweepAxis::T => algorithm == Algorithm::Ma2qlDp,
            SweepAxis::K => algorithm == Algorithm::Ma2ql,
            SweepAxis::Samples => matches!(algorithm, Algorithm::Ma2ql | Algorithm::Iql),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<u64>,
}

fn default_version() -> u32 {
    SPEC_FORMAT_VERSION
}

fn default_optimal_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub game: GameSource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Convergence tolerance of the OPTIMAL solve.
    #[serde(default = "default_optimal_tol")]
    pub optimal_tol: f64,
}

/// One (seed, sweep value) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub seed: u64,
    pub sweep_value: Option<u64>,
    pub config: TrainConfig,
}

impl Cell {
    /// Curve group this cell aggregates into.
    pub fn group(&self, spec: &ExperimentSpec) -> String {
        match (&spec.sweep, self.sweep_value) {
            (Some(s), Some(v)) => format!("{}={v}", s.axis.label()),
            _ => spec.algorithm.tag().to_string(),
        }
    }

    pub fn dir_name(&self, spec: &ExperimentSpec) -> String {
        match (&spec.sweep, self.sweep_value) {
            (Some(s), Some(v)) => format!("{}{v}_seed{}", s.axis.label(), self.seed),
            _ => format!("seed{}", self.seed),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|r| format!("spec byte {}", r.start))
                .unwrap_or_else(|| "spec".to_string());
            Error::format(location, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Every violation in the spec. `num_agents` is needed to check MA2QL turn
    /// divisibility; pass the loaded game's agent count when known.
    pub fn violations(&self, num_agents: Option<usize>) -> Vec<String> {
        let mut v = Vec::new();
        if self.format_version != SPEC_FORMAT_VERSION {
            v.push(format!(
                "format_version {} unsupported (expected {SPEC_FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.seeds.is_empty() {
            v.push("seeds must not be empty".to_string());
        }
        if self.game.path.is_none() {
            if let Err(e) = self.game.params(0).validate() {
                v.push(format!("game: {e}"));
            }
        }
        if !(self.optimal_tol > 0.0) {
            v.push(format!("optimal_tol must be > 0, got {}", self.optimal_tol));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                v.push("sweep.values must not be empty".to_string());
            }
            if sweep.values.contains(&0) {
                v.push("sweep values must be positive".to_string());
            }
            if !sweep.axis.compatible(self.algorithm) {
                v.push(format!(
                    "sweep axis {:?} is not compatible with algorithm {}",
                    sweep.axis.label(),
                    self.algorithm.tag()
                ));
            }
        }
        let agents = num_agents.or(self.game.path.is_none().then_some(self.game.num_agents));
        for cell in self.cells() {
            for msg in cell.config.violations() {
                let msg = format!("train: {msg}");
                if !v.contains(&msg) {
                    v.push(msg);
                }
            }
            if let (Algorithm::Ma2ql, Some(n)) = (self.algorithm, agents) {
                for msg in cell.config.alternating_violations(n) {
                    let msg = format!("train: {msg}");
                    if !v.contains(&msg) {
                        v.push(msg);
                    }
                }
            }
        }
        v
    }

    pub fn validate(&self, num_agents: Option<usize>) -> Result<()> {
        let v = self.violations(num_agents);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Cartesian product of sweep values and seeds, sweep-major.
    pub fn cells(&self) -> Vec<Cell> {
        let values: Vec<Option<u64>> = match &self.sweep {
            Some(s) => s.values.iter().map(|&x| Some(x)).collect(),
            None => vec![None],
        };
        let mut cells = Vec::new();
        for value in values {
            for &seed in &self.seeds {
                let mut config = self.train.clone();
                config.seed = seed;
                if let (Some(s), Some(x)) = (&self.sweep, value) {
                    s.axis.apply(&mut config, x);
                }
                cells.push(Cell {
                    seed,
                    sweep_value: value,
                    config,
                });
            }
        }
        cells
    }
}
