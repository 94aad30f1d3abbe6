//! Experiment driver: runs (seed × sweep value) cells, writes per-cell run
//! logs and curves, and aggregates across seeds.

pub mod cli;
pub mod compare;
pub mod io;
pub mod spec;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dp;
use crate::error::{Error, Result};
use crate::game::{write_atomic, StochasticGame};
use crate::learn::{self, Algorithm, RunLog, TrainConfig};

pub use compare::{compare_dirs, comparison_csv, render_svg, Comparison, AGGREGATE_FILE};
pub use spec::{Cell, ExperimentSpec, GameSource, Sweep, SweepAxis};

/// Dispatches one trainer.
pub fn run_algorithm(game: &StochasticGame, algorithm: Algorithm, cfg: &TrainConfig, optimal_tol: f64) -> Result<RunLog> {
    match algorithm {
        Algorithm::Iql => learn::train_iql(game, cfg),
        Algorithm::Ma2ql => learn::train_ma2ql(game, cfg),
        Algorithm::Ma2qlDp => learn::train_ma2ql_dp(game, cfg),
        Algorithm::AltPi => learn::train_alt_policy_iteration(game, cfg),
        Algorithm::Optimal => learn::optimal_run(game, cfg, optimal_tol),
    }
}

/// Files written for one cell, relative to the experiment directory.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub dir: PathBuf,
    pub log: RunLog,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub cells: Vec<CellResult>,
}

fn run_cell(spec: &ExperimentSpec, base: &Path, out_dir: &Path, cell: &Cell) -> Result<CellResult> {
    let started = Instant::now();
    let game = spec.game.build(cell.seed, base)?;
    let log = run_algorithm(&game, spec.algorithm, &cell.config, spec.optimal_tol)?;
    let dir = out_dir.join(cell.dir_name(spec));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let curve = if spec.algorithm == Algorithm::Optimal {
        let opt = dp::solve_joint_optimal(&game, spec.optimal_tol)?;
        io::optimal_csv(&log, &opt.values, dp::expected_value(&game, &opt.values))
    } else {
        io::curve_csv(&log)
    };
    write_atomic(&dir.join("curve.csv"), &curve)?;
    write_atomic(&dir.join("runlog.json"), &io::runlog_json(&log))?;
    io::save_policy(&log.final_policy, &dir.join("policy.json"))?;
    log::info!("{} done in {:.2}s", dir.display(), started.elapsed().as_secs_f64());
    Ok(CellResult {
        cell: cell.clone(),
        dir,
        log,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every cell of `spec` (in parallel when `jobs != Some(1)`) and writes
/// the aggregate CSV. Output bytes depend only on the spec and game inputs.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path, out_dir: &Path, jobs: Option<usize>) -> Result<RunSummary> {
    let num_agents = match &spec.game.path {
        Some(p) => Some(crate::game::load_game(&base.join(p))?.num_agents()),
        None => None,
    };
    spec.validate(num_agents)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("spec.toml"), spec.to_toml().as_bytes())?;

    let cells = spec.cells();
    let work = || -> Vec<Result<CellResult>> { cells.par_iter().map(|c| run_cell(spec, base, out_dir, c)).collect() };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<(Option<u64>, String), Vec<&RunLog>> = BTreeMap::new();
    for c in &cells {
        groups.entry((c.cell.sweep_value, c.cell.group(spec))).or_default().push(&c.log);
    }
    let rows = groups
        .iter()
        .flat_map(|((_, name), logs)| io::aggregate_rows(name, logs))
        .collect();
    write_atomic(&out_dir.join(AGGREGATE_FILE), &io::aggregate_csv(rows))?;

    let timing: BTreeMap<String, f64> = cells
        .iter()
        .map(|c| (c.dir.file_name().unwrap().to_string_lossy().to_string(), c.seconds))
        .collect();
    write_atomic(
        &out_dir.join("timing.json"),
        &serde_json::to_vec_pretty(&timing).expect("timing serializes"),
    )?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        cells,
    })
}
