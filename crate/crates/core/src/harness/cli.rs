//! Command-line interface.
//!
//! Exit codes: 0 on success, 2 on usage, parse or validation errors.
//! `nash-check` exits 1 when the policy is not certified.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dp;
use crate::error::{Error, Result};
use crate::game::{self, GameParams};
use crate::harness::{self, io, ExperimentSpec};
use crate::metrics;

#[derive(Debug, Parser)]
#[command(name = "ma2ql", version, about = "Tabular alternate Q-learning lab for cooperative stochastic games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random cooperative game and write it to a file.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        horizon: usize,
        /// Upper bound of the positive reward noise.
        #[arg(long, default_value_t = 1e-6)]
        noise: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run an experiment spec (TOML).
    Run {
        spec: PathBuf,
        /// Overrides `output_dir` from the spec.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Align aggregate curves from several run directories.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Also render an SVG plot.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Certify a joint policy as a Nash equilibrium (exit 0) or not (exit 1).
    NashCheck {
        #[arg(long)]
        game: PathBuf,
        /// Policy file, or a run log whose final policy is checked.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
        tol: f64,
        /// Report path (default: print to stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the joint-action MDP for the globally optimal policy.
    SolveOptimal {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Policy file to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Optional per-state value CSV.
        #[arg(long)]
        values: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Generate {
            seed,
            states,
            agents,
            actions,
            gamma,
            horizon,
            noise,
            output,
        } => {
            let params = GameParams {
                seed,
                num_states: states,
                num_agents: agents,
                actions_per_agent: actions,
                gamma,
                noise_delta: noise,
                horizon,
            };
            let g = game::generate_game(&params)?;
            game::save_game(&g, &output)?;
            println!("{}  {}", game::game_digest(&g), output.display());
            Ok(0)
        }
        Command::Run { spec, output, jobs } => {
            let parsed = ExperimentSpec::load(&spec)?;
            let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
            let out = output
                .or_else(|| parsed.output_dir.as_ref().map(|d| base.join(d)))
                .ok_or_else(|| Error::Config(vec!["no output directory: set output_dir or pass -o".into()]))?;
            let summary = harness::run_experiment(&parsed, &base, &out, jobs)?;
            for c in &summary.cells {
                if let Some(rec) = c.log.final_record() {
                    println!(
                        "{}: final mean_return {} nash_gap {}",
                        c.dir.display(),
                        rec.mean_return,
                        rec.nash_gap.map(|g| g.to_string()).unwrap_or_else(|| "-".into())
                    );
                }
            }
            Ok(0)
        }
        Command::Compare { dirs, output, plot } => {
            let cmp = harness::compare_dirs(&dirs)?;
            for w in &cmp.warnings {
                eprintln!("warning: {w}");
            }
            game::write_atomic(&output, &harness::comparison_csv(&cmp))?;
            if let Some(p) = plot {
                game::write_atomic(&p, harness::render_svg(&cmp).as_bytes())?;
            }
            Ok(0)
        }
        Command::NashCheck {
            game: game_path,
            policy,
            tol,
            output,
        } => {
            if !(tol > 0.0) {
                return Err(Error::param(format!("tol must be > 0, got {tol}")));
            }
            let g = game::load_game(&game_path)?;
            let pi = io::load_policy(&policy)?;
            let report = metrics::nash_gap(&g, &pi, tol)?;
            let json = serde_json::to_vec_pretty(&report).expect("report serializes");
            match output {
                Some(p) => game::write_atomic(&p, &json)?,
                None => println!("{}", String::from_utf8_lossy(&json)),
            }
            eprintln!(
                "overall gap {} (tol {tol}): {}",
                report.overall_gap,
                if report.certified { "certified Nash" } else { "NOT Nash" }
            );
            Ok(if report.certified { 0 } else { 1 })
        }
        Command::SolveOptimal {
            game: game_path,
            tol,
            output,
            values,
        } => {
            let g = game::load_game(&game_path)?;
            let opt = dp::solve_joint_optimal(&g, tol)?;
            io::save_policy(&opt.policy, &output)?;
            if let Some(p) = values {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["state", "value"]).expect("in-memory csv");
                for (s, v) in opt.values.iter().enumerate() {
                    w.write_record([s.to_string(), v.to_string()]).expect("in-memory csv");
                }
                game::write_atomic(&p, &w.into_inner().expect("in-memory csv"))?;
            }
            println!("optimal expected value {}", dp::expected_value(&g, &opt.values));
            Ok(0)
        }
    }
}
