//! Tabular decentralized multi-agent RL on cooperative stochastic games.
//!
//! * [`game`]: random game generation, simulation and the binary game format.
//! * [`dp`]: induced per-agent MDPs, Q-iteration, policy evaluation, best
//!   responses and the joint optimum.
//! * [`learn`]: IQL, MA2QL, MA2QL-DP and alternate policy iteration.
//! * [`metrics`]: Nash gap, evaluated returns and iteration bounds.
//! * [`harness`]: experiment specs, sweeps, CSV output and the CLI.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod error;
pub mod game;
pub mod harness;
pub mod learn;
pub mod metrics;

pub use error::{Error, Result};
