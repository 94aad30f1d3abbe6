//! Certificates and diagnostics: Nash gap, evaluated returns, the iteration
//! count that guarantees ε-accurate Q-iteration after a change of MDP, and the
//! bound on target error caused by stale partner policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{self, AgentPolicy, JointPolicy, QTable};
use crate::error::{Error, Result};
use crate::game::{sample_index, StochasticGame};

/// Best responses inside [`nash_gap`] are solved this much tighter than the
/// reported tolerance.
const BR_TIGHTENING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    /// `max_s (V_{BR_i, π_-i}(s) − V_π(s))` for each agent.
    pub per_agent_gap: Vec<f64>,
    pub overall_gap: f64,
    pub tol: f64,
    pub certified: bool,
    pub best_responses: Vec<AgentPolicy>,
}

/// Largest gain any single agent can obtain, in any state, by deviating
/// unilaterally to a best response.
pub fn nash_gap(game: &StochasticGame, policy: &JointPolicy, tol: f64) -> Result<NashReport> {
    nash_gap_warm(game, policy, tol, None)
}

/// [`nash_gap`] with optional per-agent Q-tables to warm-start the best
/// response solves. The certificate does not depend on the starting point.
pub fn nash_gap_warm(
    game: &StochasticGame,
    policy: &JointPolicy,
    tol: f64,
    warm: Option<&[QTable]>,
) -> Result<NashReport> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be > 0, got {tol}")));
    }
    policy.validate(game)?;
    let v_pi = dp::joint_policy_value(game, policy)?;
    let mut per_agent_gap = Vec::with_capacity(game.num_agents());
    let mut best_responses = Vec::with_capacity(game.num_agents());
    for agent in 0..game.num_agents() {
        let mdp = dp::induce_mdp(game, agent, policy)?;
        let init = match warm {
            Some(tables) => tables[agent].clone(),
            None => QTable::zeros(agent, mdp.num_states, mdp.num_actions),
        };
        let br = dp::q_iteration_to_tol(&mdp, &init, tol * BR_TIGHTENING)?;
        let gap = (0..game.num_states())
            .map(|s| br.q.max_value(s) - v_pi[s])
            .fold(f64::NEG_INFINITY, f64::max);
        per_agent_gap.push(gap);
        best_responses.push(dp::greedy_policy(&br.q));
    }
    let overall_gap = per_agent_gap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NashReport {
        per_agent_gap,
        overall_gap,
        tol,
        certified: overall_gap <= tol,
        best_responses,
    })
}

/// Mean and sample standard deviation of undiscounted episode returns over
/// `episodes` rollouts of `game.horizon()` steps from the initial distribution.
pub fn eval_return<R: Rng + ?Sized>(
    game: &StochasticGame,
    policy: &JointPolicy,
    episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::param("episodes must be >= 1"));
    }
    policy.validate(game)?;
    let n = game.num_agents();
    let mut actions = vec![0usize; n];
    let mut row = Vec::new();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = game.sample_initial(rng);
        let mut total = 0.0;
        for _ in 0..game.horizon() {
            for (i, slot) in actions.iter_mut().enumerate() {
                *slot = match policy.agent(i) {
                    AgentPolicy::Deterministic { actions } => actions[s],
                    stochastic => {
                        row.resize(game.action_dims()[i], 0.0);
                        stochastic.fill_row(s, &mut row);
                        sample_index(&row, rng)
                    }
                };
            }
            let joint = crate::game::flatten_joint(&actions, game.action_dims())?;
            total += game.reward(s, joint);
            s = game.step_joint(s, joint, rng);
        }
        returns.push(total);
    }
    Ok(mean_std(&returns))
}

/// Mean and sample (n − 1) standard deviation; std is 0 for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Smallest number of Q-iteration sweeps that brings a warm-started table,
/// within `epsilon` of the previous round's fixed point, to within `epsilon`
/// of the new fixed point:
/// `t ≥ (ln((1−γ)ε) − ln(2R + 2ε)) / ln γ` with `R = r_max / (1−γ)`.
pub fn lemma2_min_iterations(gamma: f64, r_max: f64, epsilon: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::param(format!("r_max must be > 0, got {r_max}")));
    }
    let big_r = r_max / (1.0 - gamma);
    let t = (((1.0 - gamma) * epsilon).ln() - (2.0 * big_r + 2.0 * epsilon).ln()) / gamma.ln();
    Ok(t.ceil().max(0.0) as u64)
}

/// Per-state bound `(2−γ)/(1−γ) · r_max · D_TV(p_s, q_s)` on the gap between
/// a TD target computed under the current partner policy and one computed under
/// the policy that generated the data. Rows are distributions over the
/// partners' joint actions.
pub fn target_discrepancy_bound(
    pi_current: &[Vec<f64>],
    pi_data: &[Vec<f64>],
    gamma: f64,
    r_max: f64,
) -> Result<Vec<f64>> {
    if pi_current.len() != pi_data.len() {
        return Err(Error::param(format!(
            "policies cover {} and {} states",
            pi_current.len(),
            pi_data.len()
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let scale = (2.0 - gamma) / (1.0 - gamma) * r_max;
    pi_current
        .iter()
        .zip(pi_data)
        .enumerate()
        .map(|(s, (p, q))| {
            if p.len() != q.len() {
                return Err(Error::param(format!(
                    "state {s}: supports of size {} and {} differ",
                    p.len(),
                    q.len()
                )));
            }
            for row in [p, q] {
                crate::game::check_distribution(row).map_err(|m| Error::param(format!("state {s}: {m}")))?;
            }
            let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
            Ok(scale * tv)
        })
        .collect()
}
