//! Exact dynamic programming on cooperative games and on the single-agent
//! MDPs that arise when all but one agent are frozen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_distribution, StochasticGame};

/// Upper bound on `S * J` for [`solve_joint_optimal`].
pub const DEFAULT_JOINT_TABLE_LIMIT: usize = 1 << 26;

/// Residual at which iterative policy evaluation stops.
pub const EVAL_RESIDUAL: f64 = 1e-10;

const MAX_SWEEPS: usize = 10_000_000;

// ---------------------------------------------------------------------------
// Tables and policies
// ---------------------------------------------------------------------------

/// One agent's state-action value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    agent: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(agent: usize, num_states: usize, num_actions: usize) -> Self {
        QTable {
            agent,
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_values(agent: usize, num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::param(format!(
                "{} values for a {num_states}x{num_actions} table",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("Q-table entries must be finite"));
        }
        Ok(QTable {
            agent,
            num_states,
            num_actions,
            values,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// max_a Q(s, a)
    #[inline]
    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance; shapes must agree.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn same_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::param(format!(
                "Q-table is {}x{}, expected {num_states}x{num_actions}",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// A single agent's policy over fully observed states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentPolicy {
    /// One action per state.
    Deterministic { actions: Vec<usize> },
    /// Row-major `[state][action]` probabilities.
    Stochastic { num_actions: usize, probs: Vec<f64> },
}

impl AgentPolicy {
    pub fn deterministic(actions: Vec<usize>) -> Self {
        AgentPolicy::Deterministic { actions }
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        AgentPolicy::Stochastic {
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            AgentPolicy::Deterministic { actions } => actions.len(),
            AgentPolicy::Stochastic { num_actions, probs } => probs.len() / (*num_actions).max(1),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, AgentPolicy::Deterministic { .. })
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        match self {
            AgentPolicy::Deterministic { actions } => {
                if actions[state] == action {
                    1.0
                } else {
                    0.0
                }
            }
            AgentPolicy::Stochastic { num_actions, probs } => probs[state * num_actions + action],
        }
    }

    /// Action distribution at `state` written into `out` (length = action count).
    pub fn fill_row(&self, state: usize, out: &mut [f64]) {
        match self {
            AgentPolicy::Deterministic { actions } => {
                out.iter_mut().for_each(|p| *p = 0.0);
                out[actions[state]] = 1.0;
            }
            AgentPolicy::Stochastic { num_actions, probs } => {
                out.copy_from_slice(&probs[state * num_actions..(state + 1) * num_actions]);
            }
        }
    }

    /// Checks shape and stochasticity against the given dimensions.
    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        match self {
            AgentPolicy::Deterministic { actions } => {
                if actions.len() != num_states {
                    return Err(Error::param(format!(
                        "deterministic policy covers {} states, expected {num_states}",
                        actions.len()
                    )));
                }
                if let Some(s) = actions.iter().position(|&a| a >= num_actions) {
                    return Err(Error::param(format!(
                        "action {} at state {s} out of range 0..{num_actions}",
                        actions[s]
                    )));
                }
            }
            AgentPolicy::Stochastic {
                num_actions: k,
                probs,
            } => {
                if *k != num_actions || probs.len() != num_states * num_actions {
                    return Err(Error::param(format!(
                        "stochastic policy shape {}x{k} does not match {num_states}x{num_actions}",
                        probs.len() / (*k).max(1)
                    )));
                }
                for s in 0..num_states {
                    check_distribution(&probs[s * k..(s + 1) * k])
                        .map_err(|m| Error::param(format!("policy row {s}: {m}")))?;
                }
            }
        }
        Ok(())
    }
}

/// Per-agent policies; the joint policy is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub agents: Vec<AgentPolicy>,
}

impl JointPolicy {
    pub fn new(agents: Vec<AgentPolicy>) -> Self {
        JointPolicy { agents }
    }

    pub fn deterministic(actions: Vec<Vec<usize>>) -> Self {
        JointPolicy {
            agents: actions.into_iter().map(AgentPolicy::deterministic).collect(),
        }
    }

    pub fn uniform(game: &StochasticGame) -> Self {
        JointPolicy {
            agents: game
                .action_dims()
                .iter()
                .map(|&k| AgentPolicy::uniform(game.num_states(), k))
                .collect(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &AgentPolicy {
        &self.agents[i]
    }

    /// Copy with agent `i` swapped for `policy`.
    pub fn with_agent(&self, i: usize, policy: AgentPolicy) -> Self {
        let mut next = self.clone();
        next.agents[i] = policy;
        next
    }

    pub fn validate(&self, game: &StochasticGame) -> Result<()> {
        self.validate_except(game, None)
    }

    fn validate_except(&self, game: &StochasticGame, skip: Option<usize>) -> Result<()> {
        if self.agents.len() != game.num_agents() {
            return Err(Error::param(format!(
                "joint policy has {} agents, game has {}",
                self.agents.len(),
                game.num_agents()
            )));
        }
        for (i, (p, &k)) in self.agents.iter().zip(game.action_dims()).enumerate() {
            if Some(i) != skip {
                p.validate(game.num_states(), k)
                    .map_err(|e| Error::param(format!("agent {i}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Probability of every joint action at `state`, with agent `skip` (if any)
    /// marginalized out by giving it weight 1 on each of its actions.
    pub(crate) fn joint_weights(&self, game: &StochasticGame, state: usize, skip: Option<usize>, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        let mut row = Vec::new();
        for (k, (policy, &dim)) in self.agents.iter().zip(game.action_dims()).enumerate() {
            row.resize(dim, 0.0);
            if Some(k) == skip {
                row.iter_mut().for_each(|p| *p = 1.0);
            } else {
                policy.fill_row(state, &mut row);
            }
            let prev = std::mem::take(out);
            out.reserve(prev.len() * dim);
            for &w in &prev {
                out.extend(row.iter().map(|&p| w * p));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Induced MDP
// ---------------------------------------------------------------------------

/// The MDP an agent faces while the others follow fixed policies.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedMDP {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    /// `[(s * A + a) * S + s']`
    pub transition: Vec<f64>,
    /// `[s * A + a]`
    pub reward: Vec<f64>,
    pub agent: usize,
    /// The policies the MDP was built from; entry `agent` is not used.
    pub frozen: JointPolicy,
}

impl InducedMDP {
    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Builds an MDP directly from tensors; used for tests and standalone solves.
    pub fn from_tensors(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if transition.len() != num_states * num_actions * num_states || reward.len() != num_states * num_actions {
            return Err(Error::param("tensor sizes do not match the declared shape"));
        }
        let mdp = InducedMDP {
            num_states,
            num_actions,
            gamma,
            transition,
            reward,
            agent: 0,
            frozen: JointPolicy::new(Vec::new()),
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                check_distribution(mdp.transition_row(s, a))
                    .map_err(|m| Error::param(format!("P[{s}][{a}]: {m}")))?;
            }
        }
        Ok(mdp)
    }
}

/// Marginalizes the other agents' policies out of the game, giving agent
/// `agent` the transition `P_i(s'|s,a_i) = E[P(s'|s,a_i,a_-i)]` and reward
/// `r_i(s,a_i) = E[r(s,a_i,a_-i)]`. Entry `agent` of `others` is ignored.
pub fn induce_mdp(game: &StochasticGame, agent: usize, others: &JointPolicy) -> Result<InducedMDP> {
    if agent >= game.num_agents() {
        return Err(Error::param(format!(
            "agent {agent} out of range 0..{}",
            game.num_agents()
        )));
    }
    others.validate_except(game, Some(agent))?;

    let s_n = game.num_states();
    let a_n = game.action_dims()[agent];
    let j_n = game.num_joint_actions();
    let stride = crate::game::strides(game.action_dims())[agent];

    let mut transition = vec![0.0; s_n * a_n * s_n];
    let mut reward = vec![0.0; s_n * a_n];
    let mut weights = Vec::with_capacity(j_n);

    for s in 0..s_n {
        others.joint_weights(game, s, Some(agent), &mut weights);
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let a = (j / stride) % a_n;
            reward[s * a_n + a] += w * game.reward(s, j);
            let dst = &mut transition[(s * a_n + a) * s_n..(s * a_n + a + 1) * s_n];
            for (d, &p) in dst.iter_mut().zip(game.transition_row(s, j)) {
                *d += w * p;
            }
        }
    }

    Ok(InducedMDP {
        num_states: s_n,
        num_actions: a_n,
        gamma: game.gamma(),
        transition,
        reward,
        agent,
        frozen: others.clone(),
    })
}

// ---------------------------------------------------------------------------
// Q-iteration
// ---------------------------------------------------------------------------

/// One synchronous Bellman optimality backup.
pub fn bellman_backup(mdp: &InducedMDP, q: &QTable) -> QTable {
    let mut next = QTable::zeros(q.agent, mdp.num_states, mdp.num_actions);
    bellman_backup_into(mdp, q, &mut next);
    next
}

fn bellman_backup_into(mdp: &InducedMDP, q: &QTable, out: &mut QTable) {
    let v: Vec<f64> = (0..mdp.num_states).map(|s| q.max_value(s)).collect();
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
            out.set(s, a, mdp.reward(s, a) + mdp.gamma * ev);
        }
    }
}

/// Applies exactly `iterations` synchronous backups starting from `q_init`.
pub fn q_iteration(mdp: &InducedMDP, q_init: &QTable, iterations: usize) -> Result<QTable> {
    q_init.same_shape(mdp.num_states, mdp.num_actions)?;
    let mut cur = q_init.clone();
    let mut next = q_init.clone();
    for _ in 0..iterations {
        bellman_backup_into(mdp, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Successive-iterate threshold that certifies `‖Q − Q*‖∞ ≤ tol`.
pub fn residual_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / (2.0 * gamma)
    }
}

/// Result of running Q-iteration until the certificate holds.
#[derive(Debug, Clone)]
pub struct Converged {
    pub q: QTable,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates backups until successive iterates differ by at most
/// [`residual_threshold`]. Thresholds below the resolution of f64 at the
/// table's magnitude stop at the numerical fixed point instead.
pub fn q_iteration_to_tol(mdp: &InducedMDP, q_init: &QTable, tol: f64) -> Result<Converged> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be > 0, got {tol}")));
    }
    q_init.same_shape(mdp.num_states, mdp.num_actions)?;
    let threshold = residual_threshold(mdp.gamma, tol);
    let mut cur = q_init.clone();
    let mut next = q_init.clone();
    for it in 1..=MAX_SWEEPS {
        bellman_backup_into(mdp, &cur, &mut next);
        let residual = next.sup_distance(&cur);
        std::mem::swap(&mut cur, &mut next);
        let floor = 8.0 * f64::EPSILON * cur.sup_norm();
        if residual <= threshold || residual <= floor {
            return Ok(Converged {
                q: cur,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::param("Q-iteration did not converge"))
}

/// Greedy deterministic policy; ties go to the lowest action index.
pub fn greedy_policy(q: &QTable) -> AgentPolicy {
    AgentPolicy::deterministic((0..q.num_states).map(|s| argmax(q.row(s))).collect())
}

// ---------------------------------------------------------------------------
// Policy evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Repeated expected backups until the sup-norm residual is ≤ [`EVAL_RESIDUAL`].
    Iterative,
    /// Direct solve of `(I − γ P_π) V = r_π`.
    LinearSolve,
}

#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub q: QTable,
    pub method: EvalMethod,
    pub iterations: usize,
}

/// Q-function of a fixed single-agent policy on `mdp`.
pub fn policy_evaluation(mdp: &InducedMDP, policy: &AgentPolicy, method: EvalMethod) -> Result<PolicyEvaluation> {
    policy.validate(mdp.num_states, mdp.num_actions)?;
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    match method {
        EvalMethod::Iterative => {
            let mut q = QTable::zeros(mdp.agent, s_n, a_n);
            let mut next = q.clone();
            let mut iterations = 0;
            loop {
                let v: Vec<f64> = (0..s_n)
                    .map(|s| (0..a_n).map(|a| policy.prob(s, a) * q.get(s, a)).sum())
                    .collect();
                for s in 0..s_n {
                    for a in 0..a_n {
                        let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                        next.set(s, a, mdp.reward(s, a) + mdp.gamma * ev);
                    }
                }
                iterations += 1;
                let residual = next.sup_distance(&q);
                std::mem::swap(&mut q, &mut next);
                if residual <= EVAL_RESIDUAL || iterations >= MAX_SWEEPS {
                    break;
                }
            }
            Ok(PolicyEvaluation { q, method, iterations })
        }
        EvalMethod::LinearSolve => {
            let mut p_pi = vec![0.0; s_n * s_n];
            let mut r_pi = vec![0.0; s_n];
            for s in 0..s_n {
                for a in 0..a_n {
                    let w = policy.prob(s, a);
                    if w == 0.0 {
                        continue;
                    }
                    r_pi[s] += w * mdp.reward(s, a);
                    for (d, &p) in p_pi[s * s_n..(s + 1) * s_n].iter_mut().zip(mdp.transition_row(s, a)) {
                        *d += w * p;
                    }
                }
            }
            let v = solve_discounted(&p_pi, &r_pi, mdp.gamma)?;
            let mut q = QTable::zeros(mdp.agent, s_n, a_n);
            for s in 0..s_n {
                for a in 0..a_n {
                    let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                    q.set(s, a, mdp.reward(s, a) + mdp.gamma * ev);
                }
            }
            Ok(PolicyEvaluation {
                q,
                method,
                iterations: 1,
            })
        }
    }
}

/// Solves `(I − γ P) v = r` by Gaussian elimination with partial pivoting.
fn solve_discounted(p: &[f64], r: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = r.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = -gamma * p[i * n + j];
        }
        m[i * n + i] += 1.0;
    }
    let mut b = r.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(Error::param("singular policy-evaluation system"));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row * n + row];
    }
    Ok(x)
}

/// Single-agent policy iteration with exact evaluation, started from `init`.
/// An action is replaced only when another beats it by more than `margin`,
/// so the loop cannot cycle among equal-valued policies.
pub fn policy_iteration(mdp: &InducedMDP, init: &AgentPolicy, margin: f64) -> Result<(AgentPolicy, QTable)> {
    let mut actions: Vec<usize> = match init {
        AgentPolicy::Deterministic { actions } => actions.clone(),
        stochastic => {
            stochastic.validate(mdp.num_states, mdp.num_actions)?;
            (0..mdp.num_states)
                .map(|s| {
                    let row: Vec<f64> = (0..mdp.num_actions).map(|a| stochastic.prob(s, a)).collect();
                    argmax(&row)
                })
                .collect()
        }
    };
    loop {
        let policy = AgentPolicy::deterministic(actions.clone());
        let q = policy_evaluation(mdp, &policy, EvalMethod::LinearSolve)?.q;
        let mut changed = false;
        for (s, cur) in actions.iter_mut().enumerate() {
            let best = argmax(q.row(s));
            if q.get(s, best) > q.get(s, *cur) + margin {
                *cur = best;
                changed = true;
            }
        }
        if !changed {
            return Ok((policy, q));
        }
    }
}

// ---------------------------------------------------------------------------
// Best response and joint solutions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub q: QTable,
    pub policy: AgentPolicy,
    pub iterations: usize,
}

/// Optimal reply of `agent` to the frozen policies of the others: Q-iteration
/// on the induced MDP until `‖Q − Q*‖∞ ≤ tol`, then the greedy policy.
pub fn best_response(game: &StochasticGame, agent: usize, others: &JointPolicy, tol: f64) -> Result<BestResponse> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be > 0, got {tol}")));
    }
    let mdp = induce_mdp(game, agent, others)?;
    let init = QTable::zeros(agent, mdp.num_states, mdp.num_actions);
    let done = q_iteration_to_tol(&mdp, &init, tol)?;
    let policy = greedy_policy(&done.q);
    Ok(BestResponse {
        q: done.q,
        policy,
        iterations: done.iterations,
    })
}

/// OPTIMAL baseline: value iteration over the joint-action MDP.
#[derive(Debug, Clone)]
pub struct JointOptimum {
    /// `[s * J + j]`
    pub q: Vec<f64>,
    pub policy: JointPolicy,
    pub values: Vec<f64>,
    pub iterations: usize,
}

pub fn solve_joint_optimal(game: &StochasticGame, tol: f64) -> Result<JointOptimum> {
    solve_joint_optimal_with_limit(game, tol, DEFAULT_JOINT_TABLE_LIMIT)
}

pub fn solve_joint_optimal_with_limit(game: &StochasticGame, tol: f64, limit: usize) -> Result<JointOptimum> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be > 0, got {tol}")));
    }
    let (s_n, j_n) = (game.num_states(), game.num_joint_actions());
    if s_n.saturating_mul(j_n) > limit {
        return Err(Error::Capacity(format!(
            "joint table {s_n}x{j_n} exceeds the limit of {limit} entries"
        )));
    }
    let gamma = game.gamma();
    let threshold = residual_threshold(gamma, tol);
    let backup = |v: &[f64], q: &mut [f64]| {
        for s in 0..s_n {
            for j in 0..j_n {
                let ev: f64 = game.transition_row(s, j).iter().zip(v).map(|(p, x)| p * x).sum();
                q[s * j_n + j] = game.reward(s, j) + gamma * ev;
            }
        }
    };
    let mut v = vec![0.0; s_n];
    let mut q = vec![0.0; s_n * j_n];
    let mut iterations = 0;
    loop {
        backup(&v, &mut q);
        iterations += 1;
        let next: Vec<f64> = q.chunks_exact(j_n).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let residual = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v = next;
        if residual <= threshold || residual <= 8.0 * f64::EPSILON * scale || iterations >= MAX_SWEEPS {
            break;
        }
    }
    backup(&v, &mut q);
    let mut per_agent = vec![Vec::with_capacity(s_n); game.num_agents()];
    for s in 0..s_n {
        let best = argmax(&q[s * j_n..(s + 1) * j_n]);
        let joint = game.unflatten(best)?;
        for (i, &a) in joint.actions().iter().enumerate() {
            per_agent[i].push(a);
        }
    }
    Ok(JointOptimum {
        q,
        policy: JointPolicy::deterministic(per_agent),
        values: v,
        iterations,
    })
}

fn joint_policy_system(game: &StochasticGame, policy: &JointPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    policy.validate(game)?;
    let s_n = game.num_states();
    let mut p_pi = vec![0.0; s_n * s_n];
    let mut r_pi = vec![0.0; s_n];
    let mut weights = Vec::with_capacity(game.num_joint_actions());
    for s in 0..s_n {
        policy.joint_weights(game, s, None, &mut weights);
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * game.reward(s, j);
            for (d, &p) in p_pi[s * s_n..(s + 1) * s_n].iter_mut().zip(game.transition_row(s, j)) {
                *d += w * p;
            }
        }
    }
    Ok((p_pi, r_pi))
}

/// Exact discounted value of a joint policy in every state.
pub fn joint_policy_value(game: &StochasticGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    let (p_pi, r_pi) = joint_policy_system(game, policy)?;
    solve_discounted(&p_pi, &r_pi, game.gamma())
}

/// Joint-action Q-function of a joint policy, `[s * J + j]`.
pub fn joint_policy_q(game: &StochasticGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    let v = joint_policy_value(game, policy)?;
    let (s_n, j_n) = (game.num_states(), game.num_joint_actions());
    let mut q = vec![0.0; s_n * j_n];
    for s in 0..s_n {
        for j in 0..j_n {
            let ev: f64 = game.transition_row(s, j).iter().zip(&v).map(|(p, x)| p * x).sum();
            q[s * j_n + j] = game.reward(s, j) + game.gamma() * ev;
        }
    }
    Ok(q)
}

/// Init-distribution-weighted value, the scalar objective of a joint policy.
pub fn expected_value(game: &StochasticGame, values: &[f64]) -> f64 {
    game.init_dist().iter().zip(values).map(|(p, v)| p * v).sum()
}
