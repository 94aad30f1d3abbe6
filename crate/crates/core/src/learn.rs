//! Trainers. IQL and MA2QL share one sample-based loop and differ only in who
//! learns after each batch: every agent (IQL) or the agent whose turn it is
//! (MA2QL). MA2QL-DP and alternate policy iteration replace the sample-based
//! update with exact DP on the active agent's induced MDP.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{self, argmax, JointPolicy, QTable};
use crate::error::{Error, Result};
use crate::game::{flatten_joint, rng_stream, StochasticGame};
use crate::metrics;

/// ChaCha stream used for behaviour and environment sampling during training.
const TRAIN_STREAM: u64 = 1;
/// Evaluation at env step `k` uses stream `EVAL_STREAM_BASE + k`, so two
/// algorithms evaluated at the same step with the same seed see the same
/// random numbers.
const EVAL_STREAM_BASE: u64 = 1 << 40;

/// Tolerance for Q* when reporting `‖Q − Q*‖∞` in DP runs.
const SUP_ERROR_TOL: f64 = 1e-10;

/// Minimum Q advantage required for policy iteration to switch action.
pub const PI_SWITCH_MARGIN: f64 = 1e-10;

pub const RETURN_AGGREGATION: &str = "undiscounted_episode_sum";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `1 / N(s, a_i)` using the agent's own visit counts.
    VisitCount,
}

/// Linear decay from `start` to `end` over the first `decay_steps` env steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Hyperparameters for the sample-based trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_env_steps: u64,
    /// K: batches collected and learned from by the active agent before the
    /// turn passes (MA2QL only).
    pub updates_per_turn: u64,
    /// Transitions collected before each update pass.
    pub samples_per_update: u64,
    pub alpha: LearningRate,
    pub epsilon: EpsilonSchedule,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// t: exact backups per turn (MA2QL-DP only).
    pub dp_iters_per_turn: usize,
    /// Rounds for DP trainers (MA2QL-DP, alternate policy iteration).
    pub dp_rounds: usize,
    pub nash_tol: f64,
    /// Compute the Nash gap at every evaluation, not only the final one.
    pub nash_every_eval: bool,
    pub seed: u64,
}

/// Defaults reproduce the didactic study: 100 rounds of 20 batches of 1000
/// transitions per turn for three agents.
impl Default for TrainConfig {
    fn default() -> Self {
        let total = 6_000_000;
        TrainConfig {
            total_env_steps: total,
            updates_per_turn: 20,
            samples_per_update: 1_000,
            alpha: LearningRate::Constant { alpha: 0.1 },
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_steps: total * 3 / 10,
            },
            eval_every: total / 100,
            eval_episodes: 32,
            dp_iters_per_turn: 1,
            dp_rounds: 200,
            nash_tol: 1e-6,
            nash_every_eval: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Every violation, for reporting all at once.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = [
            ("total_env_steps", self.total_env_steps),
            ("updates_per_turn", self.updates_per_turn),
            ("samples_per_update", self.samples_per_update),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes as u64),
            ("dp_iters_per_turn", self.dp_iters_per_turn as u64),
            ("dp_rounds", self.dp_rounds as u64),
        ];
        for (name, value) in positive {
            if value == 0 {
                v.push(format!("{name} must be positive"));
            }
        }
        if let LearningRate::Constant { alpha } = self.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                v.push(format!("alpha must lie in (0, 1], got {alpha}"));
            }
        }
        for (name, e) in [("epsilon.start", self.epsilon.start), ("epsilon.end", self.epsilon.end)] {
            if !(0.0..=1.0).contains(&e) {
                v.push(format!("{name} must lie in [0, 1], got {e}"));
            }
        }
        if !(self.nash_tol > 0.0) {
            v.push(format!("nash_tol must be > 0, got {}", self.nash_tol));
        }
        if self.samples_per_update > 0 && !self.total_env_steps.is_multiple_of(self.samples_per_update) {
            v.push(format!(
                "total_env_steps ({}) must be a multiple of samples_per_update ({})",
                self.total_env_steps, self.samples_per_update
            ));
        }
        if self.eval_every > 0 && !self.total_env_steps.is_multiple_of(self.eval_every) {
            v.push(format!(
                "total_env_steps ({}) must be a multiple of eval_every ({})",
                self.total_env_steps, self.eval_every
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Extra constraint for alternating schedules: every agent must receive the
    /// same number of turns so per-agent update budgets match IQL exactly.
    pub fn alternating_violations(&self, num_agents: usize) -> Vec<String> {
        let round = num_agents as u64 * self.updates_per_turn * self.samples_per_update;
        if round > 0 && !self.total_env_steps.is_multiple_of(round) {
            vec![format!(
                "total_env_steps ({}) must be a multiple of agents x updates_per_turn x samples_per_update ({round})",
                self.total_env_steps
            )]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Iql,
    Ma2ql,
    #[serde(rename = "ma2ql-dp")]
    #[value(name = "ma2ql-dp")]
    Ma2qlDp,
    #[serde(rename = "alt-pi")]
    #[value(name = "alt-pi")]
    AltPi,
    Optimal,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::Ma2ql => "ma2ql",
            Algorithm::Ma2qlDp => "ma2ql-dp",
            Algorithm::AltPi => "alt-pi",
            Algorithm::Optimal => "optimal",
        }
    }
}

/// One row of a learning curve. DP trainers have no environment; for them
/// `env_steps` counts completed turns and `learn_steps` counts backups
/// (MA2QL-DP) or policy-iteration sweeps (alternate policy iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub env_steps: u64,
    pub learn_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub nash_gap: Option<f64>,
    /// `‖Q_i − Q*_i‖∞` on the current induced MDP, one entry per agent.
    pub sup_q_error: Option<Vec<Option<f64>>>,
    /// Init-weighted discounted value of the greedy joint policy.
    pub joint_value: Option<f64>,
    pub active_agent: Option<usize>,
    /// `min_s (V_after − V_before)` across the turn.
    pub min_value_improvement: Option<f64>,
    pub policy_changed: Option<bool>,
}

impl EvalRecord {
    fn new(env_steps: u64, learn_steps: u64, (mean_return, std_return): (f64, f64)) -> Self {
        EvalRecord {
            env_steps,
            learn_steps,
            mean_return,
            std_return,
            nash_gap: None,
            sup_q_error: None,
            joint_value: None,
            active_agent: None,
            min_value_improvement: None,
            policy_changed: None,
        }
    }
}

/// Everything needed to plot and replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub algorithm: Algorithm,
    pub config: TrainConfig,
    pub game_seed: u64,
    pub return_aggregation: String,
    /// Both sample-based trainers use the same ε and α schedules.
    pub schedule_note: String,
    pub records: Vec<EvalRecord>,
    pub final_policy: JointPolicy,
    /// Q-learning updates (or backups, for MA2QL-DP) applied to each agent.
    pub update_counts: Vec<u64>,
    pub turn_isolation_checks: u64,
    pub turn_isolation_violations: u64,
    pub final_q: Option<Vec<QTable>>,
}

impl RunLog {
    fn new(algorithm: Algorithm, config: &TrainConfig, game: &StochasticGame) -> Self {
        RunLog {
            algorithm,
            config: config.clone(),
            game_seed: game.seed(),
            return_aggregation: RETURN_AGGREGATION.to_string(),
            schedule_note: "iql and ma2ql share epsilon and alpha schedules".to_string(),
            records: Vec::new(),
            final_policy: JointPolicy::new(Vec::new()),
            update_counts: vec![0; game.num_agents()],
            turn_isolation_checks: 0,
            turn_isolation_violations: 0,
            final_q: None,
        }
    }

    pub fn final_record(&self) -> Option<&EvalRecord> {
        self.records.last()
    }
}

// ---------------------------------------------------------------------------
// Primitive updates
// ---------------------------------------------------------------------------

/// ε-greedy choice over one Q row; the greedy branch breaks ties low.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_row: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q_row.is_empty() {
        return Err(Error::param("empty Q row"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::param(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_row.len())
    } else {
        argmax(q_row)
    })
}

/// A transition seen from one agent: its own action only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// `Q[s][a] += α (r + γ max_a' Q[s'][a'] − Q[s][a])`. The bootstrap is kept at
/// horizon cuts because the objective is the infinite discounted sum.
pub fn q_learning_update(q: &mut QTable, tr: &AgentTransition, alpha: f64, gamma: f64) -> Result<()> {
    if tr.state >= q.num_states() || tr.next_state >= q.num_states() || tr.action >= q.num_actions() {
        return Err(Error::param(format!(
            "transition ({}, {}, {}) outside a {}x{} table",
            tr.state,
            tr.action,
            tr.next_state,
            q.num_states(),
            q.num_actions()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let target = tr.reward + gamma * q.max_value(tr.next_state);
    let old = q.get(tr.state, tr.action);
    q.set(tr.state, tr.action, old + alpha * (target - old));
    Ok(())
}

fn table_hash(tables: &[QTable], skip: usize) -> u64 {
    let mut h = DefaultHasher::new();
    for (i, t) in tables.iter().enumerate() {
        if i != skip {
            i.hash(&mut h);
            t.values().iter().for_each(|v| v.to_bits().hash(&mut h));
        }
    }
    h.finish()
}

fn greedy_joint(tables: &[QTable]) -> JointPolicy {
    JointPolicy::new(tables.iter().map(dp::greedy_policy).collect())
}

// ---------------------------------------------------------------------------
// Sample-based trainers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schedule {
    Simultaneous,
    Alternating,
}

struct Learner {
    tables: Vec<QTable>,
    visits: Vec<Vec<u64>>,
    alpha: LearningRate,
    gamma: f64,
}

impl Learner {
    fn update(&mut self, agent: usize, tr: &AgentTransition) -> Result<()> {
        let alpha = match self.alpha {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::VisitCount => {
                let k = self.tables[agent].num_actions();
                let n = &mut self.visits[agent][tr.state * k + tr.action];
                *n += 1;
                1.0 / *n as f64
            }
        };
        q_learning_update(&mut self.tables[agent], tr, alpha, self.gamma)
    }
}

struct JointStep {
    state: usize,
    actions: Vec<usize>,
    reward: f64,
    next_state: usize,
}

impl JointStep {
    fn project(&self, agent: usize) -> AgentTransition {
        AgentTransition {
            state: self.state,
            action: self.actions[agent],
            reward: self.reward,
            next_state: self.next_state,
        }
    }
}

fn evaluate(
    game: &StochasticGame,
    cfg: &TrainConfig,
    tables: &[QTable],
    env_steps: u64,
    learn_steps: u64,
    with_nash: bool,
) -> Result<EvalRecord> {
    let policy = greedy_joint(tables);
    let mut rng = rng_stream(cfg.seed, EVAL_STREAM_BASE + env_steps);
    let mut rec = EvalRecord::new(env_steps, learn_steps, metrics::eval_return(game, &policy, cfg.eval_episodes, &mut rng)?);
    rec.joint_value = Some(dp::expected_value(game, &dp::joint_policy_value(game, &policy)?));
    if with_nash {
        rec.nash_gap = Some(metrics::nash_gap_warm(game, &policy, cfg.nash_tol, Some(tables))?.overall_gap);
    }
    Ok(rec)
}

fn train_sample_based(game: &StochasticGame, cfg: &TrainConfig, schedule: Schedule) -> Result<RunLog> {
    let mut violations = cfg.violations();
    if schedule == Schedule::Alternating {
        violations.extend(cfg.alternating_violations(game.num_agents()));
    }
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let algorithm = match schedule {
        Schedule::Simultaneous => Algorithm::Iql,
        Schedule::Alternating => Algorithm::Ma2ql,
    };
    let n = game.num_agents();
    let mut log = RunLog::new(algorithm, cfg, game);
    let mut learner = Learner {
        tables: (0..n)
            .map(|i| QTable::zeros(i, game.num_states(), game.action_dims()[i]))
            .collect(),
        visits: game.action_dims().iter().map(|&k| vec![0; game.num_states() * k]).collect(),
        alpha: cfg.alpha,
        gamma: game.gamma(),
    };

    let mut rng = rng_stream(cfg.seed, TRAIN_STREAM);
    let mut state = game.sample_initial(&mut rng);
    let mut episode_step = 0usize;
    let mut batch: Vec<JointStep> = Vec::with_capacity(cfg.samples_per_update as usize);
    let mut learn_steps = 0u64;
    let mut active = 0usize;
    let mut batches_this_turn = 0u64;

    log.records.push(evaluate(game, cfg, &learner.tables, 0, 0, cfg.nash_every_eval)?);

    for step in 1..=cfg.total_env_steps {
        let eps = cfg.epsilon.value(step - 1);
        let actions = learner
            .tables
            .iter()
            .map(|q| epsilon_greedy(q.row(state), eps, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let joint = flatten_joint(&actions, game.action_dims())?;
        let reward = game.reward(state, joint);
        let next_state = game.step_joint(state, joint, &mut rng);
        batch.push(JointStep {
            state,
            actions,
            reward,
            next_state,
        });
        episode_step += 1;
        if episode_step == game.horizon() {
            state = game.sample_initial(&mut rng);
            episode_step = 0;
        } else {
            state = next_state;
        }

        if batch.len() as u64 == cfg.samples_per_update {
            match schedule {
                Schedule::Simultaneous => {
                    for agent in 0..n {
                        for tr in &batch {
                            learner.update(agent, &tr.project(agent))?;
                        }
                        log.update_counts[agent] += batch.len() as u64;
                    }
                }
                Schedule::Alternating => {
                    let before = table_hash(&learner.tables, active);
                    // The active agent spends the whole batch budget IQL would
                    // spread over all n agents: n passes over the fresh data.
                    for _ in 0..n {
                        for tr in &batch {
                            learner.update(active, &tr.project(active))?;
                        }
                    }
                    log.update_counts[active] += (n * batch.len()) as u64;
                    log.turn_isolation_checks += 1;
                    if table_hash(&learner.tables, active) != before {
                        log.turn_isolation_violations += 1;
                    }
                    batches_this_turn += 1;
                    if batches_this_turn == cfg.updates_per_turn {
                        batches_this_turn = 0;
                        active = (active + 1) % n;
                    }
                }
            }
            learn_steps += (n * batch.len()) as u64;
            batch.clear();
        }

        if step % cfg.eval_every == 0 {
            let with_nash = cfg.nash_every_eval || step == cfg.total_env_steps;
            log.records.push(evaluate(game, cfg, &learner.tables, step, learn_steps, with_nash)?);
        }
    }

    log.final_policy = greedy_joint(&learner.tables);
    log.final_q = Some(learner.tables);
    Ok(log)
}

/// Independent Q-learning: after every `samples_per_update` env steps each
/// agent performs one Q-learning pass over the fresh transitions.
pub fn train_iql(game: &StochasticGame, cfg: &TrainConfig) -> Result<RunLog> {
    train_sample_based(game, cfg, Schedule::Simultaneous)
}

/// Multi-agent alternate Q-learning. Agents take turns in round-robin order.
/// A turn is `updates_per_turn` repetitions of: all agents act ε-greedily for
/// `samples_per_update` env steps, then only the active agent learns from
/// those transitions, which are then discarded. The active agent makes `n`
/// passes so its update count matches what IQL gives each agent.
pub fn train_ma2ql(game: &StochasticGame, cfg: &TrainConfig) -> Result<RunLog> {
    train_sample_based(game, cfg, Schedule::Alternating)
}

// ---------------------------------------------------------------------------
// DP trainers
// ---------------------------------------------------------------------------

fn dp_record(
    game: &StochasticGame,
    cfg: &TrainConfig,
    policy: &JointPolicy,
    values: &[f64],
    turn: u64,
    learn_steps: u64,
    nash_warm: Option<&[QTable]>,
) -> Result<EvalRecord> {
    let mut rng = rng_stream(cfg.seed, EVAL_STREAM_BASE + turn);
    let mut rec = EvalRecord::new(turn, learn_steps, metrics::eval_return(game, policy, cfg.eval_episodes, &mut rng)?);
    rec.joint_value = Some(dp::expected_value(game, values));
    rec.nash_gap = Some(metrics::nash_gap_warm(game, policy, cfg.nash_tol, nash_warm)?.overall_gap);
    Ok(rec)
}

fn dp_violations(cfg: &TrainConfig) -> Result<()> {
    let mut v = Vec::new();
    if cfg.dp_rounds == 0 {
        v.push("dp_rounds must be positive".to_string());
    }
    if cfg.dp_iters_per_turn == 0 {
        v.push("dp_iters_per_turn must be positive".to_string());
    }
    if cfg.eval_episodes == 0 {
        v.push("eval_episodes must be positive".to_string());
    }
    if !(cfg.nash_tol > 0.0) {
        v.push(format!("nash_tol must be > 0, got {}", cfg.nash_tol));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(v))
    }
}

/// Multi-agent alternate Q-iteration with exact backups. Each turn the active
/// agent's table receives `cfg.dp_iters_per_turn` synchronous backups on the
/// MDP induced by the other agents' greedy policies, warm-started from its
/// current table. Runs `cfg.dp_rounds` full rounds and logs every turn.
pub fn train_ma2ql_dp(game: &StochasticGame, cfg: &TrainConfig) -> Result<RunLog> {
    dp_violations(cfg)?;
    let n = game.num_agents();
    let t = cfg.dp_iters_per_turn;
    let mut log = RunLog::new(Algorithm::Ma2qlDp, cfg, game);
    let mut tables: Vec<QTable> = (0..n)
        .map(|i| QTable::zeros(i, game.num_states(), game.action_dims()[i]))
        .collect();
    let mut policy = greedy_joint(&tables);
    let mut values = dp::joint_policy_value(game, &policy)?;
    log.records.push(dp_record(game, cfg, &policy, &values, 0, 0, None)?);

    let mut turn = 0u64;
    let mut learn_steps = 0u64;
    for _round in 0..cfg.dp_rounds {
        for agent in 0..n {
            let before = table_hash(&tables, agent);
            let mdp = dp::induce_mdp(game, agent, &policy)?;
            tables[agent] = dp::q_iteration(&mdp, &tables[agent], t)?;
            log.update_counts[agent] += t as u64;
            learn_steps += t as u64;
            log.turn_isolation_checks += 1;
            if table_hash(&tables, agent) != before {
                log.turn_isolation_violations += 1;
            }

            let star = dp::q_iteration_to_tol(&mdp, &tables[agent], SUP_ERROR_TOL)?.q;
            let mut sup = vec![None; n];
            sup[agent] = Some(tables[agent].sup_distance(&star));

            let next_policy = greedy_joint(&tables);
            let changed = next_policy != policy;
            let next_values = dp::joint_policy_value(game, &next_policy)?;
            let min_impr = next_values
                .iter()
                .zip(&values)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            policy = next_policy;
            values = next_values;
            turn += 1;

            let mut rec = dp_record(game, cfg, &policy, &values, turn, learn_steps, Some(&tables))?;
            rec.active_agent = Some(agent);
            rec.sup_q_error = Some(sup);
            rec.min_value_improvement = Some(min_impr);
            rec.policy_changed = Some(changed);
            log.records.push(rec);
        }
    }
    log.final_policy = policy;
    log.final_q = Some(tables);
    Ok(log)
}

/// Multi-agent alternate policy iteration. Each turn the active agent runs
/// policy iteration to a fixed point on its induced MDP, starting from its
/// current policy, and adopts the result. Stops after a full round with no
/// policy change or after `cfg.dp_rounds` rounds.
pub fn train_alt_policy_iteration(game: &StochasticGame, cfg: &TrainConfig) -> Result<RunLog> {
    dp_violations(cfg)?;
    let n = game.num_agents();
    let mut log = RunLog::new(Algorithm::AltPi, cfg, game);
    let mut policy = JointPolicy::deterministic(vec![vec![0; game.num_states()]; n]);
    let mut values = dp::joint_policy_value(game, &policy)?;
    let mut tables: Vec<QTable> = (0..n)
        .map(|i| QTable::zeros(i, game.num_states(), game.action_dims()[i]))
        .collect();
    log.records.push(dp_record(game, cfg, &policy, &values, 0, 0, None)?);

    let mut turn = 0u64;
    let mut sweeps = 0u64;
    for _round in 0..cfg.dp_rounds {
        let mut round_changed = false;
        for agent in 0..n {
            let mdp = dp::induce_mdp(game, agent, &policy)?;
            let before = policy.clone();
            let (improved, q) = dp::policy_iteration(&mdp, policy.agent(agent), PI_SWITCH_MARGIN)?;
            let changed = &improved != policy.agent(agent);
            round_changed |= changed;
            policy = policy.with_agent(agent, improved);
            tables[agent] = q;
            log.update_counts[agent] += 1;
            sweeps += 1;
            log.turn_isolation_checks += 1;
            if (0..n).any(|k| k != agent && before.agent(k) != policy.agent(k)) {
                log.turn_isolation_violations += 1;
            }

            let next_values = dp::joint_policy_value(game, &policy)?;
            let min_impr = next_values
                .iter()
                .zip(&values)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            values = next_values;
            turn += 1;
            let mut rec = dp_record(game, cfg, &policy, &values, turn, sweeps, None)?;
            rec.active_agent = Some(agent);
            rec.min_value_improvement = Some(min_impr);
            rec.policy_changed = Some(changed);
            log.records.push(rec);
        }
        if !round_changed {
            break;
        }
    }
    log.final_policy = policy;
    log.final_q = Some(tables);
    Ok(log)
}

/// OPTIMAL as a one-row run log, so it can be compared like any other run.
pub fn optimal_run(game: &StochasticGame, cfg: &TrainConfig, tol: f64) -> Result<RunLog> {
    let opt = dp::solve_joint_optimal(game, tol)?;
    let mut log = RunLog::new(Algorithm::Optimal, cfg, game);
    let mut rng = rng_stream(cfg.seed, EVAL_STREAM_BASE);
    let mut rec = EvalRecord::new(0, 0, metrics::eval_return(game, &opt.policy, cfg.eval_episodes, &mut rng)?);
    rec.joint_value = Some(dp::expected_value(game, &opt.values));
    log.records.push(rec);
    log.final_policy = opt.policy;
    Ok(log)
}
