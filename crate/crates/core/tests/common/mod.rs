#![allow(dead_code)]

use ma2ql::dp::{AgentPolicy, InducedMDP, JointPolicy};
use ma2ql::game::{generate_game, GameParams, StochasticGame};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn game(seed: u64, states: usize, agents: usize, actions: usize, gamma: f64) -> StochasticGame {
    generate_game(&GameParams {
        seed,
        num_states: states,
        num_agents: agents,
        actions_per_agent: actions,
        gamma,
        noise_delta: 1e-6,
        horizon: 20,
    })
    .unwrap()
}

pub fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

pub fn random_mdp<R: Rng>(rng: &mut R, states: usize, actions: usize, gamma: f64) -> InducedMDP {
    let mut transition = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        transition.extend(random_row(rng, states));
    }
    let reward = (0..states * actions).map(|_| rng.gen::<f64>()).collect();
    InducedMDP::from_tensors(states, actions, gamma, transition, reward).unwrap()
}

pub fn random_stochastic<R: Rng>(rng: &mut R, states: usize, actions: usize) -> AgentPolicy {
    let mut probs = Vec::with_capacity(states * actions);
    for _ in 0..states {
        probs.extend(random_row(rng, actions));
    }
    AgentPolicy::Stochastic {
        num_actions: actions,
        probs,
    }
}

pub fn random_deterministic<R: Rng>(rng: &mut R, states: usize, actions: usize) -> AgentPolicy {
    AgentPolicy::deterministic((0..states).map(|_| rng.gen_range(0..actions)).collect())
}

pub fn random_joint<R: Rng>(rng: &mut R, game: &StochasticGame, stochastic: bool) -> JointPolicy {
    JointPolicy::new(
        game.action_dims()
            .iter()
            .map(|&k| {
                if stochastic {
                    random_stochastic(rng, game.num_states(), k)
                } else {
                    random_deterministic(rng, game.num_states(), k)
                }
            })
            .collect(),
    )
}

/// Probability of joint action `j` in state `s` under a product policy,
/// computed digit by digit.
pub fn joint_prob(game: &StochasticGame, policy: &JointPolicy, s: usize, j: usize) -> f64 {
    let a = game.unflatten(j).unwrap();
    a.actions()
        .iter()
        .enumerate()
        .map(|(i, &ai)| policy.agent(i).prob(s, ai))
        .product()
}

/// Joint-policy value by plain fixed-point iteration, written out long-hand.
pub fn joint_value_by_iteration(game: &StochasticGame, policy: &JointPolicy) -> Vec<f64> {
    let (n_s, n_j, g) = (game.num_states(), game.num_joint_actions(), game.gamma());
    let mut v = vec![0.0; n_s];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n_s];
        for s in 0..n_s {
            for j in 0..n_j {
                let p = joint_prob(game, policy, s, j);
                if p == 0.0 {
                    continue;
                }
                let ev: f64 = (0..n_s).map(|t| game.transition_row(s, j)[t] * v[t]).sum();
                next[s] += p * (game.reward(s, j) + g * ev);
            }
        }
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff <= 1e-13 {
            break;
        }
    }
    v
}

/// Q* of an MDP by iterating the optimality operator until it stops moving.
pub fn machine_fixed_point(mdp: &InducedMDP) -> Vec<f64> {
    let (n_s, n_a) = (mdp.num_states, mdp.num_actions);
    let mut q = vec![0.0; n_s * n_a];
    let mut stalled = 0;
    for _ in 0..100_000 {
        let v: Vec<f64> = (0..n_s)
            .map(|s| q[s * n_a..(s + 1) * n_a].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut next = vec![0.0; n_s * n_a];
        for s in 0..n_s {
            for a in 0..n_a {
                let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                next[s * n_a + a] = mdp.reward(s, a) + mdp.gamma * ev;
            }
        }
        if next == q {
            return q;
        }
        // Rounding can leave a last-bit oscillation; accept it once it persists.
        let scale = next.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        stalled = if sup_dist(&next, &q) <= 4.0 * f64::EPSILON * scale { stalled + 1 } else { 0 };
        q = next;
        if stalled >= 50 {
            return q;
        }
    }
    q
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
