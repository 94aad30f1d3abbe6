mod common;

use common::*;
use ma2ql::dp::{self, AgentPolicy, EvalMethod, InducedMDP, JointPolicy, QTable};
use ma2ql::game::{joint_action_count, StochasticGame};
use ma2ql::Error;
use rand::Rng;

/// Game from per-(s, j) next-state lists; rewards indexed `[s * J + j]`.
fn handmade(dims: Vec<usize>, gamma: f64, reward: Vec<f64>, next: &[usize], states: usize) -> StochasticGame {
    let mut transition = vec![0.0; next.len() * states];
    for (k, &t) in next.iter().enumerate() {
        transition[k * states + t] = 1.0;
    }
    StochasticGame::from_parts(
        states,
        dims,
        gamma,
        transition,
        reward,
        0.0,
        10,
        vec![1.0 / states as f64; states],
        0,
    )
    .unwrap()
}

#[test]
fn single_agent_induced_mdp_is_the_game() {
    let g = game(4, 5, 1, 3, 0.9);
    let mdp = dp::induce_mdp(&g, 0, &JointPolicy::uniform(&g)).unwrap();
    assert_eq!(mdp.reward, g.rewards());
    assert_eq!(mdp.transition, g.transitions());
}

#[test]
fn point_mass_partner_gives_exact_slice() {
    let g = game(8, 4, 2, 3, 0.9);
    let b = vec![2, 0, 1, 2];
    let others = JointPolicy::new(vec![AgentPolicy::uniform(4, 3), AgentPolicy::deterministic(b.clone())]);
    let mdp = dp::induce_mdp(&g, 0, &others).unwrap();
    for s in 0..4 {
        for a in 0..3 {
            let j = a * 3 + b[s];
            assert_eq!(mdp.transition_row(s, a), g.transition_row(s, j));
            assert_eq!(mdp.reward(s, a), g.reward(s, j));
        }
    }
}

#[test]
fn uniform_partner_averages_reward_slices() {
    // Two states, two agents with two actions each.
    let reward = vec![0.1, 0.7, 0.25, 0.9, 0.3, 0.05, 0.6, 0.45];
    let g = handmade(vec![2, 2], 0.9, reward.clone(), &[0, 1, 1, 0, 1, 0, 0, 1], 2);
    let others = JointPolicy::new(vec![AgentPolicy::deterministic(vec![0, 0]), AgentPolicy::uniform(2, 2)]);
    let mdp = dp::induce_mdp(&g, 0, &others).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            let hand = (reward[s * 4 + a * 2] + reward[s * 4 + a * 2 + 1]) / 2.0;
            assert!((mdp.reward(s, a) - hand).abs() <= 1e-15);
        }
        // Agent 0 plays 0; agent 1 mixes over next states 0 and 1.
        assert_eq!(mdp.transition_row(s, 0), [0.5, 0.5]);
    }
}

#[test]
fn induce_rejects_mismatched_policies() {
    let g = game(1, 3, 2, 2, 0.9);
    let short = JointPolicy::new(vec![AgentPolicy::uniform(3, 2)]);
    assert!(matches!(dp::induce_mdp(&g, 0, &short), Err(Error::Parameter(_))));
    let wrong = JointPolicy::new(vec![AgentPolicy::uniform(3, 2), AgentPolicy::uniform(3, 3)]);
    assert!(dp::induce_mdp(&g, 0, &wrong).is_err());
    assert!(dp::induce_mdp(&g, 2, &JointPolicy::uniform(&g)).is_err());
}

#[test]
fn individual_q_is_marginal_of_joint_q() {
    let mut r = rng(17);
    for trial in 0..6 {
        let states = r.gen_range(1..=5);
        let g = game(100 + trial, states, 2, r.gen_range(2..=3), 0.9);
        let pi = random_joint(&mut r, &g, true);
        let v = joint_value_by_iteration(&g, &pi);
        let n_j = g.num_joint_actions();
        for agent in 0..2 {
            let mdp = dp::induce_mdp(&g, agent, &pi).unwrap();
            let eval = dp::policy_evaluation(&mdp, pi.agent(agent), EvalMethod::Iterative).unwrap();
            for s in 0..states {
                for a in 0..mdp.num_actions {
                    let mut marginal = 0.0;
                    for j in 0..n_j {
                        let act = g.unflatten(j).unwrap();
                        if act.agent(agent) != a {
                            continue;
                        }
                        let other = act.agent(1 - agent);
                        let ev: f64 = g.transition_row(s, j).iter().zip(&v).map(|(p, x)| p * x).sum();
                        marginal += pi.agent(1 - agent).prob(s, other) * (g.reward(s, j) + g.gamma() * ev);
                    }
                    assert!(
                        (eval.q.get(s, a) - marginal).abs() <= 1e-8,
                        "trial {trial} agent {agent} s={s} a={a}"
                    );
                }
            }
        }
    }
}

#[test]
fn evaluation_methods_agree() {
    let mut r = rng(3);
    for _ in 0..10 {
        let mdp = random_mdp(&mut r, 6, 3, 0.95);
        let pi = random_stochastic(&mut r, 6, 3);
        let it = dp::policy_evaluation(&mdp, &pi, EvalMethod::Iterative).unwrap();
        let ls = dp::policy_evaluation(&mdp, &pi, EvalMethod::LinearSolve).unwrap();
        assert_eq!(it.method, EvalMethod::Iterative);
        assert_eq!(ls.method, EvalMethod::LinearSolve);
        assert!(it.q.sup_distance(&ls.q) <= 1e-8);
    }
}

#[test]
fn policy_evaluation_matches_monte_carlo() {
    let mut r = rng(2024);
    let mdp = random_mdp(&mut r, 5, 3, 0.9);
    let pi = random_stochastic(&mut r, 5, 3);
    let q = dp::policy_evaluation(&mdp, &pi, EvalMethod::LinearSolve).unwrap().q;
    let sample = |rng: &mut rand_chacha::ChaCha8Rng, row: &[f64]| {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        row.len() - 1
    };
    let rollouts = 100_000;
    for (s0, a0) in [(0, 0), (3, 2)] {
        let mut returns = Vec::with_capacity(rollouts);
        let mut prow = vec![0.0; 3];
        for _ in 0..rollouts {
            let (mut s, mut a) = (s0, a0);
            let (mut total, mut disc) = (0.0, 1.0);
            for _ in 0..200 {
                total += disc * mdp.reward(s, a);
                disc *= mdp.gamma;
                s = sample(&mut r, mdp.transition_row(s, a));
                pi.fill_row(s, &mut prow);
                a = sample(&mut r, &prow);
            }
            returns.push(total);
        }
        let (mean, std) = ma2ql::metrics::mean_std(&returns);
        let se = std / (rollouts as f64).sqrt();
        assert!((mean - q.get(s0, a0)).abs() <= 3.0 * se, "{mean} vs {} (se {se})", q.get(s0, a0));
    }
}

#[test]
fn best_response_at_gamma_zero_is_average_argmax() {
    // One state; agent 1 uniform over 3 actions; agent 0 has 3 actions.
    let reward = vec![0.2, 0.9, 0.1, 0.5, 0.4, 0.45, 0.0, 1.0, 0.3];
    let g = handmade(vec![3, 3], 0.0, reward.clone(), &[0; 9], 1);
    let others = JointPolicy::new(vec![AgentPolicy::deterministic(vec![0]), AgentPolicy::uniform(1, 3)]);
    let br = dp::best_response(&g, 0, &others, 1e-9).unwrap();
    let means: Vec<f64> = (0..3).map(|a| reward[a * 3..a * 3 + 3].iter().sum::<f64>() / 3.0).collect();
    let best = (0..3).max_by(|&x, &y| means[x].partial_cmp(&means[y]).unwrap()).unwrap();
    assert_eq!(br.policy, AgentPolicy::deterministic(vec![best]));
    for a in 0..3 {
        assert!((br.q.get(0, a) - means[a]).abs() <= 1e-15);
    }
}

#[test]
fn single_agent_best_response_is_global_optimum() {
    let g = game(21, 6, 1, 4, 0.9);
    let br = dp::best_response(&g, 0, &JointPolicy::uniform(&g), 1e-9).unwrap();
    let opt = dp::solve_joint_optimal(&g, 1e-9).unwrap();
    assert_eq!(&br.policy, opt.policy.agent(0));
    for s in 0..6 {
        assert!((br.q.max_value(s) - opt.values[s]).abs() <= 2e-9);
    }
}

#[test]
fn two_state_chain_closed_form() {
    // State 0: stay for 1 or move to 1 for 0. State 1: stay for 2 or move to 0 for 0.
    let g = handmade(vec![2], 0.9, vec![1.0, 0.0, 2.0, 0.0], &[0, 1, 1, 0], 2);
    let opt = dp::solve_joint_optimal(&g, 1e-10).unwrap();
    // V(1) = 2 / (1 - γ) = 20; V(0) = max(1 / (1 - γ), γ V(1)) = max(10, 18).
    assert!((opt.values[1] - 20.0).abs() <= 1e-9);
    assert!((opt.values[0] - 18.0).abs() <= 1e-9);
    assert_eq!(opt.policy, JointPolicy::deterministic(vec![vec![1, 0]]));
}

#[test]
fn myopic_optimum_is_best_reward() {
    let g = game(5, 4, 2, 3, 0.0);
    let opt = dp::solve_joint_optimal(&g, 1e-9).unwrap();
    for s in 0..4 {
        let best = (0..9).map(|j| g.reward(s, j)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(opt.values[s], best);
    }
}

#[test]
fn deterministic_cycle_is_geometric_sum() {
    // Cycle 0 -> 1 -> 2 -> 0 under the policy; the other action self-loops.
    let reward = vec![1.0, 5.0, 2.0, 5.0, 4.0, 5.0];
    let g = handmade(vec![2], 0.5, reward, &[1, 0, 2, 1, 0, 2], 3);
    let pi = JointPolicy::deterministic(vec![vec![0, 0, 0]]);
    let v = dp::joint_policy_value(&g, &pi).unwrap();
    let r = [1.0, 2.0, 4.0];
    let c = 1.0 - 0.125;
    for s in 0..3 {
        let hand = (r[s] + 0.5 * r[(s + 1) % 3] + 0.25 * r[(s + 2) % 3]) / c;
        assert!((v[s] - hand).abs() <= 1e-12, "{} vs {hand}", v[s]);
    }
}

#[test]
fn uniform_joint_value_matches_induced_evaluation() {
    let g = game(9, 5, 1, 3, 0.9);
    let pi = JointPolicy::uniform(&g);
    let v = dp::joint_policy_value(&g, &pi).unwrap();
    let mdp = dp::induce_mdp(&g, 0, &pi).unwrap();
    let q = dp::policy_evaluation(&mdp, pi.agent(0), EvalMethod::Iterative).unwrap().q;
    for s in 0..5 {
        let avg = q.row(s).iter().sum::<f64>() / 3.0;
        assert!((v[s] - avg).abs() <= 1e-8);
    }
}

#[test]
fn optimal_policy_value_matches_reported_values() {
    for seed in 1..4 {
        let g = game(seed, 8, 2, 3, 0.95);
        let tol = 1e-8;
        let opt = dp::solve_joint_optimal(&g, tol).unwrap();
        let v = dp::joint_policy_value(&g, &opt.policy).unwrap();
        assert!(sup_dist(&v, &opt.values) <= 2.0 * tol);
    }
}

/// Best value over every deterministic stationary joint policy.
fn enumerate_policies(g: &StochasticGame) -> Vec<f64> {
    let (n_s, n_j) = (g.num_states(), g.num_joint_actions());
    let mut best = vec![f64::NEG_INFINITY; n_s];
    let total = n_j.pow(n_s as u32);
    for code in 0..total {
        let mut c = code;
        let mut choice = vec![0; n_s];
        for slot in choice.iter_mut() {
            *slot = c % n_j;
            c /= n_j;
        }
        let per_agent: Vec<Vec<usize>> = (0..g.num_agents())
            .map(|i| choice.iter().map(|&j| g.unflatten(j).unwrap().agent(i)).collect())
            .collect();
        let v = dp::joint_policy_value(g, &JointPolicy::deterministic(per_agent)).unwrap();
        for s in 0..n_s {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

#[test]
fn joint_optimum_beats_every_deterministic_policy() {
    for seed in 0..3 {
        let g = game(seed, 3, 2, 2, 0.8);
        let opt = dp::solve_joint_optimal(&g, 1e-11).unwrap();
        let brute = enumerate_policies(&g);
        assert!(sup_dist(&brute, &opt.values) <= 1e-9, "{brute:?} vs {:?}", opt.values);
    }
}

#[test]
fn joint_table_limit_is_capacity_error() {
    let g = game(0, 4, 3, 3, 0.9);
    assert!(matches!(
        dp::solve_joint_optimal_with_limit(&g, 1e-6, 4 * 27 - 1),
        Err(Error::Capacity(_))
    ));
    assert!(dp::solve_joint_optimal_with_limit(&g, 1e-6, 4 * 27).is_ok());
    assert!(matches!(joint_action_count(&[usize::MAX, 2]), Err(Error::Capacity(_))));
}

#[test]
fn successive_differences_contract() {
    let mut r = rng(55);
    for _ in 0..20 {
        let gamma = [0.5, 0.9, 0.99][r.gen_range(0..3)];
        let (states, actions) = (r.gen_range(1..8), r.gen_range(1..5));
        let mdp = random_mdp(&mut r, states, actions, gamma);
        let mut q = QTable::zeros(0, mdp.num_states, mdp.num_actions);
        let mut prev_diff = f64::INFINITY;
        for _ in 0..60 {
            let next = dp::bellman_backup(&mdp, &q);
            let diff = next.sup_distance(&q);
            assert!(diff <= gamma * prev_diff + 1e-12);
            prev_diff = diff;
            q = next;
        }
    }
}

#[test]
fn converged_q_respects_magnitude_bound() {
    let mut r = rng(77);
    for _ in 0..20 {
        let gamma = r.gen_range(0.0..0.99);
        let mdp = random_mdp(&mut r, 5, 3, gamma);
        let tol = 1e-6;
        let q = dp::q_iteration_to_tol(&mdp, &QTable::zeros(0, 5, 3), tol).unwrap().q;
        assert!(q.sup_norm() <= mdp.r_max() / (1.0 - gamma) + tol);
        let star = machine_fixed_point(&mdp);
        assert!(sup_dist(q.values(), &star) <= tol);
    }
}

#[test]
fn q_iteration_reaches_tolerance_from_any_start() {
    let mut r = rng(8);
    let mdp = random_mdp(&mut r, 6, 4, 0.95);
    let star = machine_fixed_point(&mdp);
    let init = QTable::from_values(0, 6, 4, (0..24).map(|_| r.gen_range(-50.0..50.0)).collect()).unwrap();
    for tol in [1e-3, 1e-6, 1e-9] {
        let done = dp::q_iteration_to_tol(&mdp, &init, tol).unwrap();
        assert!(sup_dist(done.q.values(), &star) <= tol);
    }
}

#[test]
fn policy_iteration_finds_optimal_policy() {
    let mut r = rng(31);
    for _ in 0..10 {
        let mdp = random_mdp(&mut r, 7, 3, 0.9);
        let start = random_deterministic(&mut r, 7, 3);
        let (pi, q) = dp::policy_iteration(&mdp, &start, 1e-10).unwrap();
        let star = machine_fixed_point(&mdp);
        let star = QTable::from_values(0, 7, 3, star).unwrap();
        assert_eq!(pi, dp::greedy_policy(&star));
        assert!(q.sup_distance(&star) <= 1e-8);
    }
}

#[test]
fn greedy_is_shift_invariant() {
    let mut r = rng(1);
    let values: Vec<f64> = (0..30).map(|_| r.gen()).collect();
    let q = QTable::from_values(0, 10, 3, values.clone()).unwrap();
    let shifted = QTable::from_values(0, 10, 3, values.iter().map(|v| v + 123.25).collect()).unwrap();
    assert_eq!(dp::greedy_policy(&q), dp::greedy_policy(&shifted));
}

#[test]
fn no_policy_beats_optimum() {
    let g = game(12, 6, 2, 3, 0.9);
    let opt = dp::solve_joint_optimal(&g, 1e-9).unwrap();
    let mut r = rng(12);
    for _ in 0..20 {
        let stochastic = r.gen_bool(0.5);
        let pi = random_joint(&mut r, &g, stochastic);
        let v = dp::joint_policy_value(&g, &pi).unwrap();
        for s in 0..6 {
            assert!(v[s] <= opt.values[s] + 2e-9);
        }
    }
}

#[test]
fn from_tensors_checks_shapes() {
    assert!(InducedMDP::from_tensors(2, 1, 0.5, vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
    assert!(InducedMDP::from_tensors(1, 1, 1.0, vec![1.0], vec![0.0]).is_err());
    assert!(InducedMDP::from_tensors(1, 1, 0.5, vec![0.9], vec![0.0]).is_err());
}
