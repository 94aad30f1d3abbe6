use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ma2ql::dp::JointPolicy;
use ma2ql::game::{save_game, StochasticGame};
use ma2ql::harness::io::save_policy;

fn ma2ql(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ma2ql"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

const GEN: [&str; 13] = [
    "generate", "--seed", "1", "--states", "30", "--agents", "3", "--actions", "5", "--gamma", "0.95", "--horizon", "30",
];

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = GEN.to_vec();
    args.extend(["--noise", "1e-6", "-o", "a.bin"]);
    let a = ma2ql(&args, dir.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    *args.last_mut().unwrap() = "b.bin";
    let b = ma2ql(&args, dir.path());
    let digest = |o: &Output| stdout(o).split_whitespace().next().unwrap().to_string();
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(digest(&a).len(), 64);
    assert_eq!(fs::read(dir.path().join("a.bin")).unwrap(), fs::read(dir.path().join("b.bin")).unwrap());
}

#[test]
fn generate_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = ma2ql(&GEN[..GEN.len() - 2], dir.path());
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("Usage"));

    let mut args = GEN.to_vec();
    args[10] = "1.0";
    args.extend(["-o", "g.bin"]);
    let bad_gamma = ma2ql(&args, dir.path());
    assert_eq!(code(&bad_gamma), 2);
    assert!(stderr(&bad_gamma).contains("gamma"));
    assert!(!dir.path().join("g.bin").exists());

    assert_eq!(code(&ma2ql(&["frobnicate"], dir.path())), 2);
}

const DP_SPEC: &str = r#"
algorithm = "ma2ql-dp"
seeds = [1, 2]
output_dir = "out"

[game]
num_states = 6
num_agents = 2
actions_per_agent = 3

[train]
dp_rounds = 4
eval_episodes = 4

[sweep]
axis = "t"
values = [1, 5]
"#;

const IQL_SPEC: &str = r#"
algorithm = "iql"
seeds = [3, 4]

[game]
num_states = 5
num_agents = 2
actions_per_agent = 2

[train]
total_env_steps = 2000
samples_per_update = 50
eval_every = 200
eval_episodes = 4
"#;

#[test]
fn run_writes_one_curve_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dp.toml"), DP_SPEC).unwrap();
    let out = ma2ql(&["run", "dp.toml"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let root = dir.path().join("out");
    for t in [1, 5] {
        for seed in [1, 2] {
            let cell = root.join(format!("t{t}_seed{seed}"));
            for f in ["curve.csv", "runlog.json", "policy.json"] {
                assert!(cell.join(f).is_file(), "{}", cell.join(f).display());
            }
            // Step 0 plus one row per turn.
            let curve = fs::read_to_string(cell.join("curve.csv")).unwrap();
            assert_eq!(curve.lines().count(), 1 + 1 + 4 * 2);
        }
    }
    let agg = fs::read_to_string(root.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("group,env_steps,learn_steps,mean_return,std_return,nash_gap,n_seeds\n"));
    assert!(agg.contains("\nt=1,") && agg.contains("\nt=5,"));
    assert!(root.join("spec.toml").is_file());
}

#[test]
fn curve_rows_follow_eval_grid_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iql.toml"), IQL_SPEC).unwrap();
    let a = ma2ql(&["run", "iql.toml", "-o", "a", "--jobs", "2"], dir.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let b = ma2ql(&["run", "iql.toml", "-o", "b", "--jobs", "1"], dir.path());
    assert_eq!(code(&b), 0);
    for rel in ["seed3/curve.csv", "seed4/curve.csv", "aggregate.csv", "seed3/runlog.json"] {
        let x = fs::read(dir.path().join("a").join(rel)).unwrap();
        let y = fs::read(dir.path().join("b").join(rel)).unwrap();
        assert_eq!(x, y, "{rel}");
    }
    let curve = fs::read_to_string(dir.path().join("a/seed3/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2000 / 200 + 1);
    assert_eq!(
        curve.lines().next().unwrap(),
        "env_steps,learn_steps,mean_return,std_return,nash_gap,sup_q_error"
    );
}

#[test]
fn invalid_spec_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = "algorithm = \"iql\"\nseeds = []\n[game]\ngamma = 1.5\n[sweep]\naxis = \"t\"\nvalues = [0]\n";
    fs::write(dir.path().join("bad.toml"), spec).unwrap();
    let out = ma2ql(&["run", "bad.toml", "-o", "x"], dir.path());
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for needle in ["seeds", "gamma", "positive", "not compatible"] {
        assert!(err.contains(needle), "{needle}: {err}");
    }
    fs::write(dir.path().join("typo.toml"), "algorithm = \"iql\"\nseedz = [1]\n").unwrap();
    assert_eq!(code(&ma2ql(&["run", "typo.toml", "-o", "x"], dir.path())), 2);
}

#[test]
fn optimal_spec_emits_single_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("opt.toml"),
        "algorithm = \"optimal\"\nseeds = [1]\n[game]\nnum_states = 5\nnum_agents = 2\nactions_per_agent = 2\n",
    )
    .unwrap();
    let out = ma2ql(&["run", "opt.toml", "-o", "o"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let curve = fs::read_to_string(dir.path().join("o/seed1/curve.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].ends_with("value_min,value_mean,value_max,value_init"));
}

#[test]
fn compare_aligns_groups() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iql.toml"), IQL_SPEC).unwrap();
    assert_eq!(code(&ma2ql(&["run", "iql.toml", "-o", "runs"], dir.path())), 0);
    let out = ma2ql(&["compare", "runs", "runs", "-o", "cmp.csv", "--plot", "cmp.svg"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "env_steps,runs:iql_mean,runs:iql_std,runs:iql#2_mean,runs:iql#2_std");
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[1], f[2]), (f[3], f[4]));
    }
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(fs::read_to_string(dir.path().join("cmp.svg")).unwrap().starts_with("<svg"));

    fs::create_dir(dir.path().join("empty")).unwrap();
    let bad = ma2ql(&["compare", "runs", "empty", "-o", "x.csv"], dir.path());
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("empty/aggregate.csv"));
}

fn matrix_game(dir: &Path) {
    let g = StochasticGame::from_parts(1, vec![2, 2], 0.0, vec![1.0; 4], vec![1.0, 0.0, 0.0, 0.5], 0.0, 1, vec![1.0], 0)
        .unwrap();
    save_game(&g, &dir.join("m.bin")).unwrap();
    save_policy(&JointPolicy::deterministic(vec![vec![0], vec![1]]), &dir.join("bad.json")).unwrap();
}

#[test]
fn nash_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    matrix_game(dir.path());
    let not_nash = ma2ql(&["nash-check", "--game", "m.bin", "--policy", "bad.json", "--tol", "1e-6"], dir.path());
    assert_eq!(code(&not_nash), 1);
    let report: serde_json::Value = serde_json::from_slice(&not_nash.stdout).unwrap();
    assert!(report["overall_gap"].as_f64().unwrap() > 0.0);

    assert_eq!(code(&ma2ql(&["nash-check", "--game", "m.bin", "--policy", "bad.json", "--tol", "0"], dir.path())), 2);
    assert_eq!(code(&ma2ql(&["nash-check", "--game", "m.bin", "--policy", "bad.json", "--tol", "-1"], dir.path())), 2);
    fs::write(dir.path().join("junk.json"), "{").unwrap();
    assert_eq!(code(&ma2ql(&["nash-check", "--game", "m.bin", "--policy", "junk.json"], dir.path())), 2);
    assert_eq!(code(&ma2ql(&["nash-check", "--game", "bad.json", "--policy", "bad.json"], dir.path())), 2);
}

#[test]
fn alt_pi_policy_is_certified_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let spec = "algorithm = \"alt-pi\"\nseeds = [1]\n[game]\nseed = 5\nnum_states = 10\nnum_agents = 3\nactions_per_agent = 3\n";
    fs::write(dir.path().join("alt.toml"), spec).unwrap();
    assert_eq!(code(&ma2ql(&["run", "alt.toml", "-o", "alt"], dir.path())), 0);
    let gen = ma2ql(
        &[
            "generate", "--seed", "5", "--states", "10", "--agents", "3", "--actions", "3", "--gamma", "0.95", "--horizon",
            "30", "-o", "g.bin",
        ],
        dir.path(),
    );
    assert_eq!(code(&gen), 0);
    let out = ma2ql(
        &["nash-check", "--game", "g.bin", "--policy", "alt/seed1/policy.json", "--tol", "1e-6", "-o", "r.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("r.json").is_file());
    // A run log is accepted in place of a policy file.
    let via_log = ma2ql(&["nash-check", "--game", "g.bin", "--policy", "alt/seed1/runlog.json"], dir.path());
    assert_eq!(code(&via_log), 0);
}

#[test]
fn solve_optimal_writes_certified_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = GEN.to_vec();
    args[4] = "8";
    args.extend(["-o", "g.bin"]);
    assert_eq!(code(&ma2ql(&args, dir.path())), 0);
    let out = ma2ql(
        &["solve-optimal", "--game", "g.bin", "--tol", "1e-9", "-o", "opt.json", "--values", "v.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("v.csv")).unwrap().lines().count(), 9);
    let check = ma2ql(&["nash-check", "--game", "g.bin", "--policy", "opt.json"], dir.path());
    assert_eq!(code(&check), 0);
}
