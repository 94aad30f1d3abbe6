//! Cooperative stochastic games: fully observed Markov games in which every
//! agent receives the same scalar reward.
//!
//! Tensors are stored flat in row-major order. The joint action of `n` agents
//! is a mixed-radix number with agent 0 as the most significant digit, so
//! `transition[(s * J + j) * S + s']` and `reward[s * J + j]` where `J` is the
//! product of the per-agent action counts.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Name of the generator recorded in saved games. All randomness in the
/// crate flows through [`rng_stream`].
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3/seed_from_u64";

/// Version of the binary game container.
pub const GAME_FORMAT_VERSION: u32 = 1;

const GAME_MAGIC: &[u8; 8] = b"MA2QLGAM";
const ROW_SUM_TOL: f64 = 1e-12;

/// Largest joint-action count `generate_game` will allocate.
pub const MAX_JOINT_ACTIONS: usize = 1 << 20;

/// Seeded random stream. `stream` selects an independent ChaCha stream for the
/// same seed, which lets evaluation draw numbers without disturbing training.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of joint actions, or a capacity error if the product overflows.
pub fn joint_action_count(action_dims: &[usize]) -> Result<usize> {
    action_dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d).ok_or_else(|| {
            Error::Capacity(format!(
                "joint-action space {action_dims:?} overflows the index type"
            ))
        })
    })
}

/// Joint action: one action index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn agent(&self, i: usize) -> usize {
        self.0[i]
    }
}

/// Mixed-radix encoding, agent 0 most significant.
pub fn flatten_joint(actions: &[usize], action_dims: &[usize]) -> Result<usize> {
    if actions.len() != action_dims.len() {
        return Err(Error::param(format!(
            "joint action has {} components, expected {}",
            actions.len(),
            action_dims.len()
        )));
    }
    let mut index = 0usize;
    for (i, (&a, &d)) in actions.iter().zip(action_dims).enumerate() {
        if a >= d {
            return Err(Error::param(format!(
                "action {a} of agent {i} out of range 0..{d}"
            )));
        }
        index = index
            .checked_mul(d)
            .and_then(|x| x.checked_add(a))
            .ok_or_else(|| Error::Capacity("joint index overflow".into()))?;
    }
    Ok(index)
}

pub fn unflatten_joint(index: usize, action_dims: &[usize]) -> Result<JointAction> {
    let total = joint_action_count(action_dims)?;
    if index >= total {
        return Err(Error::param(format!(
            "joint index {index} out of range 0..{total}"
        )));
    }
    let mut actions = vec![0; action_dims.len()];
    let mut rest = index;
    for (slot, &d) in actions.iter_mut().zip(action_dims).rev() {
        *slot = rest % d;
        rest /= d;
    }
    Ok(JointAction(actions))
}

/// Place value of each agent's digit in the flattened joint index.
pub(crate) fn strides(action_dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; action_dims.len()];
    for i in (0..action_dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * action_dims[i + 1];
    }
    strides
}

/// Parameters accepted by [`generate_game`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub seed: u64,
    pub num_states: usize,
    pub num_agents: usize,
    pub actions_per_agent: usize,
    pub gamma: f64,
    pub noise_delta: f64,
    pub horizon: usize,
}

impl GameParams {
    /// The didactic configuration: 30 states, 3 agents, 5 actions each,
    /// 30-step episodes.
    pub fn didactic(seed: u64) -> Self {
        GameParams {
            seed,
            num_states: 30,
            num_agents: 3,
            actions_per_agent: 5,
            gamma: 0.95,
            noise_delta: 1e-6,
            horizon: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.num_states == 0 {
            errors.push("num_states must be >= 1".to_string());
        }
        if self.num_agents == 0 {
            errors.push("num_agents must be >= 1".to_string());
        }
        if self.actions_per_agent == 0 {
            errors.push("actions_per_agent must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            errors.push(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.noise_delta >= 0.0 && self.noise_delta.is_finite()) {
            errors.push(format!(
                "noise_delta must be finite and >= 0, got {}",
                self.noise_delta
            ));
        }
        if self.horizon == 0 {
            errors.push("horizon must be >= 1".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::param(errors.join("; ")))
        }
    }
}

/// A cooperative Markov game with a shared reward. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    num_states: usize,
    action_dims: Vec<usize>,
    num_joint: usize,
    gamma: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
    noise_delta: f64,
    horizon: usize,
    init_dist: Vec<f64>,
    seed: u64,
}

/// One environment step as seen by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub agent_actions: JointAction,
    pub reward: f64,
    pub next_state: usize,
    /// Set by the caller's horizon counter; [`StochasticGame::step`] leaves it false.
    pub done: bool,
}

/// Draws a game whose rewards are uniform on [0, 1] and whose transition rows
/// are normalized vectors of uniform (0, 1] draws. With `noise_delta > 0` every
/// reward entry additionally receives an independent positive perturbation in
/// (0, noise_delta], which breaks ties between joint actions.
pub fn generate_game(params: &GameParams) -> Result<StochasticGame> {
    params.validate()?;
    let action_dims = vec![params.actions_per_agent; params.num_agents];
    let num_joint = joint_action_count(&action_dims)?;
    if num_joint > MAX_JOINT_ACTIONS {
        return Err(Error::Capacity(format!(
            "{num_joint} joint actions exceed the limit of {MAX_JOINT_ACTIONS}"
        )));
    }
    let s = params.num_states;
    let table = s
        .checked_mul(num_joint)
        .and_then(|x| x.checked_mul(s))
        .ok_or_else(|| Error::Capacity("transition tensor size overflows".into()))?;

    let mut rng = rng_stream(params.seed, 0);

    let mut reward: Vec<f64> = (0..s * num_joint).map(|_| rng.gen::<f64>()).collect();

    let mut transition = Vec::with_capacity(table);
    for _ in 0..s * num_joint {
        let start = transition.len();
        // gen::<f64>() is in [0, 1); flip it to (0, 1] so rows are strictly positive.
        transition.extend((0..s).map(|_| 1.0 - rng.gen::<f64>()));
        let row = &mut transition[start..];
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }

    if params.noise_delta > 0.0 {
        for r in reward.iter_mut() {
            let eps = params.noise_delta * (1.0 - rng.gen::<f64>());
            let noisy = *r + eps;
            // The perturbation must survive rounding.
            *r = if noisy > *r { noisy } else { r.next_up() };
        }
    }

    let init_dist = vec![1.0 / s as f64; s];

    StochasticGame::from_parts(
        s,
        action_dims,
        params.gamma,
        transition,
        reward,
        params.noise_delta,
        params.horizon,
        init_dist,
        params.seed,
    )
}

impl StochasticGame {
    /// Builds a game from raw tensors and checks every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        num_states: usize,
        action_dims: Vec<usize>,
        gamma: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
        noise_delta: f64,
        horizon: usize,
        init_dist: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if num_states == 0 || action_dims.is_empty() || action_dims.contains(&0) {
            return Err(Error::param(format!(
                "need num_states >= 1 and positive action dims, got {num_states} and {action_dims:?}"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if !(noise_delta >= 0.0 && noise_delta.is_finite()) {
            return Err(Error::param(format!("noise_delta must be >= 0, got {noise_delta}")));
        }
        if horizon == 0 {
            return Err(Error::param("horizon must be >= 1"));
        }
        let num_joint = joint_action_count(&action_dims)?;
        let game = StochasticGame {
            num_states,
            action_dims,
            num_joint,
            gamma,
            transition,
            reward,
            noise_delta,
            horizon,
            init_dist,
            seed,
        };
        game.check_tensors()?;
        Ok(game)
    }

    fn check_tensors(&self) -> Result<()> {
        let (s_n, j_n) = (self.num_states, self.num_joint);
        if self.reward.len() != s_n * j_n {
            return Err(Error::param(format!(
                "reward tensor has {} entries, expected {}x{}",
                self.reward.len(),
                s_n,
                j_n
            )));
        }
        if self.transition.len() != s_n * j_n * s_n {
            return Err(Error::param(format!(
                "transition tensor has {} entries, expected {}x{}x{}",
                self.transition.len(),
                s_n,
                j_n,
                s_n
            )));
        }
        if let Some(k) = self.reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::param(format!(
                "reward[s={}][j={}] is not finite",
                k / j_n,
                k % j_n
            )));
        }
        for s in 0..s_n {
            for j in 0..j_n {
                check_distribution(self.transition_row(s, j))
                    .map_err(|m| Error::param(format!("transition[s={s}][j={j}]: {m}")))?;
            }
        }
        if self.init_dist.len() != s_n {
            return Err(Error::param(format!(
                "init distribution has {} entries, expected {s_n}",
                self.init_dist.len()
            )));
        }
        check_distribution(&self.init_dist)
            .map_err(|m| Error::param(format!("init distribution: {m}")))?;
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.action_dims.len()
    }

    pub fn action_dims(&self) -> &[usize] {
        &self.action_dims
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_joint
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise_delta(&self) -> f64 {
        self.noise_delta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }

    /// Full reward tensor, `[s * J + j]`.
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Full transition tensor, `[(s * J + j) * S + s']`.
    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    #[inline]
    pub fn reward(&self, state: usize, joint: usize) -> f64 {
        self.reward[state * self.num_joint + joint]
    }

    #[inline]
    pub fn transition_row(&self, state: usize, joint: usize) -> &[f64] {
        let start = (state * self.num_joint + joint) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Largest absolute reward.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    pub fn flatten(&self, action: &JointAction) -> Result<usize> {
        flatten_joint(action.actions(), &self.action_dims)
    }

    pub fn unflatten(&self, joint: usize) -> Result<JointAction> {
        unflatten_joint(joint, &self.action_dims)
    }

    /// Samples a state from the initial distribution.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.init_dist, rng)
    }

    /// Simulates one step. The horizon is tracked by the caller.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: &JointAction,
        rng: &mut R,
    ) -> Result<Transition> {
        if state >= self.num_states {
            return Err(Error::param(format!(
                "state {state} out of range 0..{}",
                self.num_states
            )));
        }
        let joint = self.flatten(action)?;
        let next_state = self.step_joint(state, joint, rng);
        Ok(Transition {
            state,
            agent_actions: action.clone(),
            reward: self.reward(state, joint),
            next_state,
            done: false,
        })
    }

    /// Next-state sampler on a pre-flattened, in-range joint index.
    #[inline]
    pub(crate) fn step_joint<R: Rng + ?Sized>(&self, state: usize, joint: usize, rng: &mut R) -> usize {
        sample_index(self.transition_row(state, joint), rng)
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the final cumulative sum: take the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub(crate) fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(k) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(format!("entry {k} = {} is not a probability", row[k]));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("row sums to {total}, not 1 (normalization error)"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

/// Metadata block of the game container, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameHeader {
    pub format_version: u32,
    pub rng_algorithm: String,
    pub seed: u64,
    pub num_states: usize,
    pub num_agents: usize,
    pub action_dims: Vec<usize>,
    pub gamma: f64,
    pub noise_delta: f64,
    pub horizon: usize,
}

impl StochasticGame {
    pub fn header(&self) -> GameHeader {
        GameHeader {
            format_version: GAME_FORMAT_VERSION,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: self.seed,
            num_states: self.num_states,
            num_agents: self.num_agents(),
            action_dims: self.action_dims.clone(),
            gamma: self.gamma,
            noise_delta: self.noise_delta,
            horizon: self.horizon,
        }
    }
}

/// Serializes a game:
///
/// ```text
/// "MA2QLGAM" | u32 version | u64 header_len | header JSON
/// section "INIT" [S]       | section "REWD" [S, J] | section "TRAN" [S, J, S]
/// "END\0"
/// ```
///
/// A section is a 4-byte tag, a u32 rank, one u64 per dimension, then the
/// entries as little-endian f64 in row-major order.
pub fn encode_game(game: &StochasticGame) -> Vec<u8> {
    let header = serde_json::to_vec(&game.header()).expect("header serializes");
    let mut out = Vec::with_capacity(64 + header.len() + 8 * (game.transition.len() + game.reward.len()));
    out.extend_from_slice(GAME_MAGIC);
    out.extend_from_slice(&GAME_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let (s, j) = (game.num_states, game.num_joint);
    write_section(&mut out, b"INIT", &[s], &game.init_dist);
    write_section(&mut out, b"REWD", &[s, j], &game.reward);
    write_section(&mut out, b"TRAN", &[s, j, s], &game.transition);
    out.extend_from_slice(b"END\0");
    out
}

fn write_section(out: &mut Vec<u8>, tag: &[u8; 4], dims: &[usize], data: &[f64]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::format(
                format!("byte {}", self.pos),
                format!("truncated while reading {what}"),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn section(&mut self, tag: &[u8; 4], expected: &[usize]) -> Result<Vec<f64>> {
        let name = String::from_utf8_lossy(tag).to_string();
        let at = self.pos;
        if self.take(4, &format!("{name} tag"))? != tag {
            return Err(Error::format(format!("byte {at}"), format!("expected section {name}")));
        }
        let rank = self.u32(&format!("{name} rank"))? as usize;
        if rank != expected.len() {
            return Err(Error::format(
                format!("section {name}"),
                format!("rank {rank}, expected {}", expected.len()),
            ));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64(&format!("{name} dims"))? as usize);
        }
        if dims != expected {
            return Err(Error::format(
                format!("section {name}"),
                format!("dimensions {dims:?} disagree with header {expected:?}"),
            ));
        }
        let count: usize = expected.iter().product();
        let raw = self.take(count * 8, &format!("{name} data"))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_game(bytes: &[u8]) -> Result<StochasticGame> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != GAME_MAGIC {
        return Err(Error::format("byte 0", "not a game file (bad magic)"));
    }
    let version = r.u32("format version")?;
    if version != GAME_FORMAT_VERSION {
        return Err(Error::format(
            "byte 8",
            format!("format version {version} unsupported (expected {GAME_FORMAT_VERSION})"),
        ));
    }
    let header_len = r.u64("header length")? as usize;
    let header_at = r.pos;
    let header: GameHeader = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::format(format!("header at byte {header_at}"), e.to_string()))?;
    if header.format_version != version {
        return Err(Error::format("header", "format_version disagrees with container"));
    }
    if header.rng_algorithm != RNG_ALGORITHM {
        return Err(Error::format(
            "header",
            format!("unknown rng_algorithm {:?}", header.rng_algorithm),
        ));
    }
    if header.action_dims.len() != header.num_agents {
        return Err(Error::format("header", "action_dims length differs from num_agents"));
    }
    let s = header.num_states;
    let j = joint_action_count(&header.action_dims)
        .map_err(|e| Error::format("header", e.to_string()))?;
    // Reject dimensions that cannot fit in the remaining bytes before allocating.
    let needed = s
        .checked_mul(j)
        .and_then(|x| x.checked_mul(s + 1))
        .and_then(|x| x.checked_add(s))
        .and_then(|x| x.checked_mul(8));
    if needed.is_none_or(|n| n > bytes.len()) {
        return Err(Error::format("header", "dimensions exceed file size (truncated?)"));
    }
    let init = r.section(b"INIT", &[s])?;
    let reward = r.section(b"REWD", &[s, j])?;
    let transition = r.section(b"TRAN", &[s, j, s])?;
    let end_at = r.pos;
    if r.take(4, "end marker")? != b"END\0" {
        return Err(Error::format(format!("byte {end_at}"), "missing end marker"));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!("byte {}", r.pos), "trailing bytes after end marker"));
    }
    StochasticGame::from_parts(
        s,
        header.action_dims,
        header.gamma,
        transition,
        reward,
        header.noise_delta,
        header.horizon,
        init,
        header.seed,
    )
    .map_err(|e| match e {
        Error::Parameter(m) => Error::format("tensors", m),
        other => other,
    })
}

/// Hex SHA-256 of the encoded game.
pub fn game_digest(game: &StochasticGame) -> String {
    hex::encode(Sha256::digest(encode_game(game)))
}

/// Writes the game atomically (temporary file, then rename).
pub fn save_game(game: &StochasticGame, path: &Path) -> Result<()> {
    write_atomic(path, &encode_game(game))
}

pub fn load_game(path: &Path) -> Result<StochasticGame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_game(&bytes).map_err(|e| match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
