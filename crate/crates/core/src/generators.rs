//! Named MDP families used by the experiment harness and the test corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, MarkovChain, RewardDist};

/// Two states `s = 0`, `s' = 1`, two actions. At `s`, action 0 loops with
/// reward `1/H` and action 1 moves to `s'` with reward 1. `s'` is absorbing
/// with zero reward. Starts at `s`.
pub fn twostate_exit(horizon: usize) -> Result<FiniteMdp> {
    let h = horizon as f64;
    let transition = vec![
        1.0, 0.0, // (s, stay)
        0.0, 1.0, // (s, exit)
        0.0, 1.0, // (s', 0)
        0.0, 1.0, // (s', 1)
    ];
    let reward = vec![
        RewardDist::constant(1.0 / h)?,
        RewardDist::constant(1.0)?,
        RewardDist::zero(),
        RewardDist::zero(),
    ];
    FiniteMdp::new(2, 2, horizon, transition, reward, vec![1.0, 0.0])
}

/// Deterministic chain: action 0 advances one state (the last state is
/// absorbing), action 1 returns to state 0. Every action taken in the last
/// state pays `1/H`.
pub fn chain(n_states: usize, horizon: usize) -> Result<FiniteMdp> {
    if n_states == 0 {
        return Err(Error::Argument("chain needs at least one state".into()));
    }
    let mut transition = vec![0.0; n_states * 2 * n_states];
    let mut reward = Vec::with_capacity(n_states * 2);
    for s in 0..n_states {
        let advance = (s + 1).min(n_states - 1);
        transition[(s * 2) * n_states + advance] = 1.0;
        transition[(s * 2 + 1) * n_states] = 1.0;
        let r = if s + 1 == n_states { 1.0 / horizon as f64 } else { 0.0 };
        reward.push(RewardDist::constant(r)?);
        reward.push(RewardDist::constant(r)?);
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    FiniteMdp::new(n_states, 2, horizon, transition, reward, initial)
}

/// Two states, two actions. Action 0 flips a fair coin for the next state,
/// action 1 stays put. Being in state 1 pays `1/H`. Starts in state 0.
pub fn coinflip(horizon: usize) -> Result<FiniteMdp> {
    let r = RewardDist::constant(1.0 / horizon as f64)?;
    let transition = vec![
        0.5, 0.5, //
        1.0, 0.0, //
        0.5, 0.5, //
        0.0, 1.0,
    ];
    let reward = vec![RewardDist::zero(), RewardDist::zero(), r.clone(), r];
    FiniteMdp::new(2, 2, horizon, transition, reward, vec![1.0, 0.0])
}

fn random_simplex(rng: &mut impl Rng, n: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if sparsity > 0.0 && rng.gen::<f64>() < sparsity {
                    0.0
                } else {
                    -(1.0 - rng.gen::<f64>()).ln()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Knobs for [`random_mdp`].
#[derive(Debug, Clone, Copy)]
pub struct RandomMdpOptions {
    /// Probability that any individual transition entry is zeroed.
    pub sparsity: f64,
    /// Largest per-step reward value. `1/H` keeps the total reward bounded by one.
    pub reward_cap: f64,
    /// Draw the initial distribution at random instead of a point mass at state 0.
    pub random_initial: bool,
}

impl RandomMdpOptions {
    pub fn dense(horizon: usize) -> Self {
        Self { sparsity: 0.0, reward_cap: 1.0 / horizon as f64, random_initial: true }
    }
}

pub fn random_mdp(
    rng: &mut impl Rng,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    opts: RandomMdpOptions,
) -> Result<FiniteMdp> {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states * n_actions {
        transition.extend(random_simplex(rng, n_states, opts.sparsity));
        let high = opts.reward_cap * rng.gen::<f64>();
        let p: f64 = rng.gen();
        reward.push(RewardDist::new(vec![0.0, high], vec![1.0 - p, p])?);
    }
    let initial = if opts.random_initial {
        random_simplex(rng, n_states, opts.sparsity)
    } else {
        let mut v = vec![0.0; n_states];
        v[0] = 1.0;
        v
    };
    FiniteMdp::new(n_states, n_actions, horizon, transition, reward, initial)
}

/// Dense random MDP whose per-step rewards never exceed `1/H`.
pub fn random_dense(n_states: usize, n_actions: usize, horizon: usize, seed: u64) -> Result<FiniteMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mdp(&mut rng, n_states, n_actions, horizon, RandomMdpOptions::dense(horizon))
}

pub fn random_chain(rng: &mut impl Rng, n_states: usize, sparsity: f64) -> Result<MarkovChain> {
    let mut transition = Vec::with_capacity(n_states * n_states);
    for _ in 0..n_states {
        transition.extend(random_simplex(rng, n_states, sparsity));
    }
    let initial = random_simplex(rng, n_states, sparsity);
    MarkovChain::new(n_states, transition, initial)
}

/// A generator named on the command line or in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedMdp {
    TwoStateExit,
    RandomDense { states: usize, actions: usize, seed: u64 },
    Chain { states: usize },
    Coinflip,
}

impl NamedMdp {
    /// Accepts `twostate-exit`, `random-dense(S,A)`, `random-dense(S,A,seed)`,
    /// `chain(S)` and `coinflip`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, args) = match spec.find('(') {
            Some(i) if spec.ends_with(')') => {
                let args: std::result::Result<Vec<u64>, _> = spec[i + 1..spec.len() - 1]
                    .split(',')
                    .map(|x| x.trim().parse::<u64>())
                    .collect();
                let args = args.map_err(|e| Error::Argument(format!("generator `{spec}`: {e}")))?;
                (&spec[..i], args)
            }
            _ => (spec, Vec::new()),
        };
        let bad = || Error::Argument(format!("unknown or malformed generator `{spec}`"));
        match (name, args.as_slice()) {
            ("twostate-exit", []) => Ok(Self::TwoStateExit),
            ("coinflip", []) => Ok(Self::Coinflip),
            ("chain", [s]) if *s > 0 => Ok(Self::Chain { states: *s as usize }),
            ("random-dense", [s, a]) if *s > 0 && *a > 0 => {
                Ok(Self::RandomDense { states: *s as usize, actions: *a as usize, seed: 0 })
            }
            ("random-dense", [s, a, seed]) if *s > 0 && *a > 0 => {
                Ok(Self::RandomDense { states: *s as usize, actions: *a as usize, seed: *seed })
            }
            _ => Err(bad()),
        }
    }

    pub fn build(&self, horizon: usize) -> Result<FiniteMdp> {
        match *self {
            Self::TwoStateExit => twostate_exit(horizon),
            Self::RandomDense { states, actions, seed } => random_dense(states, actions, horizon, seed),
            Self::Chain { states } => chain(states, horizon),
            Self::Coinflip => coinflip(horizon),
        }
    }
}

impl std::fmt::Display for NamedMdp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TwoStateExit => write!(f, "twostate-exit"),
            Self::RandomDense { states, actions, seed } => write!(f, "random-dense({states},{actions},{seed})"),
            Self::Chain { states } => write!(f, "chain({states})"),
            Self::Coinflip => write!(f, "coinflip"),
        }
    }
}
