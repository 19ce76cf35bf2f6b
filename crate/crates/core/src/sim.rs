//! Seeded access to an MDP: episodic sessions and a generative model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Policy, Step, Trajectory};
use crate::oracle::StateActionPath;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A reproducible random stream identified by `(seed, stream)`.
///
/// Backed by ChaCha8 keyed with `seed` and positioned on stream `stream`, so
/// identical pairs reproduce identical draws regardless of thread or platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, draws: 0, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of uniforms drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// An independent stream keyed by `index`, derived from this one's identity
    /// (not its position).
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream ^ splitmix64(index)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.gen::<f64>()
    }

    /// Inverse-CDF draw over `probs` in stored order.
    #[inline]
    pub fn sample_index(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut cum = 0.0;
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last = i;
                if u < cum {
                    return i;
                }
            }
        }
        last
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[inline]
fn draw_step(mdp: &FiniteMdp, rng: &mut RngStream, s: usize, a: usize) -> (f64, usize) {
    let dist = mdp.reward(s, a);
    let r = dist.values()[rng.sample_index(dist.probs())];
    let next = rng.sample_index(mdp.row(s, a));
    (r, next)
}

/// Episodic access: every episode starts from `mu` and runs `H` steps.
#[derive(Debug)]
pub struct EpisodicSession<'a> {
    mdp: &'a FiniteMdp,
    rng: RngStream,
    state: usize,
    step: usize,
    active: bool,
    episodes: u64,
}

impl<'a> EpisodicSession<'a> {
    pub fn new(mdp: &'a FiniteMdp, rng: RngStream) -> Self {
        Self { mdp, rng, state: 0, step: 0, active: false, episodes: 0 }
    }

    pub fn mdp(&self) -> &'a FiniteMdp {
        self.mdp
    }

    /// Draws `s_0 ~ mu` and starts a new episode.
    pub fn reset(&mut self) -> Result<usize> {
        if self.active && self.step < self.mdp.horizon() {
            return Err(Error::MidEpisode { step: self.step, horizon: self.mdp.horizon() });
        }
        self.state = self.rng.sample_index(self.mdp.initial());
        self.step = 0;
        self.active = true;
        self.episodes += 1;
        Ok(self.state)
    }

    /// Takes action `a`, returning the reward and the next state.
    pub fn step(&mut self, a: usize) -> Result<(f64, usize)> {
        if !self.active || self.step >= self.mdp.horizon() {
            return Err(Error::EpisodeOver);
        }
        if a >= self.mdp.n_actions() {
            return Err(Error::Argument(format!("action {a} out of range")));
        }
        let (r, next) = draw_step(self.mdp, &mut self.rng, self.state, a);
        self.state = next;
        self.step += 1;
        Ok((r, next))
    }

    /// Abandons the current episode. It has already been counted.
    pub fn end_episode(&mut self) {
        self.step = self.mdp.horizon();
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Current step `h` within the episode.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// One full episode under `policy`.
    pub fn rollout(&mut self, policy: &Policy) -> Result<Trajectory> {
        policy.validate_for(self.mdp)?;
        let mut s = self.reset()?;
        let mut steps = Vec::with_capacity(self.mdp.horizon());
        for h in 0..self.mdp.horizon() {
            let a = policy.action(h, s);
            let (reward, next) = self.step(a)?;
            steps.push(Step { state: s, action: a, reward });
            s = next;
        }
        Ok(Trajectory { steps, terminal: s })
    }
}

/// Free-function form of [`EpisodicSession::rollout`].
pub fn rollout(session: &mut EpisodicSession<'_>, policy: &Policy) -> Result<Trajectory> {
    session.rollout(policy)
}

/// Samples a state-action path under `policy` without drawing rewards.
/// Used by Monte Carlo checks that only look at visitation counts.
pub fn sample_path(mdp: &FiniteMdp, policy: &Policy, rng: &mut RngStream) -> StateActionPath {
    let mut s = rng.sample_index(mdp.initial());
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let a = policy.action(h, s);
        steps.push((s, a));
        s = rng.sample_index(mdp.row(s, a));
    }
    StateActionPath { steps, terminal: s }
}

/// Generative access: i.i.d. draws from `R(s,a)` and `P(s,a)` for any pair.
#[derive(Debug)]
pub struct GenerativeModel<'a> {
    mdp: &'a FiniteMdp,
    rng: RngStream,
    queries: u64,
}

impl<'a> GenerativeModel<'a> {
    pub fn new(mdp: &'a FiniteMdp, rng: RngStream) -> Self {
        Self { mdp, rng, queries: 0 }
    }

    pub fn query(&mut self, s: usize, a: usize) -> (f64, usize) {
        self.queries += 1;
        draw_step(self.mdp, &mut self.rng, s, a)
    }

    /// One draw from `mu`, counted as a query.
    pub fn sample_initial(&mut self) -> usize {
        self.queries += 1;
        self.rng.sample_index(self.mdp.initial())
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Queries in units of `H`.
    pub fn batches(&self) -> f64 {
        self.queries as f64 / self.mdp.horizon() as f64
    }

    /// Whole batches started, counting a partial batch as one.
    pub fn batches_started(&self) -> u64 {
        self.queries.div_ceil(self.mdp.horizon() as u64)
    }
}

/// Generative query as a free function over an explicit stream.
pub fn generative_query(mdp: &FiniteMdp, s: usize, a: usize, rng: &mut RngStream) -> (f64, usize) {
    draw_step(mdp, rng, s, a)
}
