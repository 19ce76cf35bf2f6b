//! Estimated models and the interval sets around them.

use crate::collector::{QuantileTable, UNTRUNCATED};
use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, TrajectoryDataset, PROB_TOL};
use crate::sim::GenerativeModel;

/// Where an estimated model came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    TruncatedEpisodic,
    Generative,
    /// Copied from a known model.
    Exact,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TruncatedEpisodic => "truncated-episodic",
            Self::Generative => "generative",
            Self::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "truncated-episodic" => Some(Self::TruncatedEpisodic),
            "generative" => Some(Self::Generative),
            "exact" => Some(Self::Exact),
            _ => None,
        }
    }
}

/// Empirical transition rows, mean rewards, initial distribution and the
/// number of samples behind each row. Rows with no samples are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// Flat `(s * A + a) * S + s'`.
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub initial: Vec<f64>,
    pub counts: Vec<u64>,
    pub provenance: Provenance,
}

impl EstimatedModel {
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let k = (s * self.n_actions + a) * self.n_states;
        &self.transition[k..k + self.n_states]
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    /// The known model's rows, mean rewards and initial distribution.
    pub fn from_mdp(mdp: &FiniteMdp) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        Self {
            n_states: ns,
            n_actions: na,
            horizon: mdp.horizon(),
            transition: mdp.transition().to_vec(),
            reward: (0..ns * na).map(|k| mdp.mean_reward(k / na, k % na)).collect(),
            initial: mdp.initial().to_vec(),
            counts: vec![0; ns * na],
            provenance: Provenance::Exact,
        }
    }

    /// Checks shapes, ranges and row sums.
    pub fn validate(&self) -> Result<()> {
        let (ns, np) = (self.n_states, self.n_pairs());
        if self.transition.len() != np * ns || self.reward.len() != np || self.initial.len() != ns || self.counts.len() != np {
            return Err(Error::Dimension("estimated model tables have inconsistent sizes".into()));
        }
        for k in 0..np {
            let row = &self.transition[k * ns..(k + 1) * ns];
            if row.iter().any(|&p| !(0.0..=1.0 + PROB_TOL).contains(&p)) {
                return Err(Error::Invariant(format!("row ({}, {}) has entries outside [0, 1]", k / self.n_actions, k % self.n_actions)));
            }
            let sum: f64 = row.iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Invariant(format!(
                    "row ({}, {}) sums to {sum}",
                    k / self.n_actions,
                    k % self.n_actions
                )));
            }
            if !(0.0..=1.0).contains(&self.reward[k]) {
                return Err(Error::Invariant(format!("mean reward {} outside [0, 1]", self.reward[k])));
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Invariant(format!("initial distribution sums to {sum}")));
        }
        Ok(())
    }

    /// `mdp` with its transitions and initial distribution replaced by this
    /// model's, and each reward replaced by a point mass at the estimate.
    /// Fails if some row has no samples.
    pub fn to_mdp(&self) -> Result<FiniteMdp> {
        let rewards = self
            .reward
            .iter()
            .map(|&r| crate::mdp::RewardDist::constant(r))
            .collect::<Result<Vec<_>>>()?;
        FiniteMdp::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            self.transition.clone(),
            rewards,
            self.initial.clone(),
        )
    }
}

fn check_dims(data: &TrajectoryDataset, table: &QuantileTable) -> Result<()> {
    if data.n_states != table.n_states || data.n_actions != table.n_actions {
        return Err(Error::Dimension(format!(
            "dataset is {}x{}, quantile table is {}x{}",
            data.n_states, data.n_actions, table.n_states, table.n_actions
        )));
    }
    if data.lists.is_empty() {
        return Err(Error::Argument("dataset has no lists".into()));
    }
    Ok(())
}

/// Truncated estimators: within each list, only the first `m(s, a)`
/// occurrences of each pair are counted. The initial distribution is read
/// from the state of tuple 0 of every list.
pub fn build_truncated_model(data: &TrajectoryDataset, table: &QuantileTable) -> Result<EstimatedModel> {
    check_dims(data, table)?;
    let (ns, na) = (data.n_states, data.n_actions);
    let np = ns * na;
    let mut next_counts = vec![0u64; np * ns];
    let mut reward_sum = vec![0.0; np];
    let mut counts = vec![0u64; np];
    let mut initial = vec![0.0; ns];
    let mut seen = vec![0u64; np];
    for list in &data.lists {
        seen.iter_mut().for_each(|x| *x = 0);
        if let Some(first) = list.first() {
            initial[first.state] += 1.0;
        }
        for x in list {
            let k = x.state * na + x.action;
            let cap = table.values()[k];
            if seen[k] < cap {
                counts[k] += 1;
                next_counts[k * ns + x.next] += 1;
                reward_sum[k] += x.reward;
            }
            seen[k] += 1;
        }
    }
    let n = data.lists.len() as f64;
    initial.iter_mut().for_each(|p| *p /= n);
    Ok(finish(ns, na, data.horizon, next_counts, reward_sum, counts, initial, Provenance::TruncatedEpisodic))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ns: usize,
    na: usize,
    horizon: usize,
    next_counts: Vec<u64>,
    reward_sum: Vec<f64>,
    counts: Vec<u64>,
    initial: Vec<f64>,
    provenance: Provenance,
) -> EstimatedModel {
    let transition = next_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / counts[i / ns].max(1) as f64)
        .collect();
    let reward = reward_sum.iter().zip(&counts).map(|(r, &c)| (r / c.max(1) as f64).clamp(0.0, 1.0)).collect();
    EstimatedModel { n_states: ns, n_actions: na, horizon, transition, reward, initial, counts, provenance }
}

/// `n` generative draws per pair (row-major), then `n` draws from `mu`.
/// Returns the model and the number of queries spent.
pub fn build_generative_model(env: &mut GenerativeModel<'_>, mdp: &FiniteMdp, n: u64) -> Result<EstimatedModel> {
    if n == 0 {
        return Err(Error::Argument("need at least one sample per pair".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let np = ns * na;
    let mut next_counts = vec![0u64; np * ns];
    let mut reward_sum = vec![0.0; np];
    for s in 0..ns {
        for a in 0..na {
            let k = s * na + a;
            for _ in 0..n {
                let (r, next) = env.query(s, a);
                next_counts[k * ns + next] += 1;
                reward_sum[k] += r;
            }
        }
    }
    let mut initial = vec![0.0; ns];
    for _ in 0..n {
        initial[env.sample_initial()] += 1.0;
    }
    initial.iter_mut().for_each(|p| *p /= n as f64);
    Ok(finish(ns, na, mdp.horizon(), next_counts, reward_sum, vec![n; np], initial, Provenance::Generative))
}

/// An estimated model with per-entry half-widths on its transitions and
/// initial distribution. Rewards are fixed at the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalModelSet {
    pub center: EstimatedModel,
    /// Same layout as `center.transition`.
    pub transition_width: Vec<f64>,
    pub initial_width: Vec<f64>,
}

impl IntervalModelSet {
    pub fn zero_width(center: EstimatedModel) -> Self {
        let transition_width = vec![0.0; center.transition.len()];
        let initial_width = vec![0.0; center.n_states];
        Self { center, transition_width, initial_width }
    }

    pub fn widths(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.center.n_states;
        let k = (s * self.center.n_actions + a) * ns;
        &self.transition_width[k..k + ns]
    }

    pub fn validate(&self) -> Result<()> {
        self.center.validate()?;
        if self.transition_width.len() != self.center.transition.len() || self.initial_width.len() != self.center.n_states {
            return Err(Error::Dimension("width tables do not match the center".into()));
        }
        if self.transition_width.iter().chain(&self.initial_width).any(|&w| !(w >= 0.0)) {
            return Err(Error::Invariant("widths must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `ln(18 |S|^2 |A| / delta)`.
pub fn transition_log_term(n_states: usize, n_actions: usize, delta: f64) -> f64 {
    (18.0 * (n_states * n_states * n_actions) as f64 / delta).ln()
}

/// Transition half-width for one entry:
/// `max(512 L / (m N eps), 32 sqrt(p L / (m N eps)))` with
/// `L = ln(18 |S|^2 |A| / delta)`. A zero `m` gives the full unit width.
pub fn transition_half_width(p_hat: f64, m: u64, n: u64, eps_est: f64, log_term: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m == UNTRUNCATED {
        return 0.0;
    }
    let denom = m as f64 * n as f64 * eps_est;
    (512.0 * log_term / denom).max(32.0 * (p_hat * log_term / denom).sqrt())
}

/// `sqrt(ln(18 |S| / delta) / N)`.
pub fn initial_half_width(n_states: usize, n: u64, delta: f64) -> f64 {
    ((18.0 * n_states as f64 / delta).ln() / n as f64).sqrt()
}

/// Reward half-width with the second moment bounded by one:
/// `8 sqrt(L / (m N eps)) + 8 L / (m N eps)` with `L = ln(18 |S||A| / delta)`,
/// or 1 when `m = 0`.
pub fn reward_half_width(n_states: usize, n_actions: usize, m: u64, n: u64, eps_est: f64, delta: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m == UNTRUNCATED {
        return 0.0;
    }
    let log_term = (18.0 * (n_states * n_actions) as f64 / delta).ln();
    let x = log_term / (m as f64 * n as f64 * eps_est);
    (8.0 * x.sqrt() + 8.0 * x).min(1.0)
}

fn check_width_args(n: u64, eps_est: f64, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("N must be positive".into()));
    }
    for (name, x) in [("eps_est", eps_est), ("delta", delta)] {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Argument(format!("{name} = {x} must lie in (0, 1]")));
        }
    }
    Ok(())
}

/// Interval set around `model` using the truncation levels in `table`, the
/// number of lists `n`, the percentile `eps_est` and failure probability `delta`.
pub fn confidence_widths(
    model: &EstimatedModel,
    table: &QuantileTable,
    n: u64,
    eps_est: f64,
    delta: f64,
) -> Result<IntervalModelSet> {
    check_width_args(n, eps_est, delta)?;
    if table.n_states != model.n_states || table.n_actions != model.n_actions {
        return Err(Error::Dimension("quantile table does not match the model".into()));
    }
    let ns = model.n_states;
    let log_term = transition_log_term(ns, model.n_actions, delta);
    let transition_width = model
        .transition
        .iter()
        .enumerate()
        .map(|(i, &p)| transition_half_width(p, table.values()[i / ns], n, eps_est, log_term))
        .collect();
    let w = initial_half_width(ns, n, delta);
    Ok(IntervalModelSet { center: model.clone(), transition_width, initial_width: vec![w; ns] })
}

/// Per-pair reward half-widths matching [`confidence_widths`].
pub fn reward_widths(table: &QuantileTable, n: u64, eps_est: f64, delta: f64) -> Result<Vec<f64>> {
    check_width_args(n, eps_est, delta)?;
    Ok(table
        .values()
        .iter()
        .map(|&m| reward_half_width(table.n_states, table.n_actions, m, n, eps_est, delta))
        .collect())
}

/// Whether `mdp`'s transitions and initial distribution lie inside the set.
/// Rewards are not compared.
pub fn contains(set: &IntervalModelSet, mdp: &FiniteMdp) -> Result<bool> {
    let c = &set.center;
    if (c.n_states, c.n_actions) != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Dimension("model and set differ in size".into()));
    }
    let inside = |x: f64, center: f64, w: f64| (x - center).abs() <= w + PROB_TOL;
    let rows = mdp
        .transition()
        .iter()
        .zip(&c.transition)
        .zip(&set.transition_width)
        .all(|((&p, &q), &w)| inside(p, q, w));
    let init = mdp
        .initial()
        .iter()
        .zip(&c.initial)
        .zip(&set.initial_width)
        .all(|((&p, &q), &w)| inside(p, q, w));
    Ok(rows && init)
}
