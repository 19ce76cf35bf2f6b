//! Robust planning over interval model sets, plain planning on an estimated
//! model, and the two end-to-end learning pipelines.
//!
//! The minimum over the interval set is taken by robust backward induction
//! with a separate adversary at every step. Because the set is a product of
//! per-row boxes intersected with the simplex, this gives a lower bound on
//! the minimum over time-invariant models in the set.

use crate::collector::{
    collect_samples, estimate_quantiles, quantile_repetitions, quantiles_from_dataset, schedule_episodes, Budget,
    QuantileTable,
};
use crate::error::{Error, Result};
use crate::estimate::{
    build_generative_model, build_truncated_model, confidence_widths, contains, reward_widths, EstimatedModel,
    IntervalModelSet,
};
use crate::mdp::{FiniteMdp, Policy, TrajectoryDataset, PROB_TOL};
use crate::oracle::{argmax, dot};
use crate::sim::{GenerativeModel, RngStream};

/// States sorted by `values` ascending, ties by index.
fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order
}

fn box_bounds(center: &[f64], widths: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if center.len() != widths.len() {
        return Err(Error::Dimension("center and widths differ in length".into()));
    }
    let lo: Vec<f64> = center.iter().zip(widths).map(|(c, w)| (c - w).max(0.0)).collect();
    let hi: Vec<f64> = center.iter().zip(widths).map(|(c, w)| (c + w).min(1.0)).collect();
    let (sl, sh): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
    if sl > 1.0 + PROB_TOL || sh < 1.0 - PROB_TOL {
        return Err(Error::Infeasible { lower: sl, upper: sh });
    }
    Ok((lo, hi))
}

/// Fills mass from the lower bounds upward, visiting states in `order`.
fn fill(lo: Vec<f64>, hi: &[f64], order: &[usize]) -> Vec<f64> {
    let mut q = lo;
    let mut remaining = 1.0 - q.iter().sum::<f64>();
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let add = (hi[i] - q[i]).min(remaining);
        q[i] += add;
        remaining -= add;
    }
    q
}

/// The distribution in `{q : |q - center| <= widths} ∩ simplex` minimizing
/// `q . next_values`.
pub fn worst_case_row(center: &[f64], widths: &[f64], next_values: &[f64]) -> Result<Vec<f64>> {
    if next_values.len() != center.len() {
        return Err(Error::Dimension("values and center differ in length".into()));
    }
    let (lo, hi) = box_bounds(center, widths)?;
    Ok(fill(lo, &hi, &ascending_order(next_values)))
}

/// As [`worst_case_row`] but maximizing.
pub fn best_case_row(center: &[f64], widths: &[f64], next_values: &[f64]) -> Result<Vec<f64>> {
    let negated: Vec<f64> = next_values.iter().map(|v| -v).collect();
    worst_case_row(center, widths, &negated)
}

/// Per-step robust values and the actions that attain them.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustValueTable {
    /// `values[h][s]` for `h = 0..=H`.
    pub values: Vec<Vec<f64>>,
    /// `actions[h][s]` for `h = 0..H`.
    pub actions: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Adversary {
    Worst,
    Best,
}

struct Backup<'a> {
    set: &'a IntervalModelSet,
    rewards: Vec<f64>,
    adversary: Adversary,
}

impl<'a> Backup<'a> {
    fn order(&self, next: &[f64]) -> Vec<usize> {
        match self.adversary {
            Adversary::Worst => ascending_order(next),
            Adversary::Best => {
                let negated: Vec<f64> = next.iter().map(|v| -v).collect();
                ascending_order(&negated)
            }
        }
    }

    fn q(&self, s: usize, a: usize, next: &[f64], order: &[usize]) -> Result<f64> {
        let c = &self.set.center;
        let (lo, hi) = box_bounds(c.row(s, a), self.set.widths(s, a))?;
        let row = fill(lo, &hi, order);
        Ok(self.rewards[s * c.n_actions + a] + dot(&row, next))
    }

    fn initial(&self, v0: &[f64]) -> Result<f64> {
        let c = &self.set.center;
        let (lo, hi) = box_bounds(&c.initial, &self.set.initial_width)?;
        Ok(dot(&fill(lo, &hi, &self.order(v0)), v0))
    }

    fn run(&self, policy: Option<&Policy>) -> Result<RobustValueTable> {
        let c = &self.set.center;
        let (ns, na, h_max) = (c.n_states, c.n_actions, c.horizon);
        let mut values = vec![vec![0.0; ns]; h_max + 1];
        let mut actions = vec![vec![0; ns]; h_max];
        for h in (0..h_max).rev() {
            let order = self.order(&values[h + 1]);
            for s in 0..ns {
                let next = &values[h + 1];
                let (a, v) = match policy {
                    Some(p) => {
                        let a = p.action(h, s);
                        (a, self.q(s, a, next, &order)?)
                    }
                    None => {
                        let qs = (0..na).map(|a| self.q(s, a, next, &order)).collect::<Result<Vec<_>>>()?;
                        argmax(qs.into_iter())
                    }
                };
                values[h][s] = v;
                actions[h][s] = a;
            }
        }
        Ok(RobustValueTable { values, actions })
    }
}

fn check_policy(policy: &Policy, set: &IntervalModelSet) -> Result<()> {
    let c = &set.center;
    policy.validate(c.n_states, c.n_actions, c.horizon)
}

/// Robust per-step values of `policy` against the per-step worst case.
pub fn pessimistic_value_table(policy: &Policy, set: &IntervalModelSet) -> Result<RobustValueTable> {
    check_policy(policy, set)?;
    let b = Backup { set, rewards: set.center.reward.clone(), adversary: Adversary::Worst };
    b.run(Some(policy))
}

/// The pessimistic value of `policy`: the minimum over the set of its value,
/// with the adversary free to pick a different model at every step.
pub fn pessimistic_policy_value(policy: &Policy, set: &IntervalModelSet) -> Result<f64> {
    check_policy(policy, set)?;
    let b = Backup { set, rewards: set.center.reward.clone(), adversary: Adversary::Worst };
    let t = b.run(Some(policy))?;
    b.initial(&t.values[0])
}

/// Policy maximizing the pessimistic value, and that value.
pub fn pessimistic_plan(set: &IntervalModelSet) -> Result<(Policy, f64)> {
    let b = Backup { set, rewards: set.center.reward.clone(), adversary: Adversary::Worst };
    let t = b.run(None)?;
    let v = b.initial(&t.values[0])?;
    Ok((Policy::NonStationary(t.actions), v))
}

/// The largest value any policy attains over the set when each mean reward
/// may additionally be raised by `reward_width` (clipped to 1).
pub fn optimistic_value(set: &IntervalModelSet, reward_width: &[f64]) -> Result<f64> {
    let c = &set.center;
    if reward_width.len() != c.n_pairs() {
        return Err(Error::Dimension("one reward width per pair expected".into()));
    }
    let rewards = c.reward.iter().zip(reward_width).map(|(r, w)| (r + w).min(1.0)).collect();
    let b = Backup { set, rewards, adversary: Adversary::Best };
    let t = b.run(None)?;
    b.initial(&t.values[0])
}

/// Backward induction on the estimated model. Rows without samples
/// contribute no future value.
pub fn plan_empirical(model: &EstimatedModel) -> (Policy, f64) {
    let (ns, na, h_max) = (model.n_states, model.n_actions, model.horizon);
    let mut next = vec![0.0; ns];
    let mut maps = vec![vec![0; ns]; h_max];
    for h in (0..h_max).rev() {
        let cur: Vec<f64> = (0..ns)
            .map(|s| {
                let (a, q) = argmax((0..na).map(|a| model.mean_reward(s, a) + dot(model.row(s, a), &next)));
                maps[h][s] = a;
                q
            })
            .collect();
        next = cur;
    }
    (Policy::NonStationary(maps), dot(&model.initial, &next))
}

/// `2^66 (|S|+1)^(24(|S|+1)) ln(18|S|^2|A|/delta) |S|^7 |A|^5 / eps^5`.
pub fn theoretical_lists(n_states: usize, n_actions: usize, epsilon: f64, delta: f64) -> f64 {
    let (s, a) = (n_states as f64, n_actions as f64);
    2f64.powi(66)
        * (s + 1.0).powf(24.0 * (s + 1.0))
        * (18.0 * s * s * a / delta).ln()
        * s.powi(7)
        * a.powi(5)
        / epsilon.powi(5)
}

/// `eps / (32768 |S||A| (|S|+1)^(12(|S|+1)))`.
pub fn theoretical_eps_est(n_states: usize, n_actions: usize, epsilon: f64) -> f64 {
    let s = n_states as f64;
    epsilon / (32768.0 * s * n_actions as f64 * (s + 1.0).powf(12.0 * (s + 1.0)))
}

/// `2^29 |S|^5 |A|^3 H / eps^3`.
pub fn theoretical_generative_samples(n_states: usize, n_actions: usize, horizon: usize, epsilon: f64) -> f64 {
    2f64.powi(29) * (n_states as f64).powi(5) * (n_actions as f64).powi(3) * horizon as f64 / epsilon.powi(3)
}

fn scaled_count(theoretical: f64, scale: f64) -> u64 {
    (scale * theoretical).ceil().clamp(1.0, u64::MAX as f64) as u64
}

/// Knobs for the episodic pipeline.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Multiplies every theoretical repetition count.
    pub scale: f64,
    /// Replaces the theoretical percentile when set.
    pub eps_est: Option<f64>,
    /// Read the quantiles off the collected lists instead of a separate phase.
    pub reuse_phase_samples: bool,
    pub budget: Budget,
}

impl PipelineParams {
    pub fn new(epsilon: f64, delta: f64, scale: f64) -> Self {
        Self { epsilon, delta, scale, eps_est: None, reuse_phase_samples: false, budget: Budget::default() }
    }

    fn validate(&self) -> Result<()> {
        for (name, x) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::Argument(format!("{name} = {x} must lie in (0, 1]")));
            }
        }
        if !(self.scale > 0.0) {
            return Err(Error::Argument(format!("scale {} must be positive", self.scale)));
        }
        if let Some(e) = self.eps_est {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Argument(format!("eps_est = {e} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PessimisticDiagnostics {
    pub theoretical_lists: f64,
    pub lists: u64,
    pub theoretical_eps_est: f64,
    pub eps_est: f64,
    pub theoretical_quantile_repetitions: f64,
    pub quantile_repetitions: u64,
    pub quantile_episodes: u64,
    pub collection_episodes: u64,
    pub quantiles: QuantileTable,
    pub model_set: IntervalModelSet,
    /// Pessimistic value of the returned policy.
    pub pessimistic_value: f64,
    /// Best value over the set with rewards raised by their half-widths.
    pub optimistic_value: f64,
    /// `optimistic_value - pessimistic_value`, an upper bound on the
    /// returned policy's suboptimality whenever the true model is in the set
    /// and every mean reward is within its half-width.
    pub epsilon_hat: f64,
    pub true_model_contained: bool,
}

impl PessimisticDiagnostics {
    pub fn episodes(&self) -> u64 {
        self.quantile_episodes + self.collection_episodes
    }
}

/// Quantile estimation, sample collection, truncated estimation, interval
/// set and pessimistic planning, end to end against the simulated `mdp`.
pub fn run_pessimistic_pipeline(
    mdp: &FiniteMdp,
    params: &PipelineParams,
    rng: &RngStream,
) -> Result<(Policy, PessimisticDiagnostics)> {
    params.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let th_lists = theoretical_lists(ns, na, params.epsilon, params.delta);
    let lists = scaled_count(th_lists, params.scale);
    let th_eps = theoretical_eps_est(ns, na, params.epsilon);
    let eps_est = params.eps_est.unwrap_or(th_eps);
    let (reps, th_reps) = quantile_repetitions(ns, na, eps_est, params.delta, params.scale);
    let reps = if params.reuse_phase_samples { 0 } else { reps };
    let per_list = schedule_episodes(mdp, 1).unwrap_or(u128::MAX);
    let required = per_list.saturating_mul(lists as u128 + reps as u128);
    params.budget.check_episodes(required)?;

    let unlimited = Budget::unlimited();
    let data = pipeline_dataset(mdp, params, rng)?;
    let quantiles = if params.reuse_phase_samples {
        quantiles_from_dataset(&data, eps_est, params.delta)?
    } else {
        estimate_quantiles(mdp, eps_est, params.delta, params.scale, &rng.substream(1), &unlimited)?
    };
    let model = build_truncated_model(&data, &quantiles)?;
    let set = confidence_widths(&model, &quantiles, lists, eps_est, params.delta)?;
    let (policy, pessimistic_value) = pessimistic_plan(&set)?;
    let optimistic = optimistic_value(&set, &reward_widths(&quantiles, lists, eps_est, params.delta)?)?;
    let diagnostics = PessimisticDiagnostics {
        theoretical_lists: th_lists,
        lists,
        theoretical_eps_est: th_eps,
        eps_est,
        theoretical_quantile_repetitions: th_reps,
        quantile_repetitions: reps,
        quantile_episodes: (per_list * reps as u128) as u64,
        collection_episodes: (per_list * lists as u128) as u64,
        true_model_contained: contains(&set, mdp)?,
        quantiles,
        model_set: set,
        pessimistic_value,
        optimistic_value: optimistic,
        epsilon_hat: (optimistic - pessimistic_value).max(0.0),
    };
    Ok((policy, diagnostics))
}

/// The lists collected by [`run_pessimistic_pipeline`] under the same
/// parameters and stream.
pub fn pipeline_dataset(mdp: &FiniteMdp, params: &PipelineParams, rng: &RngStream) -> Result<TrajectoryDataset> {
    params.validate()?;
    let lists = scaled_count(theoretical_lists(mdp.n_states(), mdp.n_actions(), params.epsilon, params.delta), params.scale);
    let per_list = schedule_episodes(mdp, 1).unwrap_or(u128::MAX);
    params.budget.check_episodes(per_list.saturating_mul(lists as u128))?;
    let mut data = collect_samples(mdp, lists, &rng.substream(2), &Budget::unlimited())?;
    data.scale = params.scale;
    Ok(data)
}

/// Per-pair sample count for the generative pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenerativeSamples {
    /// `scale` times the theoretical count.
    Scaled(f64),
    Fixed(u64),
}

#[derive(Debug, Clone)]
pub struct GenerativeDiagnostics {
    pub theoretical_samples: f64,
    pub samples: u64,
    pub queries: u64,
    /// `queries / H`.
    pub batches: f64,
    pub batches_started: u64,
    /// Value of the returned policy on the estimated model.
    pub planned_value: f64,
    /// `sqrt(ln(6|S|/delta) / N)`, the initial-distribution accuracy at level `delta`.
    pub initial_radius: f64,
    pub model: EstimatedModel,
}

/// Draw `N` samples per pair and `N` initial states, then plan on the
/// estimated model.
pub fn run_generative_pipeline(
    mdp: &FiniteMdp,
    epsilon: f64,
    delta: f64,
    samples: GenerativeSamples,
    budget: &Budget,
    rng: &RngStream,
) -> Result<(Policy, GenerativeDiagnostics)> {
    for (name, x) in [("epsilon", epsilon), ("delta", delta)] {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Argument(format!("{name} = {x} must lie in (0, 1]")));
        }
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let theoretical = theoretical_generative_samples(ns, na, mdp.horizon(), epsilon);
    let n = match samples {
        GenerativeSamples::Scaled(scale) if scale > 0.0 => scaled_count(theoretical, scale),
        GenerativeSamples::Fixed(n) if n > 0 => n,
        _ => return Err(Error::Argument("sample count and scale must be positive".into())),
    };
    budget.check_queries((ns * na + 1) as u128 * n as u128)?;
    let mut env = GenerativeModel::new(mdp, rng.clone());
    let model = build_generative_model(&mut env, mdp, n)?;
    let (policy, planned_value) = plan_empirical(&model);
    let diagnostics = GenerativeDiagnostics {
        theoretical_samples: theoretical,
        samples: n,
        queries: env.queries(),
        batches: env.batches(),
        batches_started: env.batches_started(),
        planned_value,
        initial_radius: ((6.0 * ns as f64 / delta).ln() / n as f64).sqrt(),
        model,
    };
    Ok((policy, diagnostics))
}
