//! Exact computations on small instances: finite-horizon and discounted
//! values, optimal policies, reaching probabilities, trajectory probabilities
//! and visitation-count distributions.
//!
//! These are the ground truth every sampled procedure is checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{checked_pow, enumerate_stationary_policies, induce_chain, FiniteMdp, MarkovChain, Policy};

/// Two action values closer than this are treated as tied; ties go to the
/// lowest action index.
pub const TIE_TOL: f64 = 1e-12;

/// Largest step count accepted by [`reach_probability`].
pub const MAX_REACH_STEPS: usize = 10_000;

/// Slack allowed when comparing a tail probability against a percentile.
pub const QUANTILE_TOL: f64 = 1e-12;

/// `V_h(s)` for `h = 0..=H` under `policy`.
pub fn step_values(mdp: &FiniteMdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    policy.validate_for(mdp)?;
    let (ns, h_max) = (mdp.n_states(), mdp.horizon());
    let mut v = vec![vec![0.0; ns]; h_max + 1];
    for h in (0..h_max).rev() {
        let (head, tail) = v.split_at_mut(h + 1);
        let next = &tail[0];
        for (s, out) in head[h].iter_mut().enumerate() {
            let a = policy.action(h, s);
            *out = mdp.mean_reward(s, a) + dot(mdp.row(s, a), next);
        }
    }
    Ok(v)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `V^pi_{M,H} = mu . V_0`.
pub fn finite_horizon_value(mdp: &FiniteMdp, policy: &Policy) -> Result<f64> {
    let v = step_values(mdp, policy)?;
    Ok(dot(mdp.initial(), &v[0]))
}

/// Backward induction with a max over actions.
pub fn optimal_nonstationary(mdp: &FiniteMdp) -> (Policy, f64) {
    let (ns, na, h_max) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut next = vec![0.0; ns];
    let mut maps = vec![vec![0usize; ns]; h_max];
    for h in (0..h_max).rev() {
        let mut cur = vec![0.0; ns];
        for s in 0..ns {
            let (a, q) = argmax((0..na).map(|a| mdp.mean_reward(s, a) + dot(mdp.row(s, a), &next)));
            maps[h][s] = a;
            cur[s] = q;
        }
        next = cur;
    }
    (Policy::NonStationary(maps), dot(mdp.initial(), &next))
}

/// Index and value of the maximum with lowest-index tie-breaking.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, q) in values.enumerate() {
        if q > best.1 + TIE_TOL {
            best = (i, q);
        }
    }
    best
}

/// Best stationary policy by exhaustive enumeration.
pub fn best_stationary(mdp: &FiniteMdp, cap: u64) -> Result<(Policy, f64)> {
    let policies = enumerate_stationary_policies(mdp, cap)?;
    let values = policies
        .iter()
        .map(|p| finite_horizon_value(mdp, p))
        .collect::<Result<Vec<_>>>()?;
    let (i, v) = argmax(values.into_iter());
    Ok((policies[i].clone(), v))
}

/// Per-state discounted values of a stationary policy from `v = r + gamma P v`.
pub fn discounted_state_values(mdp: &FiniteMdp, policy: &Policy, gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("discount {gamma} outside [0,1)")));
    }
    let chain = induce_chain(mdp, policy)?;
    let Policy::Stationary(map) = policy else { unreachable!() };
    let ns = mdp.n_states();
    let a = DMatrix::from_fn(ns, ns, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * chain.p(i, j)
    });
    let r = DVector::from_fn(ns, |s, _| mdp.mean_reward(s, map[s]));
    let v = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Singular("I - gamma P^pi is singular".into()))?;
    Ok(v.iter().copied().collect())
}

/// `mu . v` with `v` the discounted state values.
pub fn discounted_value(mdp: &FiniteMdp, policy: &Policy, gamma: f64) -> Result<f64> {
    Ok(dot(mdp.initial(), &discounted_state_values(mdp, policy, gamma)?))
}

/// Policy iteration for the discounted criterion, returning the
/// lowest-index optimal action in every state.
pub fn optimal_discounted_stationary(mdp: &FiniteMdp, gamma: f64) -> Result<(Policy, f64)> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut map = vec![0usize; ns];
    let q = |v: &[f64], s: usize, a: usize| mdp.mean_reward(s, a) + gamma * dot(mdp.row(s, a), v);
    // Howard iteration terminates after at most |A|^|S| improvements; the
    // bound guards against tolerance cycling.
    let limit = checked_pow(na, ns).map_or(usize::MAX, |c| c.min(10_000) as usize) + 2;
    let mut v = Vec::new();
    for _ in 0..limit {
        v = discounted_state_values(mdp, &Policy::Stationary(map.clone()), gamma)?;
        let mut changed = false;
        for s in 0..ns {
            let current = q(&v, s, map[s]);
            let (best_a, best_q) = argmax((0..na).map(|a| q(&v, s, a)));
            if best_q > current + TIE_TOL * (1.0 + current.abs()) {
                map[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for s in 0..ns {
        let best = (0..na).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max);
        map[s] = (0..na)
            .find(|&a| q(&v, s, a) >= best - TIE_TOL * (1.0 + best.abs()))
            .unwrap_or(map[s]);
    }
    let policy = Policy::Stationary(map);
    let value = discounted_value(mdp, &policy, gamma)?;
    Ok((policy, value))
}

/// Discounted optimum over explicitly enumerated stationary policies.
pub fn optimal_discounted_by_enumeration(mdp: &FiniteMdp, gamma: f64, cap: u64) -> Result<(Policy, f64)> {
    let policies = enumerate_stationary_policies(mdp, cap)?;
    let values = policies
        .iter()
        .map(|p| discounted_value(mdp, p, gamma))
        .collect::<Result<Vec<_>>>()?;
    let (i, v) = argmax(values.into_iter());
    Ok((policies[i].clone(), v))
}

/// Distributions of `s_0, ..., s_steps` in the chain.
pub fn state_distributions(chain: &MarkovChain, steps: usize) -> Vec<Vec<f64>> {
    let ns = chain.n_states();
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = chain.initial().to_vec();
    for _ in 0..steps {
        let mut next = vec![0.0; ns];
        for (s, &w) in cur.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, &p) in chain.row(s).iter().enumerate() {
                next[t] += w * p;
            }
        }
        out.push(std::mem::replace(&mut cur, next));
    }
    out.push(cur);
    out
}

/// `p_L(s, C)`: probability that the chain sits in `s` after exactly `L` steps.
pub fn reach_probability(chain: &MarkovChain, s: usize, steps: usize) -> Result<f64> {
    if steps > MAX_REACH_STEPS {
        return Err(Error::Argument(format!("{steps} steps exceeds the limit of {MAX_REACH_STEPS}")));
    }
    if s >= chain.n_states() {
        return Err(Error::Argument(format!("state {s} out of range")));
    }
    Ok(state_distributions(chain, steps)[steps][s])
}

/// A state-action sequence `((s_0,a_0), ..., (s_{H-1},a_{H-1}), s_H)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateActionPath {
    pub steps: Vec<(usize, usize)>,
    pub terminal: usize,
}

impl StateActionPath {
    pub fn next_state(&self, h: usize) -> usize {
        self.steps.get(h + 1).map_or(self.terminal, |x| x.0)
    }

    /// Number of visits to `(s, a)`.
    pub fn visits(&self, s: usize, a: usize) -> usize {
        self.steps.iter().filter(|&&x| x == (s, a)).count()
    }
}

/// `mu(s_0) * prod P(s'|s,a)^{m_T(s,a,s')}` with `0^0 = 1`.
pub fn trajectory_probability(mdp: &FiniteMdp, policy: &Policy, path: &StateActionPath) -> Result<f64> {
    policy.validate_for(mdp)?;
    if path.steps.len() != mdp.horizon() {
        return Err(Error::Argument(format!(
            "path has {} steps, horizon is {}",
            path.steps.len(),
            mdp.horizon()
        )));
    }
    let ns = mdp.n_states();
    let mut counts = vec![0i32; mdp.n_pairs() * ns];
    for (h, &(s, a)) in path.steps.iter().enumerate() {
        if s >= ns || a >= mdp.n_actions() {
            return Err(Error::Argument(format!("step {h} index out of range")));
        }
        let expected = policy.action(h, s);
        if a != expected {
            return Err(Error::Incompatible { step: h, taken: a, expected });
        }
        counts[mdp.pair_index(s, a) * ns + path.next_state(h)] += 1;
    }
    let Some(&(s0, _)) = path.steps.first() else {
        return Ok(mdp.initial()[path.terminal]);
    };
    Ok(counts
        .iter()
        .zip(mdp.transition())
        .fold(mdp.initial()[s0], |acc, (&m, &p)| acc * p.powi(m)))
}

/// Every state sequence of length `H + 1`, with actions filled in from
/// `policy`. There are `|S|^(H+1)` of them.
pub fn compatible_paths(mdp: &FiniteMdp, policy: &Policy, cap: u64) -> Result<Vec<StateActionPath>> {
    policy.validate_for(mdp)?;
    let (ns, h_max) = (mdp.n_states(), mdp.horizon());
    let count = checked_pow(ns, h_max + 1).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::CapExceeded { required: count, cap: cap as u128 });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; h_max + 1];
    for _ in 0..count {
        out.push(StateActionPath {
            steps: (0..h_max).map(|h| (digits[h], policy.action(h, digits[h]))).collect(),
            terminal: digits[h_max],
        });
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < ns {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// `sum_T p(T) * sum_h E[R(s_h, a_h)]` over all compatible paths.
pub fn value_by_enumeration(mdp: &FiniteMdp, policy: &Policy, cap: u64) -> Result<f64> {
    let mut total = 0.0;
    for path in compatible_paths(mdp, policy, cap)? {
        let p = trajectory_probability(mdp, policy, &path)?;
        if p > 0.0 {
            total += p * path.steps.iter().map(|&(s, a)| mdp.mean_reward(s, a)).sum::<f64>();
        }
    }
    Ok(total)
}

/// Distribution of the number of visits to `(s, a)` within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationDistribution {
    pub state: usize,
    pub action: usize,
    /// `probs[k] = Pr[count = k]`.
    pub probs: Vec<f64>,
}

impl VisitationDistribution {
    /// Empirical distribution from observed counts.
    pub fn from_counts(state: usize, action: usize, counts: &[usize]) -> Self {
        let max = counts.iter().copied().max().unwrap_or(0);
        let mut probs = vec![0.0; max + 1];
        let w = 1.0 / counts.len().max(1) as f64;
        for &c in counts {
            probs[c] += w;
        }
        if counts.is_empty() {
            probs[0] = 1.0;
        }
        Self { state, action, probs }
    }

    /// `Pr[count >= x]`.
    pub fn tail(&self, x: usize) -> f64 {
        self.probs.iter().skip(x).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Forward DP over `(state, visits so far)`.
pub fn visitation_distribution(
    mdp: &FiniteMdp,
    policy: &Policy,
    s: usize,
    a: usize,
) -> Result<VisitationDistribution> {
    policy.validate_for(mdp)?;
    if s >= mdp.n_states() || a >= mdp.n_actions() {
        return Err(Error::Argument(format!("pair ({s},{a}) out of range")));
    }
    let (ns, h_max) = (mdp.n_states(), mdp.horizon());
    let width = h_max + 1;
    // mass[x * width + k]: in state x having visited (s,a) k times
    let mut mass = vec![0.0; ns * width];
    for (x, &p) in mdp.initial().iter().enumerate() {
        mass[x * width] = p;
    }
    for h in 0..h_max {
        let mut next = vec![0.0; ns * width];
        for x in 0..ns {
            let act = policy.action(h, x);
            let bump = usize::from(x == s && act == a);
            let row = mdp.row(x, act);
            for k in 0..=h {
                let w = mass[x * width + k];
                if w == 0.0 {
                    continue;
                }
                for (y, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        next[y * width + k + bump] += w * p;
                    }
                }
            }
        }
        mass = next;
    }
    let mut probs = vec![0.0; width];
    for x in 0..ns {
        for k in 0..width {
            probs[k] += mass[x * width + k];
        }
    }
    Ok(VisitationDistribution { state: s, action: a, probs })
}

/// Largest integer `x` with `Pr[X >= x] >= eps`.
pub fn exact_quantile(dist: &VisitationDistribution, eps: f64) -> usize {
    let mut tail = 0.0;
    for x in (0..dist.probs.len()).rev() {
        tail += dist.probs[x];
        if tail >= eps - QUANTILE_TOL {
            return x;
        }
    }
    0
}

/// `max Pr[#visits to (s,a) >= threshold]` over all (history-dependent)
/// policies, by backward DP on the count-augmented state `(state, min(count, threshold))`.
///
/// The optimum over history-dependent policies upper-bounds the optimum over
/// Markov non-stationary ones.
pub fn max_prob_visits_at_least(mdp: &FiniteMdp, s: usize, a: usize, threshold: usize) -> f64 {
    if threshold == 0 {
        return 1.0;
    }
    let (ns, na, h_max) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let width = threshold + 1;
    let mut next: Vec<f64> = (0..ns * width)
        .map(|i| if i % width == threshold { 1.0 } else { 0.0 })
        .collect();
    for _ in (0..h_max).rev() {
        let mut cur = vec![0.0; ns * width];
        for x in 0..ns {
            for k in 0..width {
                if k == threshold {
                    cur[x * width + k] = 1.0;
                    continue;
                }
                let mut best = 0.0f64;
                for act in 0..na {
                    let k2 = if x == s && act == a { k + 1 } else { k };
                    let v: f64 = mdp
                        .row(x, act)
                        .iter()
                        .enumerate()
                        .map(|(y, &p)| p * next[y * width + k2])
                        .sum();
                    best = best.max(v);
                }
                cur[x * width + k] = best;
            }
        }
        next = cur;
    }
    mdp.initial().iter().enumerate().map(|(x, &p)| p * next[x * width]).sum()
}
