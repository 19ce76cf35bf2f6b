//! Finite-horizon tabular MDPs, Markov chains, policies and trajectory records.
//!
//! Every model type validates its stochasticity invariants on construction and
//! is immutable afterwards.

use crate::error::{Error, Result};

/// Absolute tolerance for probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-12;

/// Default cap on the number of policies an enumeration may produce.
pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

pub(crate) fn check_distribution(v: &[f64], what: impl Fn() -> String) -> Result<()> {
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Invariant(format!("{}: entry {i} = {p} outside [0,1]", what())));
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Invariant(format!("{}: sums to {sum}, expected 1", what())));
    }
    Ok(())
}

/// A reward distribution with finitely many support points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl RewardDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::Invariant(format!(
                "reward distribution needs matching nonempty support ({} values, {} probs)",
                values.len(),
                probs.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Invariant(format!("reward value {v} outside [0,1]")));
            }
        }
        check_distribution(&probs, || "reward probabilities".to_string())?;
        Ok(Self { values, probs })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    pub fn zero() -> Self {
        Self { values: vec![0.0], probs: vec![1.0] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * v * p).sum()
    }

    /// Largest support point carrying positive probability.
    pub fn max_support(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&v, _)| v)
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect(), self.probs.clone())
    }
}

/// `(S, A, P, R, H, mu)` with `P` stored row-major by `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    reward: Vec<RewardDist>,
    initial: Vec<f64>,
}

impl FiniteMdp {
    /// `transition` holds `n_states * n_actions` rows of length `n_states`,
    /// row `(s, a)` starting at `(s * n_actions + a) * n_states`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<RewardDist>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(Error::Invariant(format!(
                "dimensions must be positive (states={n_states}, actions={n_actions}, horizon={horizon})"
            )));
        }
        let pairs = n_states * n_actions;
        if transition.len() != pairs * n_states {
            return Err(Error::Dimension(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                pairs * n_states
            )));
        }
        if reward.len() != pairs {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {pairs}",
                reward.len()
            )));
        }
        if initial.len() != n_states {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let k = (s * n_actions + a) * n_states;
                check_distribution(&transition[k..k + n_states], || format!("transition row ({s},{a})"))?;
            }
        }
        check_distribution(&initial, || "initial distribution".to_string())?;
        Ok(Self { n_states, n_actions, horizon, transition, reward, initial })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let k = self.pair_index(s, a) * self.n_states;
        &self.transition[k..k + self.n_states]
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardDist {
        &self.reward[self.pair_index(s, a)]
    }

    pub fn rewards(&self) -> &[RewardDist] {
        &self.reward
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.reward(s, a).mean()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            horizon,
            self.transition.clone(),
            self.reward.clone(),
            self.initial.clone(),
        )
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            self.transition.clone(),
            self.reward.clone(),
            initial,
        )
    }

    pub fn with_rewards(&self, reward: Vec<RewardDist>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            self.transition.clone(),
            reward,
            self.initial.clone(),
        )
    }

    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            transition,
            self.reward.clone(),
            self.initial.clone(),
        )
    }
}

/// Result of the bounded-total-reward check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedRewardCheck {
    pub holds: bool,
    /// Largest achievable sum of maximum-support rewards over positive-probability trajectories.
    pub max_total: f64,
    /// On failure, `(state, action)` per step of a trajectory attaining `max_total`.
    pub witness: Option<Vec<(usize, usize)>>,
}

/// Decides whether every positive-probability trajectory under every policy
/// collects total reward at most one.
///
/// Backward DP over `U_h(s) = max_a (rmax(s,a) + max_{s' in supp P(s,a)} U_{h+1}(s'))`.
pub fn validate_bounded_total_reward(mdp: &FiniteMdp) -> BoundedRewardCheck {
    let (ns, na, h_max) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut u = vec![vec![0.0; ns]; h_max + 1];
    let mut best: Vec<Vec<(usize, usize)>> = vec![vec![(0, 0); ns]; h_max];
    for h in (0..h_max).rev() {
        for s in 0..ns {
            let mut top = f64::NEG_INFINITY;
            for a in 0..na {
                let (next, cont) = mdp
                    .row(s, a)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(t, _)| (t, u[h + 1][t]))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                let v = mdp.reward(s, a).max_support() + cont;
                if v > top {
                    top = v;
                    best[h][s] = (a, next);
                }
            }
            u[h][s] = top;
        }
    }
    let (start, max_total) = mdp
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, _)| (s, u[0][s]))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let holds = max_total <= 1.0 + PROB_TOL;
    let witness = (!holds).then(|| {
        let mut s = start;
        let mut path = Vec::with_capacity(h_max);
        for row in &best {
            let (a, next) = row[s];
            path.push((s, a));
            s = next;
        }
        path
    });
    BoundedRewardCheck { holds, max_total, witness }
}

/// `C = (S, P, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    n_states: usize,
    transition: Vec<f64>,
    initial: Vec<f64>,
}

impl MarkovChain {
    pub fn new(n_states: usize, transition: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::Invariant("chain needs at least one state".into()));
        }
        if transition.len() != n_states * n_states || initial.len() != n_states {
            return Err(Error::Dimension(format!(
                "chain with {n_states} states needs {} transition entries and {n_states} initial entries",
                n_states * n_states
            )));
        }
        for s in 0..n_states {
            check_distribution(&transition[s * n_states..(s + 1) * n_states], || {
                format!("chain row {s}")
            })?;
        }
        check_distribution(&initial, || "chain initial distribution".to_string())?;
        Ok(Self { n_states, transition, initial })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.transition[s * self.n_states..(s + 1) * self.n_states]
    }

    pub fn p(&self, s: usize, next: usize) -> f64 {
        self.transition[s * self.n_states + next]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Probability of the state sequence `states` (initial draw included).
    pub fn sequence_probability(&self, states: &[usize]) -> f64 {
        let Some(&first) = states.first() else {
            return 1.0;
        };
        states
            .windows(2)
            .fold(self.initial[first], |acc, w| acc * self.p(w[0], w[1]))
    }
}

/// A deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// One action per state, used at every step.
    Stationary(Vec<usize>),
    /// One state-to-action map per step `0..H`.
    NonStationary(Vec<Vec<usize>>),
}

impl Policy {
    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        match self {
            Policy::Stationary(map) => map[s],
            Policy::NonStationary(maps) => maps[h][s],
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, Policy::Stationary(_))
    }

    /// Checks action indices and, for non-stationary policies, that exactly
    /// `horizon` step maps are present.
    pub fn validate(&self, n_states: usize, n_actions: usize, horizon: usize) -> Result<()> {
        let check_map = |map: &[usize], label: String| -> Result<()> {
            if map.len() != n_states {
                return Err(Error::Policy(format!(
                    "{label} has {} entries, expected {n_states}",
                    map.len()
                )));
            }
            if let Some((s, &a)) = map.iter().enumerate().find(|(_, &a)| a >= n_actions) {
                return Err(Error::Policy(format!("{label}: action {a} at state {s} out of range")));
            }
            Ok(())
        };
        match self {
            Policy::Stationary(map) => check_map(map, "stationary map".into()),
            Policy::NonStationary(maps) => {
                if maps.len() != horizon {
                    return Err(Error::Policy(format!(
                        "non-stationary policy has {} steps, horizon is {horizon}",
                        maps.len()
                    )));
                }
                maps.iter()
                    .enumerate()
                    .try_for_each(|(h, m)| check_map(m, format!("step {h} map")))
            }
        }
    }

    pub fn validate_for(&self, mdp: &FiniteMdp) -> Result<()> {
        self.validate(mdp.n_states(), mdp.n_actions(), mdp.horizon())
    }

    /// Expands to one map per step.
    pub fn to_nonstationary(&self, horizon: usize) -> Policy {
        match self {
            Policy::Stationary(map) => Policy::NonStationary(vec![map.clone(); horizon]),
            Policy::NonStationary(_) => self.clone(),
        }
    }
}

/// `P^pi(s'|s) = P(s'|s, pi(s))` for a stationary policy.
pub fn induce_chain(mdp: &FiniteMdp, policy: &Policy) -> Result<MarkovChain> {
    let Policy::Stationary(map) = policy else {
        return Err(Error::Policy("induce_chain needs a stationary policy".into()));
    };
    policy.validate_for(mdp)?;
    let ns = mdp.n_states();
    let mut transition = Vec::with_capacity(ns * ns);
    for (s, &a) in map.iter().enumerate() {
        transition.extend_from_slice(mdp.row(s, a));
    }
    MarkovChain::new(ns, transition, mdp.initial().to_vec())
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<u128> {
    (base as u128).checked_pow(u32::try_from(exp).ok()?)
}

/// All `|A|^|S|` stationary policies, lexicographic in `(pi(0), pi(1), ...)`.
pub fn enumerate_stationary_policies(mdp: &FiniteMdp, cap: u64) -> Result<Vec<Policy>> {
    stationary_policies(mdp.n_states(), mdp.n_actions(), cap)
}

pub fn stationary_policies(n_states: usize, n_actions: usize, cap: u64) -> Result<Vec<Policy>> {
    let count = checked_pow(n_actions, n_states).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::CapExceeded { required: count, cap: cap as u128 });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; n_states];
    for _ in 0..count {
        out.push(Policy::Stationary(digits.clone()));
        // odometer with state n-1 as the least significant digit
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < n_actions {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// All `|A|^(|S| H)` non-stationary policies, lexicographic over step maps.
pub fn enumerate_nonstationary_policies(mdp: &FiniteMdp, cap: u64) -> Result<Vec<Policy>> {
    let (ns, na, h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let count = checked_pow(na, ns * h).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::CapExceeded { required: count, cap: cap as u128 });
    }
    let flat = stationary_policies(ns * h, na, cap)?;
    Ok(flat
        .into_iter()
        .map(|p| match p {
            Policy::Stationary(digits) => {
                Policy::NonStationary(digits.chunks(ns).map(<[usize]>::to_vec).collect())
            }
            Policy::NonStationary(_) => unreachable!(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// `H` steps plus the terminal state `s_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: usize,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn visits(&self, s: usize, a: usize) -> usize {
        self.steps.iter().filter(|st| st.state == s && st.action == a).count()
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.steps.iter().enumerate().map(move |(h, st)| Sample {
            state: st.state,
            action: st.action,
            reward: st.reward,
            next: self.steps.get(h + 1).map_or(self.terminal, |n| n.state),
        })
    }
}

/// A `(s, a, r, s')` tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

/// `N` sample lists produced by the stationary-pair collection schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub seed: u64,
    pub scale: f64,
    pub lists: Vec<Vec<Sample>>,
}

impl TrajectoryDataset {
    /// `|S||A| * |A|^(2|S|) * H`.
    pub fn expected_list_len(n_states: usize, n_actions: usize, horizon: usize) -> Option<u128> {
        let pairs = checked_pow(n_actions, 2 * n_states)?;
        (n_states as u128 * n_actions as u128)
            .checked_mul(pairs)?
            .checked_mul(horizon as u128)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::expected_list_len(self.n_states, self.n_actions, self.horizon)
            .ok_or_else(|| Error::Invariant("list length overflows".into()))?;
        for (i, list) in self.lists.iter().enumerate() {
            if list.len() as u128 != expected {
                return Err(Error::Invariant(format!(
                    "list {i} has {} tuples, expected {expected}",
                    list.len()
                )));
            }
            for (t, x) in list.iter().enumerate() {
                if x.state >= self.n_states
                    || x.next >= self.n_states
                    || x.action >= self.n_actions
                    || !(0.0..=1.0).contains(&x.reward)
                {
                    return Err(Error::Invariant(format!("list {i} tuple {t} out of range: {x:?}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_mdp(reward: f64, horizon: usize) -> FiniteMdp {
        FiniteMdp::new(1, 1, horizon, vec![1.0], vec![RewardDist::constant(reward).unwrap()], vec![1.0])
            .unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let err = FiniteMdp::new(2, 1, 3, vec![0.5, 0.4, 0.0, 1.0], vec![RewardDist::zero(); 2], vec![1.0, 0.0])
            .unwrap_err();
        assert!(err.to_string().contains("transition row (0,0)"), "{err}");
        assert!(RewardDist::new(vec![1.5], vec![1.0]).is_err());
        assert!(RewardDist::new(vec![0.5, 0.2], vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn bounded_reward_cases() {
        let zero = line_mdp(0.0, 5);
        assert!(validate_bounded_total_reward(&zero).holds);

        let exact = line_mdp(1.0 / 4.0, 4);
        let c = validate_bounded_total_reward(&exact);
        assert!(c.holds);
        assert_eq!(c.max_total, 1.0);

        let double = line_mdp(2.0 / 4.0, 4);
        let c = validate_bounded_total_reward(&double);
        assert!(!c.holds);
        assert_eq!(c.max_total, 2.0);
        assert_eq!(c.witness.unwrap(), vec![(0, 0); 4]);
    }

    #[test]
    fn witness_follows_supported_transitions() {
        // state 0 action 1 jumps to rewarding state 1; action 0 loops with nothing
        let t = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let r = vec![
            RewardDist::zero(),
            RewardDist::zero(),
            RewardDist::constant(0.6).unwrap(),
            RewardDist::constant(0.6).unwrap(),
        ];
        let m = FiniteMdp::new(2, 2, 3, t, r, vec![1.0, 0.0]).unwrap();
        let c = validate_bounded_total_reward(&m);
        assert!(!c.holds);
        assert!((c.max_total - 1.2).abs() < 1e-12);
        let w = c.witness.unwrap();
        assert_eq!(w[0], (0, 1));
        assert_eq!(w[1].0, 1);
    }

    #[test]
    fn stationary_enumeration_order() {
        let ps = stationary_policies(2, 2, 100).unwrap();
        let maps: Vec<_> = ps
            .iter()
            .map(|p| match p {
                Policy::Stationary(m) => m.clone(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(maps, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(stationary_policies(1, 3, 100).unwrap().len(), 3);
        let err = stationary_policies(10, 4, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { required: 1_048_576, .. }));
    }

    #[test]
    fn stationary_enumeration_matches_cartesian_product() {
        let ps = stationary_policies(3, 3, 100).unwrap();
        let mut expected = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    expected.push(Policy::Stationary(vec![a, b, c]));
                }
            }
        }
        assert_eq!(ps, expected);
    }

    #[test]
    fn induce_chain_selects_rows() {
        let t = vec![0.2, 0.8, 0.0, 1.0, 0.5, 0.5, 1.0, 0.0];
        let m = FiniteMdp::new(2, 2, 2, t, vec![RewardDist::zero(); 4], vec![1.0, 0.0]).unwrap();
        let c = induce_chain(&m, &Policy::Stationary(vec![1, 0])).unwrap();
        assert_eq!(c.row(0), &[0.0, 1.0]);
        assert_eq!(c.row(1), &[0.5, 0.5]);
        assert!(induce_chain(&m, &Policy::NonStationary(vec![vec![0, 0]; 2])).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::NonStationary(vec![vec![0, 1]; 3]).validate(2, 2, 3).is_ok());
        assert!(Policy::NonStationary(vec![vec![0, 1]; 2]).validate(2, 2, 3).is_err());
        assert!(Policy::Stationary(vec![0, 2]).validate(2, 2, 3).is_err());
    }

    #[test]
    fn list_length_formula() {
        assert_eq!(TrajectoryDataset::expected_list_len(1, 1, 7), Some(7));
        assert_eq!(TrajectoryDataset::expected_list_len(2, 2, 5), Some(64 * 5));
    }
}
