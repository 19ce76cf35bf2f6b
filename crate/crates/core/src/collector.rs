//! Sample collection over every `(s, a)` target and every ordered pair of
//! stationary policies, and the visitation-quantile estimator built on the
//! same rollout schedule.
//!
//! Schedule layout (fixed, the dataset format depends on it): for list `i`,
//! targets `(s, a)` in row-major order, then policy pairs `(pi1, pi2)` in
//! lexicographic order of the stationary enumeration. Each cell
//! `(i, s, a, pi1, pi2)` draws from its own substream keyed by the flattened
//! cell index, so lists can be generated in any order or in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{stationary_policies, FiniteMdp, Policy, Sample, TrajectoryDataset};
use crate::sim::{EpisodicSession, RngStream};

/// Caps on interaction cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_episodes: u64,
    pub max_queries: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_episodes: 1_000_000, max_queries: 10_000_000 }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Self { max_episodes: u64::MAX, max_queries: u64::MAX }
    }

    pub fn check_episodes(&self, required: u128) -> Result<()> {
        if required > self.max_episodes as u128 {
            return Err(Error::Budget { what: "episodes", required, budget: self.max_episodes as u128 });
        }
        Ok(())
    }

    pub fn check_queries(&self, required: u128) -> Result<()> {
        if required > self.max_queries as u128 {
            return Err(Error::Budget { what: "generative queries", required, budget: self.max_queries as u128 });
        }
        Ok(())
    }
}

/// Sentinel quantile meaning "never truncate".
pub const UNTRUNCATED: u64 = u64::MAX;

/// Per-pair integer quantile estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub n_states: usize,
    pub n_actions: usize,
    values: Vec<u64>,
    pub eps_est: f64,
    pub delta_est: f64,
    /// Lists actually used.
    pub repetitions: u64,
    /// Unscaled repetition count from the formula.
    pub theoretical_repetitions: f64,
}

impl QuantileTable {
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<u64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "quantile table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
            eps_est: f64::NAN,
            delta_est: f64::NAN,
            repetitions: 0,
            theoretical_repetitions: f64::NAN,
        })
    }

    pub fn constant(n_states: usize, n_actions: usize, value: u64) -> Self {
        Self::from_values(n_states, n_actions, vec![value; n_states * n_actions]).expect("sized")
    }

    pub fn untruncated(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, UNTRUNCATED)
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.values[s * self.n_actions + a]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }
}

fn stationary_maps(mdp: &FiniteMdp) -> Result<Vec<Vec<usize>>> {
    Ok(stationary_policies(mdp.n_states(), mdp.n_actions(), u64::MAX)?
        .into_iter()
        .map(|p| match p {
            Policy::Stationary(m) => m,
            Policy::NonStationary(_) => unreachable!(),
        })
        .collect())
}

/// One episode that follows `first` until `target` has occurred at some
/// strictly earlier step, then follows `second`. The step at which the
/// target first occurs itself uses `first`.
pub fn switched_rollout(
    session: &mut EpisodicSession<'_>,
    target: (usize, usize),
    first: &Policy,
    second: &Policy,
) -> Result<Vec<Sample>> {
    let (Policy::Stationary(p1), Policy::Stationary(p2)) = (first, second) else {
        return Err(Error::Policy("switched rollouts use stationary policies".into()));
    };
    first.validate_for(session.mdp())?;
    second.validate_for(session.mdp())?;
    let mut out = Vec::with_capacity(session.mdp().horizon());
    run_switched(session, target, p1, p2, |x| out.push(x))?;
    Ok(out)
}

fn run_switched(
    session: &mut EpisodicSession<'_>,
    target: (usize, usize),
    first: &[usize],
    second: &[usize],
    mut visit: impl FnMut(Sample),
) -> Result<()> {
    let horizon = session.mdp().horizon();
    let mut s = session.reset()?;
    let mut seen = false;
    for _ in 0..horizon {
        let a = if seen { second[s] } else { first[s] };
        let (reward, next) = session.step(a)?;
        visit(Sample { state: s, action: a, reward, next });
        seen |= (s, a) == target;
        s = next;
    }
    Ok(())
}

/// Episodes needed for `n` lists: `n * |S||A| * |A|^(2|S|)`.
pub fn schedule_episodes(mdp: &FiniteMdp, n: u64) -> Option<u128> {
    let per_list = TrajectoryDataset::expected_list_len(mdp.n_states(), mdp.n_actions(), 1)?;
    per_list.checked_mul(n as u128)
}

struct Schedule<'m> {
    mdp: &'m FiniteMdp,
    maps: Vec<Vec<usize>>,
}

impl<'m> Schedule<'m> {
    fn new(mdp: &'m FiniteMdp, n: u64, budget: &Budget) -> Result<Self> {
        let episodes = schedule_episodes(mdp, n).ok_or_else(|| Error::Budget {
            what: "episodes",
            required: u128::MAX,
            budget: budget.max_episodes as u128,
        })?;
        budget.check_episodes(episodes)?;
        Ok(Self { mdp, maps: stationary_maps(mdp)? })
    }

    /// Runs list `i`, feeding every sample to `visit`. Returns episodes used.
    fn run_list(&self, base: &RngStream, i: u64, mut visit: impl FnMut(Sample)) -> u64 {
        let mdp = self.mdp;
        let np = self.maps.len() as u64;
        let mut episodes = 0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let sa = mdp.pair_index(s, a) as u64;
                for (j1, p1) in self.maps.iter().enumerate() {
                    for (j2, p2) in self.maps.iter().enumerate() {
                        let cell = ((i * mdp.n_pairs() as u64 + sa) * np + j1 as u64) * np + j2 as u64;
                        let mut session = EpisodicSession::new(mdp, base.substream(cell));
                        run_switched(&mut session, (s, a), p1, p2, &mut visit)
                            .expect("fresh session with validated policies");
                        episodes += session.episodes();
                    }
                }
            }
        }
        episodes
    }
}

/// Runs the collection schedule `n` times and returns the lists.
pub fn collect_samples(mdp: &FiniteMdp, n: u64, rng: &RngStream, budget: &Budget) -> Result<TrajectoryDataset> {
    if n == 0 {
        return Err(Error::Argument("need at least one list".into()));
    }
    let schedule = Schedule::new(mdp, n, budget)?;
    let list_len = TrajectoryDataset::expected_list_len(mdp.n_states(), mdp.n_actions(), mdp.horizon())
        .expect("fits after budget check") as usize;
    let lists: Vec<Vec<Sample>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut list = Vec::with_capacity(list_len);
            schedule.run_list(rng, i, |x| list.push(x));
            list
        })
        .collect();
    Ok(TrajectoryDataset {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        horizon: mdp.horizon(),
        seed: rng.seed(),
        scale: 1.0,
        lists,
    })
}

/// Per-list visit counts of every pair, `counts[i][s * |A| + a]`, for `n`
/// runs of the schedule. Draws are identical to [`collect_samples`] under the
/// same stream.
pub fn schedule_counts(mdp: &FiniteMdp, n: u64, rng: &RngStream, budget: &Budget) -> Result<Vec<Vec<u32>>> {
    let schedule = Schedule::new(mdp, n, budget)?;
    let na = mdp.n_actions();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u32; mdp.n_pairs()];
            schedule.run_list(rng, i, |x| counts[x.state * na + x.action] += 1);
            counts
        })
        .collect())
}

/// Number of tuples in `list` whose state-action pair is `(s, a)`.
pub fn count_occurrences(list: &[Sample], s: usize, a: usize) -> usize {
    list.iter().filter(|x| x.state == s && x.action == a).count()
}

/// `ceil(scale * 300 * ln(6|S||A| / delta) / eps)`, at least one, with the
/// unscaled value alongside.
pub fn quantile_repetitions(n_states: usize, n_actions: usize, eps_est: f64, delta_est: f64, scale: f64) -> (u64, f64) {
    let theoretical = 300.0 * (6.0 * (n_states * n_actions) as f64 / delta_est).ln() / eps_est;
    let actual = (scale * theoretical).ceil().max(1.0);
    (actual.min(u64::MAX as f64) as u64, theoretical)
}

/// The `ceil(n * eps / 2)`-th largest value of `multiset` (rank clamped to `1..=n`).
pub fn rank_statistic(multiset: &mut [u32], eps: f64) -> u64 {
    if multiset.is_empty() {
        return 0;
    }
    let n = multiset.len();
    let rank = ((n as f64 * eps / 2.0).ceil() as usize).clamp(1, n);
    multiset.sort_unstable_by(|a, b| b.cmp(a));
    multiset[rank - 1] as u64
}

fn table_from_counts(
    mdp_dims: (usize, usize),
    counts: &[Vec<u32>],
    eps_est: f64,
    delta_est: f64,
    theoretical: f64,
) -> QuantileTable {
    let (ns, na) = mdp_dims;
    let values = (0..ns * na)
        .map(|k| {
            let mut f: Vec<u32> = counts.iter().map(|c| c[k]).collect();
            rank_statistic(&mut f, eps_est)
        })
        .collect();
    QuantileTable {
        n_states: ns,
        n_actions: na,
        values,
        eps_est,
        delta_est,
        repetitions: counts.len() as u64,
        theoretical_repetitions: theoretical,
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Argument(format!("{name} = {x} must lie in (0, 1]")));
    }
    Ok(())
}

/// Runs the schedule `N = ceil(scale * 300 ln(6|S||A|/delta) / eps)` times and
/// returns, per pair, the `ceil(N eps / 2)`-th largest per-list visit count.
pub fn estimate_quantiles(
    mdp: &FiniteMdp,
    eps_est: f64,
    delta_est: f64,
    scale: f64,
    rng: &RngStream,
    budget: &Budget,
) -> Result<QuantileTable> {
    check_unit("eps_est", eps_est)?;
    check_unit("delta_est", delta_est)?;
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("scale {scale} must be positive")));
    }
    let (n, theoretical) = quantile_repetitions(mdp.n_states(), mdp.n_actions(), eps_est, delta_est, scale);
    let counts = schedule_counts(mdp, n, rng, budget)?;
    Ok(table_from_counts((mdp.n_states(), mdp.n_actions()), &counts, eps_est, delta_est, theoretical))
}

/// Quantile estimates read off an already collected dataset. This reuses the
/// collection phase's samples for the estimation phase.
pub fn quantiles_from_dataset(data: &TrajectoryDataset, eps_est: f64, delta_est: f64) -> Result<QuantileTable> {
    check_unit("eps_est", eps_est)?;
    check_unit("delta_est", delta_est)?;
    let na = data.n_actions;
    let counts: Vec<Vec<u32>> = data
        .lists
        .iter()
        .map(|list| {
            let mut c = vec![0u32; data.n_states * na];
            for x in list {
                c[x.state * na + x.action] += 1;
            }
            c
        })
        .collect();
    let theoretical = quantile_repetitions(data.n_states, na, eps_est, delta_est, 1.0).1;
    Ok(table_from_counts((data.n_states, na), &counts, eps_est, delta_est, theoretical))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{chain, coinflip, twostate_exit};
    use crate::mdp::RewardDist;

    #[test]
    fn equal_policies_match_plain_rollout() {
        let m = coinflip(6).unwrap();
        let pi = Policy::Stationary(vec![0, 1]);
        let mut a = EpisodicSession::new(&m, RngStream::new(5, 1));
        let mut b = EpisodicSession::new(&m, RngStream::new(5, 1));
        let switched = switched_rollout(&mut a, (1, 1), &pi, &pi).unwrap();
        let plain: Vec<Sample> = b.rollout(&pi).unwrap().samples().collect();
        assert_eq!(switched, plain);
    }

    #[test]
    fn unreachable_target_never_switches() {
        let m = chain(3, 5).unwrap();
        let first = Policy::Stationary(vec![1, 1, 1]);
        let second = Policy::Stationary(vec![0, 0, 0]);
        let mut s = EpisodicSession::new(&m, RngStream::new(0, 0));
        let xs = switched_rollout(&mut s, (2, 0), &first, &second).unwrap();
        assert!(xs.iter().all(|x| x.action == 1));
    }

    #[test]
    fn switch_happens_strictly_after_first_visit() {
        // chain: 0 -> 1 -> 2 under action 0; target (1, 0) is reached at h = 1
        let m = chain(3, 5).unwrap();
        let first = Policy::Stationary(vec![0, 0, 0]);
        let second = Policy::Stationary(vec![1, 1, 1]);
        let mut s = EpisodicSession::new(&m, RngStream::new(0, 0));
        let xs = switched_rollout(&mut s, (1, 0), &first, &second).unwrap();
        let trace: Vec<(usize, usize)> = xs.iter().map(|x| (x.state, x.action)).collect();
        // h0: (0, pi1) h1: (1, pi1) h2: state 2 with pi2 -> back to 0, h3: (0, pi2) ...
        assert_eq!(trace, vec![(0, 0), (1, 0), (2, 1), (0, 1), (0, 1)]);
    }

    #[test]
    fn list_lengths() {
        let single = FiniteMdp::new(1, 1, 4, vec![1.0], vec![RewardDist::zero()], vec![1.0]).unwrap();
        let d = collect_samples(&single, 1, &RngStream::new(0, 0), &Budget::default()).unwrap();
        assert_eq!(d.lists.len(), 1);
        assert_eq!(d.lists[0].len(), 4);
        let m = twostate_exit(3).unwrap();
        let d = collect_samples(&m, 2, &RngStream::new(0, 0), &Budget::default()).unwrap();
        assert!(d.lists.iter().all(|l| l.len() == 64 * 3));
        d.validate().unwrap();
    }

    #[test]
    fn budget_is_enforced() {
        let m = twostate_exit(3).unwrap();
        let err = collect_samples(&m, 10, &RngStream::new(0, 0), &Budget { max_episodes: 100, max_queries: 0 })
            .unwrap_err();
        assert!(matches!(err, Error::Budget { required: 640, .. }), "{err}");
    }

    #[test]
    fn counts_match_collected_lists() {
        let m = coinflip(4).unwrap();
        let rng = RngStream::new(8, 3);
        let d = collect_samples(&m, 3, &rng, &Budget::default()).unwrap();
        let c = schedule_counts(&m, 3, &rng, &Budget::default()).unwrap();
        for (list, counts) in d.lists.iter().zip(&c) {
            for s in 0..2 {
                for a in 0..2 {
                    assert_eq!(count_occurrences(list, s, a), counts[s * 2 + a] as usize);
                }
            }
        }
    }

    #[test]
    fn rank_statistic_picks_kth_largest() {
        let mut f = vec![3, 9, 1, 7, 5, 5, 2, 8, 0, 4];
        // ceil(10 * 0.5 / 2) = 3rd largest
        assert_eq!(rank_statistic(&mut f, 0.5), 7);
        let mut f = vec![4, 4, 4];
        assert_eq!(rank_statistic(&mut f, 1.0), 4);
    }

    #[test]
    fn constant_visits_give_exact_quantile() {
        // single state, every episode visits (0,0) exactly H times
        let m = FiniteMdp::new(1, 1, 5, vec![1.0], vec![RewardDist::zero()], vec![1.0]).unwrap();
        let t = estimate_quantiles(&m, 0.5, 0.5, 0.01, &RngStream::new(0, 0), &Budget::default()).unwrap();
        assert_eq!(t.get(0, 0), 5);
        // exit state's actions are visited in every list, but state 0's exit action at most
        // once per episode
        let m = twostate_exit(4).unwrap();
        let t = estimate_quantiles(&m, 0.5, 0.5, 0.01, &RngStream::new(0, 0), &Budget::default()).unwrap();
        assert!(t.get(0, 1) <= 64);
    }

    #[test]
    fn repetition_formula() {
        let (n, th) = quantile_repetitions(2, 2, 0.5, 0.1, 1.0);
        let expect = 300.0 * (240.0f64).ln() / 0.5;
        assert!((th - expect).abs() < 1e-9);
        assert_eq!(n, expect.ceil() as u64);
        assert_eq!(quantile_repetitions(2, 2, 0.5, 0.1, 1e-9).0, 1);
    }
}
