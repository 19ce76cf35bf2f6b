use rayon::prelude::*;

use super::CheckReport;
use crate::collector::{estimate_quantiles, schedule_counts, Budget};
use crate::error::{Error, Result};
use crate::estimate::build_generative_model;
use crate::mdp::{FiniteMdp, Policy};
use crate::oracle::{exact_quantile, visitation_distribution, VisitationDistribution};
use crate::planner::{run_pessimistic_pipeline, PipelineParams};
use crate::sim::{GenerativeModel, RngStream};

const CHUNK: u64 = 1024;

/// A transition `(s, a, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

impl Triple {
    pub fn new(state: usize, action: usize, next: usize) -> Self {
        Self { state, action, next }
    }

    fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.state >= mdp.n_states() || self.next >= mdp.n_states() || self.action >= mdp.n_actions() {
            return Err(Error::Argument(format!("transition {self:?} out of range")));
        }
        Ok(())
    }

    fn p(&self, mdp: &FiniteMdp) -> f64 {
        mdp.p(self.state, self.action, self.next)
    }
}

/// Visits to `(s, a)` and to `(s, a, s')` in one episode.
fn episode_counts(mdp: &FiniteMdp, policy: &Policy, t: Triple, rng: &mut RngStream) -> (u64, u64) {
    let mut s = rng.sample_index(mdp.initial());
    let (mut n_sa, mut n_sas) = (0, 0);
    for h in 0..mdp.horizon() {
        let a = policy.action(h, s);
        let next = rng.sample_index(mdp.row(s, a));
        if s == t.state && a == t.action {
            n_sa += 1;
            n_sas += u64::from(next == t.next);
        }
        s = next;
    }
    (n_sa, n_sas)
}

/// Number of trials in `0..trials` for which `fails` returns true. Trials
/// are split into fixed chunks, each on its own substream of `rng`.
fn count_failures(trials: u64, rng: &RngStream, fails: impl Fn(&mut RngStream) -> bool + Sync) -> u64 {
    (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).filter(|_| fails(&mut r)).count() as u64
        })
        .sum()
}

fn pair_quantile(mdp: &FiniteMdp, policy: &Policy, t: Triple, level: f64) -> Result<f64> {
    Ok(exact_quantile(&visitation_distribution(mdp, policy, t.state, t.action)?, level) as f64)
}

fn unit_open(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// `count(s,a,s') <= (2 Q_{delta/2}(count(s,a)) + 4) / delta * P(s'|s,a)`
/// fails with frequency at most `delta`.
pub fn check_visit_upperbound(mdp: &FiniteMdp, policy: &Policy, t: Triple, delta: f64, trials: u64, rng: &RngStream) -> Result<CheckReport> {
    const ID: &str = "visit_upperbound";
    t.validate(mdp)?;
    policy.validate_for(mdp)?;
    let inst = format!("S={} A={} H={} {t:?} delta={delta} trials={trials}", mdp.n_states(), mdp.n_actions(), mdp.horizon());
    if !unit_open(delta) || trials == 0 {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let bound = (2.0 * pair_quantile(mdp, policy, t, delta / 2.0)? + 4.0) / delta * t.p(mdp);
    let failures = count_failures(trials, rng, |r| episode_counts(mdp, policy, t, r).1 as f64 > bound);
    Ok(CheckReport::frequency(ID, inst, failures, trials, delta))
}

/// `|count(s,a,s') - P(s'|s,a) count(s,a)| <= sqrt((4 Q_{delta/2} + 8) / delta * P(s'|s,a))`
/// fails with frequency at most `delta`.
pub fn check_martingale_concentration(mdp: &FiniteMdp, policy: &Policy, t: Triple, delta: f64, trials: u64, rng: &RngStream) -> Result<CheckReport> {
    const ID: &str = "martingale_concentration";
    t.validate(mdp)?;
    policy.validate_for(mdp)?;
    let inst = format!("S={} A={} H={} {t:?} delta={delta} trials={trials}", mdp.n_states(), mdp.n_actions(), mdp.horizon());
    if !unit_open(delta) || trials == 0 {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let p = t.p(mdp);
    let bound = ((4.0 * pair_quantile(mdp, policy, t, delta / 2.0)? + 8.0) / delta * p).sqrt();
    let failures = count_failures(trials, rng, |r| {
        let (n_sa, n_sas) = episode_counts(mdp, policy, t, r);
        (n_sas as f64 - p * n_sa as f64).abs() > bound
    });
    Ok(CheckReport::frequency(ID, inst, failures, trials, delta))
}

/// Over `K` episodes, with `Q = Q_{delta/4}(count(s,a))`: the count of
/// `(s,a)` reaches `K delta Q / 8` and the empirical transition probability
/// is within `sqrt(32 P / (delta n)) <= sqrt(256 P / (K Q delta^2))` and
/// `min(sqrt(64 P_hat / (delta^2 n)), 64 / (delta n))` of the truth. All of
/// these fail together with frequency at most `delta`.
#[allow(clippy::too_many_arguments)]
pub fn check_prob_approx_error(
    mdp: &FiniteMdp,
    policy: &Policy,
    t: Triple,
    delta: f64,
    episodes: u64,
    trials: u64,
    rng: &RngStream,
) -> Result<CheckReport> {
    const ID: &str = "prob_approx_error";
    t.validate(mdp)?;
    policy.validate_for(mdp)?;
    let inst = format!(
        "S={} A={} H={} {t:?} delta={delta} K={episodes} trials={trials}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon()
    );
    let k = episodes as f64;
    if !unit_open(delta) || trials == 0 || k * delta < 64.0 * (4.0 / delta).ln() {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let q = pair_quantile(mdp, policy, t, delta / 4.0)?;
    if q < 1.0 {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let p = t.p(mdp);
    let failures = count_failures(trials, rng, |r| {
        let (mut n, mut hits) = (0u64, 0u64);
        for _ in 0..episodes {
            let (a, b) = episode_counts(mdp, policy, t, r);
            n += a;
            hits += b;
        }
        let n_f = n as f64;
        if n_f < k * delta * q / 8.0 {
            return true;
        }
        let p_hat = hits as f64 / n_f.max(1.0);
        let err = (p_hat - p).abs();
        let first = (32.0 * p / (delta * n_f)).sqrt();
        let second = (256.0 * p / (k * q * delta * delta)).sqrt();
        let third = (64.0 * p_hat / (delta * delta * n_f)).sqrt().min(64.0 / (delta * n_f));
        err > first || first > second * (1.0 + 1e-12) || err > third
    });
    Ok(CheckReport::frequency(ID, inst, failures, trials, delta))
}

/// Per-pair count distributions of the collection schedule, estimated from
/// `lists` independent simulated runs.
pub fn schedule_reference(mdp: &FiniteMdp, lists: u64, rng: &RngStream) -> Result<Vec<VisitationDistribution>> {
    let counts = schedule_counts(mdp, lists, rng, &Budget::unlimited())?;
    let na = mdp.n_actions();
    Ok((0..mdp.n_pairs())
        .map(|k| {
            let c: Vec<usize> = counts.iter().map(|row| row[k] as usize).collect();
            VisitationDistribution::from_counts(k / na, k % na, &c)
        })
        .collect())
}

fn pair_label(mdp: &FiniteMdp, k: usize) -> String {
    format!("S={} A={} H={} s={} a={}", mdp.n_states(), mdp.n_actions(), mdp.horizon(), k / mdp.n_actions(), k % mdp.n_actions())
}

/// The estimated quantile lies in `[Q^st_{eps}, Q^st_{eps/4}]` for every
/// pair, failing with frequency at most `delta` over `seeds` runs of
/// [`estimate_quantiles`]. `reference` holds the schedule count
/// distributions from [`schedule_reference`].
pub fn check_quantile_bracket(
    mdp: &FiniteMdp,
    eps_est: f64,
    delta: f64,
    scale: f64,
    reference: &[VisitationDistribution],
    seeds: u64,
    rng: &RngStream,
) -> Result<Vec<CheckReport>> {
    const ID: &str = "quantile_bracket";
    let lo: Vec<u64> = reference.iter().map(|d| exact_quantile(d, eps_est) as u64).collect();
    let hi: Vec<u64> = reference.iter().map(|d| exact_quantile(d, eps_est / 4.0) as u64).collect();
    let tables = (0..seeds)
        .into_par_iter()
        .map(|i| estimate_quantiles(mdp, eps_est, delta, scale, &rng.substream(i), &Budget::unlimited()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..mdp.n_pairs())
        .map(|k| {
            let fails = tables.iter().filter(|t| !(lo[k]..=hi[k]).contains(&t.values()[k])).count() as u64;
            let inst = format!("{} eps_est={eps_est} bracket=[{},{}] seeds={seeds}", pair_label(mdp, k), lo[k], hi[k]);
            CheckReport::frequency(ID, inst, fails, seeds, delta)
        })
        .collect())
}

/// With `N >= 16 / eps * ln(3|S||A| / delta)` lists, at least `N eps / 8`
/// of them visit each pair at least `Q^st_{eps/4}` times. Fails with
/// frequency at most `delta` over `seeds` runs.
pub fn check_coverage(
    mdp: &FiniteMdp,
    eps: f64,
    delta: f64,
    lists: u64,
    reference: &[VisitationDistribution],
    seeds: u64,
    rng: &RngStream,
) -> Result<Vec<CheckReport>> {
    const ID: &str = "coverage";
    let need = 16.0 / eps * (3.0 * mdp.n_pairs() as f64 / delta).ln();
    let hi: Vec<u32> = reference.iter().map(|d| exact_quantile(d, eps / 4.0) as u32).collect();
    let floor = lists as f64 * eps / 8.0;
    let runs = (0..seeds)
        .into_par_iter()
        .map(|i| schedule_counts(mdp, lists, &rng.substream(i), &Budget::unlimited()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..mdp.n_pairs())
        .map(|k| {
            let inst = format!("{} eps={eps} N={lists} threshold={} seeds={seeds}", pair_label(mdp, k), hi[k]);
            if (lists as f64) < need || !(eps > 0.0 && eps <= 1.0) || !unit_open(delta) {
                return CheckReport::unmet(ID, inst);
            }
            let fails = runs
                .iter()
                .filter(|counts| (counts.iter().filter(|c| c[k] >= hi[k]).count() as f64) < floor)
                .count() as u64;
            CheckReport::frequency(ID, inst, fails, seeds, delta)
        })
        .collect())
}

/// The true model lies in the pipeline's interval set with frequency at
/// least `1 - delta` over `seeds` runs.
pub fn check_confidence_membership(mdp: &FiniteMdp, params: &PipelineParams, seeds: u64, rng: &RngStream) -> Result<CheckReport> {
    const ID: &str = "confidence_membership";
    let outside = (0..seeds)
        .into_par_iter()
        .map(|i| run_pessimistic_pipeline(mdp, params, &rng.substream(i)).map(|(_, d)| u64::from(!d.true_model_contained)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let inst = format!(
        "S={} A={} H={} eps={} delta={} scale={} seeds={seeds}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon(),
        params.epsilon,
        params.delta,
        params.scale
    );
    Ok(CheckReport::frequency(ID, inst, outside, seeds, params.delta))
}

/// With `N` generative samples per pair, every transition entry is within
/// `4 sqrt(P ln(6|S|^2|A| / delta) / N)` of the truth. Fails with frequency
/// at most `delta` over `seeds` runs.
pub fn check_generative_approximation(mdp: &FiniteMdp, n: u64, delta: f64, seeds: u64, rng: &RngStream) -> Result<CheckReport> {
    const ID: &str = "generative_approximation";
    let inst = format!("S={} A={} N={n} delta={delta} seeds={seeds}", mdp.n_states(), mdp.n_actions());
    if n == 0 || !unit_open(delta) {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let log = (6.0 * (ns * ns * na) as f64 / delta).ln();
    let fails = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut env = GenerativeModel::new(mdp, rng.substream(i));
            let model = build_generative_model(&mut env, mdp, n)?;
            let bad = mdp
                .transition()
                .iter()
                .zip(&model.transition)
                .any(|(&p, &q)| (p - q).abs() > 4.0 * (p * log / n as f64).sqrt() + 1e-12);
            Ok(u64::from(bad))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(CheckReport::frequency(ID, inst, fails, seeds, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{coinflip, twostate_exit};

    #[test]
    fn deterministic_model_never_fails() {
        let m = twostate_exit(5).unwrap();
        let pi = Policy::Stationary(vec![0, 0]);
        let rng = RngStream::new(1, 0);
        let t = Triple::new(0, 0, 0);
        let r = check_martingale_concentration(&m, &pi, t, 0.1, 2000, &rng).unwrap();
        assert_eq!(r.lhs, 0.0);
        let r = check_visit_upperbound(&m, &pi, Triple::new(0, 1, 1), 0.1, 2000, &rng).unwrap();
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn coinflip_concentration() {
        let m = coinflip(4).unwrap();
        let pi = Policy::Stationary(vec![0, 0]);
        let rng = RngStream::new(2, 0);
        for delta in [0.1, 0.25] {
            let t = Triple::new(0, 0, 1);
            assert!(check_visit_upperbound(&m, &pi, t, delta, 5000, &rng).unwrap().pass);
            assert!(check_martingale_concentration(&m, &pi, t, delta, 5000, &rng).unwrap().pass);
        }
    }

    #[test]
    fn prob_approx_hypotheses() {
        let m = coinflip(4).unwrap();
        let rng = RngStream::new(3, 0);
        let never = Policy::Stationary(vec![1, 1]);
        let r = check_prob_approx_error(&m, &never, Triple::new(1, 0, 0), 0.25, 1000, 10, &rng).unwrap();
        assert!(!r.hypothesis_ok);
        let pi = Policy::Stationary(vec![0, 0]);
        assert!(!check_prob_approx_error(&m, &pi, Triple::new(0, 0, 1), 0.25, 10, 10, &rng).unwrap().hypothesis_ok);
        let r = check_prob_approx_error(&m, &pi, Triple::new(0, 0, 1), 0.25, 800, 200, &rng).unwrap();
        assert!(r.hypothesis_ok && r.pass);
    }

    #[test]
    fn failure_counts_do_not_depend_on_chunking() {
        let rng = RngStream::new(4, 0);
        let a = count_failures(3000, &rng, |r| r.uniform() < 0.5);
        let b = count_failures(3000, &rng, |r| r.uniform() < 0.5);
        assert_eq!(a, b);
        assert!(a > 1300 && a < 1700);
    }
}
