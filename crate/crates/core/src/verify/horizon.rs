use super::{ln_eight_pow, pow_self, CheckReport};
use crate::collector::{schedule_counts, Budget};
use crate::error::Result;
use crate::mdp::{enumerate_stationary_policies, validate_bounded_total_reward, FiniteMdp, Policy, RewardDist};
use crate::oracle::{
    best_stationary, discounted_value, exact_quantile, finite_horizon_value, max_prob_visits_at_least,
    optimal_nonstationary, visitation_distribution, VisitationDistribution, QUANTILE_TOL,
};
use crate::sim::RngStream;

fn dims(mdp: &FiniteMdp) -> String {
    format!("S={} A={} H={}", mdp.n_states(), mdp.n_actions(), mdp.horizon())
}

/// With `gamma = 1 - ln(8|S|^(4|S|))/H` and `H >= 2 ln(8|S|^(4|S|))`, a
/// stationary policy's discounted value lies in
/// `[V_H / (64 |S|^(8|S|)), 2 V_H]`.
pub fn check_discount_finite(mdp: &FiniteMdp, policy: &Policy) -> Result<CheckReport> {
    const ID: &str = "discount_finite";
    let n = mdp.n_states();
    let k = ln_eight_pow(n);
    let h = mdp.horizon() as f64;
    let inst = dims(mdp);
    if !policy.is_stationary() || h < 2.0 * k {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let gamma = 1.0 - k / h;
    let vh = finite_horizon_value(mdp, policy)?;
    let vg = discounted_value(mdp, policy, gamma)?;
    Ok(CheckReport::all(ID, inst, &[(vh / (64.0 * pow_self(n, 8)), vg), (vg, 2.0 * vh)]))
}

/// For `H >= 2|S|`, a stationary policy collects at least a
/// `1 / (4 |S|^(4|S|))` fraction of its value in the first `floor(H/2)` steps.
pub fn check_half_trajectory(mdp: &FiniteMdp, policy: &Policy) -> Result<CheckReport> {
    const ID: &str = "half_trajectory";
    let n = mdp.n_states();
    let inst = dims(mdp);
    if !policy.is_stationary() || mdp.horizon() < 2 * n {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let vh = finite_horizon_value(mdp, policy)?;
    let half = finite_horizon_value(&mdp.with_horizon(mdp.horizon() / 2)?, policy)?;
    Ok(CheckReport::inequality(ID, inst, vh / (4.0 * pow_self(n, 4)), half))
}

/// For `H >= 2 ln(8|S|^(4|S|))`, the best stationary policy reaches a
/// `1 / (128 |S|^(8|S|))` fraction of the optimal value.
pub fn check_stationary_near_optimal(mdp: &FiniteMdp, cap: u64) -> Result<CheckReport> {
    const ID: &str = "stationary_near_optimal";
    let n = mdp.n_states();
    let inst = dims(mdp);
    if (mdp.horizon() as f64) < 2.0 * ln_eight_pow(n) {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let (_, best) = best_stationary(mdp, cap)?;
    let (_, opt) = optimal_nonstationary(mdp);
    Ok(CheckReport::inequality(ID, inst, opt / (128.0 * pow_self(n, 8)), best))
}

/// `mdp` plus an absorbing state `|S|`; taking `z` pays 1 and moves there.
/// The value of any policy is the probability of taking `z` within the horizon.
pub fn absorbing_reach_model(mdp: &FiniteMdp, z: (usize, usize), horizon: usize) -> Result<FiniteMdp> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n2 = ns + 1;
    let mut transition = vec![0.0; n2 * na * n2];
    let mut reward = Vec::with_capacity(n2 * na);
    for s in 0..n2 {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * n2..(s * na + a + 1) * n2];
            if s == ns || (s, a) == z {
                row[ns] = 1.0;
            } else {
                row[..ns].copy_from_slice(mdp.row(s, a));
            }
            reward.push(if (s, a) == z { RewardDist::constant(1.0)? } else { RewardDist::zero() });
        }
    }
    let mut initial = mdp.initial().to_vec();
    initial.push(0.0);
    FiniteMdp::new(n2, na, horizon, transition, reward, initial)
}

fn extend_stationary(p: &Policy) -> Policy {
    match p {
        Policy::Stationary(m) => {
            let mut m = m.clone();
            m.push(0);
            Policy::Stationary(m)
        }
        other => other.clone(),
    }
}

/// Some stationary policy takes `z` within `floor(H/2)` steps with
/// probability at least `1 / (512 (|S|+1)^(12(|S|+1)))` times the best
/// probability of taking `z` within `H` steps.
pub fn check_reaching_stationary(mdp: &FiniteMdp, z: (usize, usize), cap: u64) -> Result<CheckReport> {
    const ID: &str = "reaching_stationary";
    let n = mdp.n_states();
    let inst = format!("{} z={z:?}", dims(mdp));
    if (mdp.horizon() as f64) < 2.0 * ln_eight_pow(n + 1) {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let full = absorbing_reach_model(mdp, z, mdp.horizon())?;
    let half = full.with_horizon(mdp.horizon() / 2)?;
    let (_, best_any) = optimal_nonstationary(&full);
    let mut best_stationary = 0.0f64;
    for p in enumerate_stationary_policies(mdp, cap)? {
        best_stationary = best_stationary.max(finite_horizon_value(&half, &extend_stationary(&p))?);
    }
    let c = 1.0 / (512.0 * pow_self(n + 1, 12));
    Ok(CheckReport::inequality(ID, inst, c * best_any, best_stationary))
}

/// Largest `m <= H` such that some policy visits `z` at least `m` times with
/// probability at least `eps`. The maximization runs over history-dependent
/// policies.
pub fn max_quantile_any_policy(mdp: &FiniteMdp, z: (usize, usize), eps: f64) -> usize {
    (1..=mdp.horizon())
        .take_while(|&m| max_prob_visits_at_least(mdp, z.0, z.1, m) >= eps - QUANTILE_TOL)
        .last()
        .unwrap_or(0)
}

/// With `mu` a point mass at `s_z`, if some policy has `Q_eps(z) >= f`, then
/// a stationary policy's median visit count in the first `floor(H/2)` steps
/// is at least `floor(eps f / (2048 |S|^(12|S|)))`.
pub fn check_quantile_comparison(mdp: &FiniteMdp, z: (usize, usize), eps: f64, f: usize, cap: u64) -> Result<CheckReport> {
    const ID: &str = "quantile_comparison";
    let n = mdp.n_states();
    let inst = format!("{} z={z:?} eps={eps} f={f}", dims(mdp));
    let point_mass = mdp.initial()[z.0] == 1.0;
    let long_enough = mdp.horizon() as f64 >= 2.0 * ln_eight_pow(n);
    let exists = f <= mdp.horizon() && max_prob_visits_at_least(mdp, z.0, z.1, f) >= eps - QUANTILE_TOL;
    if !(point_mass && long_enough && exists && eps > 0.0 && eps <= 1.0) {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let half = mdp.with_horizon(mdp.horizon() / 2)?;
    let mut best = 0usize;
    for p in enumerate_stationary_policies(mdp, cap)? {
        best = best.max(exact_quantile(&visitation_distribution(&half, &p, z.0, z.1)?, 0.5));
    }
    let bound = (eps * f as f64 / (2048.0 * pow_self(n, 12))).floor();
    Ok(CheckReport::inequality(ID, inst, bound, best as f64))
}

/// If some policy visits `(s, a)` at least twice with probability at least
/// `eps`, `H >= |S|` and total reward is bounded by one, then every reward
/// value at `(s, a)` is at most `2|S|/H`.
pub fn check_reward_structure(mdp: &FiniteMdp, s: usize, a: usize, eps: f64) -> CheckReport {
    const ID: &str = "reward_structure";
    let inst = format!("{} s={s} a={a} eps={eps}", dims(mdp));
    let ok = mdp.horizon() >= mdp.n_states()
        && eps > 0.0
        && validate_bounded_total_reward(mdp).holds
        && max_prob_visits_at_least(mdp, s, a, 2) >= eps - QUANTILE_TOL;
    if !ok {
        return CheckReport::unmet(ID, inst);
    }
    let bound = 2.0 * mdp.n_states() as f64 / mdp.horizon() as f64;
    CheckReport::inequality(ID, inst, mdp.reward(s, a).max_support(), bound)
}

/// Per-pair check that the collection schedule's count quantile at
/// percentile `eps (|S|+1)^(-12(|S|+1)) / 1024` is at least
/// `eps m_eps(s,a) / (4096 |S|^(12|S|))`, where `m_eps` is the best
/// `eps`-quantile over all policies.
///
/// The schedule quantile comes from `lists` simulated schedule runs. The
/// empirical quantile at a percentile below `1/lists` is the sample maximum,
/// which cannot exceed the true quantile unless a count of probability below
/// the percentile was observed.
pub fn check_stationary_quantile(mdp: &FiniteMdp, eps: f64, lists: u64, rng: &RngStream) -> Result<Vec<CheckReport>> {
    const ID: &str = "stationary_quantile";
    let n = mdp.n_states();
    let counts = schedule_counts(mdp, lists, rng, &Budget::unlimited())?;
    let percentile = eps * (n as f64 + 1.0).powf(-12.0 * (n as f64 + 1.0)) / 1024.0;
    let mut out = Vec::with_capacity(mdp.n_pairs());
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let inst = format!("{} s={s} a={a} eps={eps} lists={lists}", dims(mdp));
            if !(eps > 0.0 && eps <= 1.0) {
                out.push(CheckReport::unmet(ID, inst));
                continue;
            }
            let m_eps = max_quantile_any_policy(mdp, (s, a), eps);
            let k = mdp.pair_index(s, a);
            let samples: Vec<usize> = counts.iter().map(|c| c[k] as usize).collect();
            let q = exact_quantile(&VisitationDistribution::from_counts(s, a, &samples), percentile);
            let bound = eps * m_eps as f64 / (4096.0 * pow_self(n, 12));
            out.push(CheckReport::inequality(ID, inst, bound, q as f64));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::twostate_exit;

    fn self_loop(h: usize, r: f64) -> FiniteMdp {
        FiniteMdp::new(1, 1, h, vec![1.0], vec![RewardDist::constant(r).unwrap()], vec![1.0]).unwrap()
    }

    #[test]
    fn single_state_discount_closed_form() {
        let h = 32;
        let m = self_loop(h, 1.0 / h as f64);
        let r = check_discount_finite(&m, &Policy::Stationary(vec![0])).unwrap();
        assert!(r.pass);
        let vg = (1.0 / h as f64) / (8f64.ln() / h as f64);
        assert!((vg - 1.0 / 8f64.ln()).abs() < 1e-12);
        assert!((r.lhs - vg).abs() < 1e-12 || (r.rhs - vg).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn short_horizon_is_flagged() {
        let m = twostate_exit(4).unwrap();
        assert!(!check_discount_finite(&m, &Policy::Stationary(vec![0, 0])).unwrap().hypothesis_ok);
        assert!(!check_stationary_near_optimal(&m, 100).unwrap().hypothesis_ok);
    }

    #[test]
    fn exit_example_near_optimality() {
        let m = twostate_exit(64).unwrap();
        let r = check_stationary_near_optimal(&m, 100).unwrap();
        assert!(r.hypothesis_ok && r.pass);
        assert!(r.rhs <= 1.0 + 1e-12);
    }

    #[test]
    fn deterministic_reach() {
        let m = self_loop(64, 0.0);
        let r = check_reaching_stationary(&m, (0, 0), 10).unwrap();
        assert_eq!(r.rhs, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn self_loop_quantiles() {
        let m = self_loop(40, 0.0);
        assert_eq!(max_quantile_any_policy(&m, (0, 0), 1.0), 40);
        let r = check_quantile_comparison(&m, (0, 0), 1.0, 40, 10).unwrap();
        assert_eq!(r.rhs, 20.0);
        assert!(r.pass);
    }

    #[test]
    fn reward_bound_on_self_loop() {
        let r = check_reward_structure(&self_loop(8, 1.0 / 8.0), 0, 0, 0.5);
        assert!(r.hypothesis_ok && r.pass);
        assert!(!check_reward_structure(&self_loop(8, 2.0 / 8.0), 0, 0, 0.5).hypothesis_ok);
    }
}
