use rayon::prelude::*;

use super::*;
use crate::error::{Error, Result};
use crate::generators::{coinflip, random_chain, random_mdp, twostate_exit, RandomMdpOptions};
use crate::mdp::{FiniteMdp, Policy};
use crate::planner::{theoretical_lists, PipelineParams};
use crate::sim::RngStream;

/// Names accepted by [`run_corpus`].
pub const CORPORA: &[&str] = &["lemmas-deterministic", "concentration", "estimators", "empty"];

/// Monte Carlo trials per concentration check.
pub const CONCENTRATION_TRIALS: u64 = 100_000;

/// Runs every checker in the named corpus. Instances are drawn from
/// substreams of `seed`, so the output depends only on the name and seed.
pub fn run_corpus(name: &str, seed: u64) -> Result<Vec<CheckReport>> {
    match name {
        "lemmas-deterministic" => lemma_corpus(seed),
        "concentration" => concentration_corpus(seed),
        "estimators" => estimator_corpus(seed),
        "empty" => Ok(Vec::new()),
        other => Err(Error::Argument(format!("unknown corpus '{other}' (known: {})", CORPORA.join(", ")))),
    }
}

/// Runs `f` on instances `0..n`, each with its own substream of family
/// `stream`, and concatenates the reports in instance order.
fn family<F>(seed: u64, stream: u64, n: u64, f: F) -> Result<Vec<CheckReport>>
where
    F: Fn(u64, &mut RngStream) -> Result<Vec<CheckReport>> + Sync,
{
    let base = RngStream::new(seed, stream);
    let parts = (0..n)
        .into_par_iter()
        .map(|i| f(i, &mut base.substream(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn pick(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + rng.sample_index(&vec![1.0 / (hi - lo + 1) as f64; hi - lo + 1])
}

fn random_stationary(rng: &mut RngStream, mdp: &FiniteMdp) -> Policy {
    Policy::Stationary((0..mdp.n_states()).map(|_| pick(rng, 0, mdp.n_actions() - 1)).collect())
}

fn dense(rng: &mut RngStream, ns: usize, na: usize, h: usize) -> Result<FiniteMdp> {
    random_mdp(rng.rng_mut(), ns, na, h, RandomMdpOptions::dense(h))
}

fn point_start(rng: &mut RngStream, ns: usize, na: usize, h: usize) -> Result<FiniteMdp> {
    let opts = RandomMdpOptions { random_initial: false, ..RandomMdpOptions::dense(h) };
    random_mdp(rng.rng_mut(), ns, na, h, opts)
}

fn min_horizon(n: usize) -> usize {
    (2.0 * ln_eight_pow(n)).ceil() as usize
}

fn lemma_corpus(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    out.extend(family(seed, 1, 300, |_, rng| {
        let n = pick(rng, 2, 4);
        let chain = random_chain(rng.rng_mut(), n, 0.3)?;
        let s = pick(rng, 0, n - 1);
        let len = pick(rng, n + 1, 2 * n + 3);
        let states: Vec<usize> = (0..len).map(|_| pick(rng, 0, n - 1)).collect();
        Ok(vec![
            check_mc_main(&chain, s, pick(rng, n, 12))?,
            check_sum_unexpanded(&chain, s)?,
            check_sum_expanded(&chain, s, pick(rng, 0, 5), pick(rng, 1, 4))?,
            check_reduction(&chain, &states),
        ])
    })?);
    out.extend(family(seed, 2, 100, |_, rng| {
        let n = pick(rng, 2, 3);
        let h = min_horizon(n) + pick(rng, 0, 16);
        let m = dense(rng, n, 2, h)?;
        let pi = random_stationary(rng, &m);
        Ok(vec![check_discount_finite(&m, &pi)?, check_half_trajectory(&m, &pi)?])
    })?);
    out.extend(family(seed, 3, 40, |i, rng| {
        let h = min_horizon(2) + pick(rng, 0, 48);
        let m = if i == 0 { twostate_exit(64)? } else { dense(rng, 2, 2, h)? };
        Ok(vec![check_stationary_near_optimal(&m, 1 << 16)?])
    })?);
    out.extend(family(seed, 4, 20, |_, rng| {
        let h = min_horizon(3) + pick(rng, 0, 8);
        let m = dense(rng, 2, 2, h)?;
        let z = (pick(rng, 0, 1), pick(rng, 0, 1));
        Ok(vec![check_reaching_stationary(&m, z, 1 << 16)?])
    })?);
    out.extend(family(seed, 5, 20, |_, rng| {
        let h = min_horizon(2) + pick(rng, 0, 8);
        let m = point_start(rng, 2, 2, h)?;
        let z = (0, pick(rng, 0, 1));
        let eps = 0.1 + 0.9 * rng.uniform();
        let f = max_quantile_any_policy(&m, z, eps);
        Ok(vec![check_quantile_comparison(&m, z, eps, f, 1 << 16)?])
    })?);
    out.extend(family(seed, 6, 20, |_, rng| {
        let h = pick(rng, 2, 10);
        let m = dense(rng, 2, 2, h)?;
        Ok((0..m.n_pairs()).map(|k| check_reward_structure(&m, k / 2, k % 2, 0.1)).collect())
    })?);
    out.extend(family(seed, 7, 2000, |_, rng| Ok(vec![check_mult_add(&MultAddInstance::random(rng, 6))]))?);
    out.extend((0..=100).map(|i| check_fact_log(-0.5 + i as f64 / 100.0)));
    out.extend(family(seed, 8, 30, |_, rng| {
        let h = pick(rng, 2, 6);
        let m = dense(rng, 2, 2, h)?;
        let pi = random_stationary(rng, &m);
        let eps = 0.05 + 0.45 * rng.uniform();
        let tol = episodic_tolerances(&m, &pi, eps)?;
        let lower = perturb_within(&m, &tol, true, rng)?;
        let upper = perturb_within(&m, &tol, false, rng)?;
        let generative = perturb_within(&m, &generative_tolerances(&m, eps), true, rng)?;
        Ok(vec![
            check_perturbation_lower(&m, &lower, &pi, eps)?,
            check_perturbation_upper(&m, &upper, &pi, eps)?,
            check_perturbation_generative(&m, &generative, &pi, eps)?,
        ])
    })?);
    out.extend(family(seed, 9, 4, |i, rng| {
        let m = dense(rng, 2, 2, 4)?;
        check_stationary_quantile(&m, 0.25, 500, &RngStream::new(seed, 100 + i))
    })?);
    Ok(out)
}

/// `K` at the smallest value meeting `K delta >= 64 ln(4 / delta)`.
pub fn min_prob_approx_episodes(delta: f64) -> u64 {
    (64.0 * (4.0 / delta).ln() / delta).ceil() as u64
}

fn concentration_corpus(seed: u64) -> Result<Vec<CheckReport>> {
    let m = coinflip(4)?;
    let pi = Policy::Stationary(vec![0, 0]);
    let mut out = Vec::new();
    for (j, delta) in [0.1, 0.25].into_iter().enumerate() {
        let stream = |k: u64| RngStream::new(seed, 10 * j as u64 + k);
        for (k, t) in [Triple::new(0, 0, 1), Triple::new(1, 0, 0)].into_iter().enumerate() {
            let k = 3 * k as u64;
            out.push(check_visit_upperbound(&m, &pi, t, delta, CONCENTRATION_TRIALS, &stream(k))?);
            out.push(check_martingale_concentration(&m, &pi, t, delta, CONCENTRATION_TRIALS, &stream(k + 1))?);
        }
        let episodes = min_prob_approx_episodes(delta);
        out.push(check_prob_approx_error(&m, &pi, Triple::new(0, 0, 1), delta, episodes, CONCENTRATION_TRIALS, &stream(9))?);
    }
    Ok(out)
}

fn estimator_corpus(seed: u64) -> Result<Vec<CheckReport>> {
    let m = coinflip(3)?;
    let (eps, delta, seeds) = (0.2, 0.1, 100);
    let reference = schedule_reference(&m, 20_000, &RngStream::new(seed, 1))?;
    let mut out = check_quantile_bracket(&m, eps, delta, 0.05, &reference, seeds, &RngStream::new(seed, 2))?;
    let lists = (16.0 / eps * (3.0 * m.n_pairs() as f64 / delta).ln()).ceil() as u64;
    out.extend(check_coverage(&m, eps, delta, lists, &reference, seeds, &RngStream::new(seed, 3))?);
    let mut params = PipelineParams::new(0.5, delta, 500.0 / theoretical_lists(2, 2, 0.5, delta));
    params.eps_est = Some(eps);
    params.reuse_phase_samples = true;
    out.push(check_confidence_membership(&m, &params, seeds, &RngStream::new(seed, 4))?);
    out.push(check_generative_approximation(&m, 2000, delta, seeds, &RngStream::new(seed, 5))?);
    Ok(out)
}
