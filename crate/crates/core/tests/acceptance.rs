//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use hzrl_core::collector::{collect_samples, estimate_quantiles, schedule_episodes, Budget};
use hzrl_core::estimate::{build_truncated_model, confidence_widths, contains, EstimatedModel, IntervalModelSet};
use hzrl_core::generators::{coinflip, random_chain, random_dense, random_mdp, twostate_exit, RandomMdpOptions};
use hzrl_core::oracle::{exact_quantile, finite_horizon_value, optimal_nonstationary, VisitationDistribution};
use hzrl_core::planner::{
    pessimistic_plan, pessimistic_policy_value, run_generative_pipeline, run_pessimistic_pipeline, theoretical_lists,
    worst_case_row, GenerativeSamples, PipelineParams,
};
use hzrl_core::sim::RngStream;
use hzrl_core::verify::*;
use hzrl_core::{FiniteMdp, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn ln_eight_pow(n: usize) -> f64 {
    8f64.ln() + 4.0 * n as f64 * (n as f64).ln()
}

fn self_pow(n: usize, k: usize) -> f64 {
    (n as f64).powi((k * n) as i32)
}

fn local_value(m: &FiniteMdp, pi: &Policy) -> f64 {
    let ns = m.n_states();
    let mut v = vec![0.0; ns];
    for h in (0..m.horizon()).rev() {
        v = (0..ns)
            .map(|s| {
                let a = pi.action(h, s);
                m.reward(s, a).mean() + m.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            })
            .collect();
    }
    m.initial().iter().zip(&v).map(|(p, x)| p * x).sum()
}

fn local_optimum(m: &FiniteMdp) -> f64 {
    let ns = m.n_states();
    let mut v = vec![0.0; ns];
    for _ in 0..m.horizon() {
        v = (0..ns)
            .map(|s| {
                (0..m.n_actions())
                    .map(|a| m.reward(s, a).mean() + m.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
                    .fold(f64::MIN, f64::max)
            })
            .collect();
    }
    m.initial().iter().zip(&v).map(|(p, x)| p * x).sum()
}

fn local_discounted(m: &FiniteMdp, pi: &Policy, gamma: f64) -> f64 {
    let ns = m.n_states();
    let mut v = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                let a = pi.action(0, s);
                m.reward(s, a).mean() + gamma * m.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < 1e-16 {
            break;
        }
    }
    m.initial().iter().zip(&v).map(|(p, x)| p * x).sum()
}

fn random_policy(rng: &mut ChaCha8Rng, ns: usize, na: usize) -> Policy {
    Policy::Stationary((0..ns).map(|_| rng.gen_range(0..na)).collect())
}

fn dense(rng: &mut ChaCha8Rng, ns: usize, na: usize, h: usize) -> FiniteMdp {
    random_mdp(rng, ns, na, h, RandomMdpOptions::dense(h)).unwrap()
}

fn failures(reports: &[CheckReport]) -> usize {
    reports.iter().filter(|r| !(r.hypothesis_ok && r.pass)).count()
}

fn chain_ratio() -> Outcome {
    let start = Instant::now();
    let bad: Vec<String> = (0..10_000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let n = rng.gen_range(2..=4);
            let chain = random_chain(&mut rng, n, 0.3).unwrap();
            let s = rng.gen_range(0..n);
            let l = rng.gen_range(n..=12);
            let r = check_mc_main(&chain, s, l).unwrap();
            let p: Vec<f64> = chain_marginals(&chain, 2 * l).iter().map(|d| d[s]).collect();
            let lhs: f64 = p.iter().sum();
            let rhs = 4.0 * self_pow(n, 4) * p[..l].iter().sum::<f64>();
            let ok = r.hypothesis_ok && r.pass && lhs <= rhs * (1.0 + 1e-9) && close(r.lhs, lhs, 1e-9) && close(r.rhs, rhs, 1e-9);
            (!ok).then(|| format!("chain {i}: lhs {lhs} rhs {rhs}"))
        })
        .collect();
    ensure(bad.is_empty(), || format!("{} of 10000 failed, first {}", bad.len(), bad[0]))?;
    within(start.elapsed(), 60)?;
    Ok("10000 chains".into())
}

fn discount_comparison() -> Outcome {
    let start = Instant::now();
    let bad: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000_000 + i);
            let n = rng.gen_range(2..=3);
            let k = ln_eight_pow(n);
            let h = (2.0 * k).ceil() as usize + rng.gen_range(0..=32);
            let m = dense(&mut rng, n, 2, h);
            let pi = random_policy(&mut rng, n, 2);
            let r = check_discount_finite(&m, &pi).unwrap();
            let vh = local_value(&m, &pi);
            let vg = local_discounted(&m, &pi, 1.0 - k / h as f64);
            let ok = r.hypothesis_ok
                && r.pass
                && vh / (64.0 * self_pow(n, 8)) <= vg * (1.0 + 1e-9)
                && vg <= 2.0 * vh * (1.0 + 1e-9)
                && close(finite_horizon_value(&m, &pi).unwrap(), vh, 1e-12);
            (!ok).then(|| format!("mdp {i}: V_H {vh} V_gamma {vg}"))
        })
        .collect();
    ensure(bad.is_empty(), || format!("{} of 1000 failed, first {}", bad.len(), bad[0]))?;
    within(start.elapsed(), 60)?;
    Ok("1000 MDPs".into())
}

fn stationary_near_optimal() -> Outcome {
    let mut models: Vec<FiniteMdp> = (0..200u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(2_000_000 + i);
            let h = (2.0 * ln_eight_pow(2)).ceil() as usize + rng.gen_range(0..=48);
            dense(&mut rng, 2, 2, h)
        })
        .collect();
    models.push(twostate_exit(64).unwrap());
    for (i, m) in models.iter().enumerate() {
        let r = check_stationary_near_optimal(m, 1 << 16).unwrap();
        let best = all_stationary(2, 2).iter().map(|p| local_value(m, p)).fold(f64::MIN, f64::max);
        let opt = local_optimum(m);
        ensure(r.hypothesis_ok && r.pass && opt / (128.0 * self_pow(2, 8)) <= best, || format!("instance {i}: {r:?}"))?;
        ensure(close(r.rhs, best, 1e-12), || format!("instance {i}: best stationary {} vs {best}", r.rhs))?;
    }
    let exit = models.last().unwrap();
    let opt = optimal_nonstationary(exit).1;
    let best = hzrl_core::oracle::best_stationary(exit, 16).unwrap().1;
    ensure((opt - (2.0 - 1.0 / 64.0)).abs() <= 1e-12, || format!("exit optimum {opt}"))?;
    ensure(best <= 1.0 + 1e-12 && (best - 1.0).abs() <= 1e-12, || format!("exit stationary {best}"))?;
    Ok(format!("201 instances, exit V* = {opt}, stationary {best}"))
}

fn mult_add() -> Outcome {
    let start = Instant::now();
    let base = RngStream::new(4, 0);
    let bad = (0..100_000u64)
        .into_par_iter()
        .filter(|&i| {
            let inst = MultAddInstance::random(&mut base.substream(i), 6);
            let r = check_mult_add(&inst);
            let direct: f64 = inst
                .p
                .iter()
                .zip(&inst.delta)
                .zip(&inst.gamma)
                .map(|((&p, &d), &g)| ((p + d) / p).powf(p * inst.m + g))
                .product();
            let b = 8.0 * inst.n_bar as f64 * inst.eps;
            !(r.hypothesis_ok && r.pass && close(inst.ratio(), direct, 1e-9) && (1.0 - b..=1.0 + b).contains(&direct))
        })
        .count();
    ensure(bad == 0, || format!("{bad} of 100000 failed"))?;
    within(start.elapsed(), 30)?;
    Ok("100000 instances".into())
}

fn perturbation() -> Outcome {
    let bad: Vec<String> = (0..500u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = RngStream::new(5, i);
            let mut seed_rng = ChaCha8Rng::seed_from_u64(5_000_000 + i);
            let h = seed_rng.gen_range(2..=6);
            let m = dense(&mut seed_rng, 2, 2, h);
            let pi = random_policy(&mut seed_rng, 2, 2);
            let eps = 0.05 + 0.45 * seed_rng.gen::<f64>();
            let tol = episodic_tolerances(&m, &pi, eps).unwrap();
            let lower = perturb_within(&m, &tol, true, &mut rng).unwrap();
            let upper = perturb_within(&m, &tol, false, &mut rng).unwrap();
            let generative = perturb_within(&m, &generative_tolerances(&m, eps), true, &mut rng).unwrap();
            let v = brute_value(&m, &pi);
            let (vl, vu, vg) = (brute_value(&lower, &pi), brute_value(&upper, &pi), brute_value(&generative, &pi));
            let reports = [
                check_perturbation_lower(&m, &lower, &pi, eps).unwrap(),
                check_perturbation_upper(&m, &upper, &pi, eps).unwrap(),
                check_perturbation_generative(&m, &generative, &pi, eps).unwrap(),
            ];
            let exact = vl >= v - eps - 1e-12 && vu <= v + eps + 1e-12 && (vg - v).abs() <= eps / 2.0 + 1e-12;
            (failures(&reports) > 0 || !exact).then(|| format!("instance {i}: {reports:?}"))
        })
        .collect();
    ensure(bad.is_empty(), || format!("{} of 500 failed, first {}", bad.len(), bad[0]))?;
    Ok("500 instances, each with lower, upper and generative perturbations".into())
}

fn concentration() -> Outcome {
    let start = Instant::now();
    let reports = run_corpus("concentration", 0).map_err(|e| e.to_string())?;
    let bad: Vec<_> = reports.iter().filter(|r| !(r.hypothesis_ok && r.pass)).collect();
    ensure(bad.is_empty(), || format!("{bad:?}"))?;
    within(start.elapsed(), 300)?;
    let worst = reports.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
    Ok(format!("{} checks, worst frequency/bound {worst:.3}", reports.len()))
}

fn frequency_bound(delta: f64, n: u64) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / n as f64).sqrt()
}

fn estimator_brackets() -> Outcome {
    let (eps, delta, seeds) = (0.2, 0.1, 200u64);
    let m = coinflip(4).unwrap();
    let na = m.n_actions();
    let simulated = simulate_schedule(&m, 100_000, 7);
    let reference: Vec<VisitationDistribution> = (0..m.n_pairs())
        .map(|k| {
            let c: Vec<usize> = simulated.iter().map(|r| r[k] as usize).collect();
            VisitationDistribution::from_counts(k / na, k % na, &c)
        })
        .collect();
    let lo: Vec<u64> = reference.iter().map(|d| exact_quantile(d, eps) as u64).collect();
    let hi: Vec<u64> = reference.iter().map(|d| exact_quantile(d, eps / 4.0) as u64).collect();
    for k in 0..m.n_pairs() {
        let col: Vec<u32> = simulated.iter().map(|r| r[k]).collect();
        ensure(lo[k] == empirical_quantile(&col, eps) && hi[k] == empirical_quantile(&col, eps / 4.0), || {
            format!("reference quantile mismatch on pair {k}")
        })?;
    }
    let quantile_scale = 700.0 / (300.0 * (6.0 * m.n_pairs() as f64 / delta).ln() / eps);
    let lists = (16.0 / eps * (3.0 * m.n_pairs() as f64 / delta).ln()).ceil() as u64;
    let per_list = schedule_episodes(&m, 1).unwrap() as u64;
    let base = RngStream::new(7, 1);
    let runs: Vec<(bool, bool, bool, u64)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let rng = base.substream(i);
            let table = estimate_quantiles(&m, eps, delta, quantile_scale, &rng.substream(0), &Budget::unlimited()).unwrap();
            let data = collect_samples(&m, lists, &rng.substream(1), &Budget::unlimited()).unwrap();
            let bracket = (0..m.n_pairs()).all(|k| (lo[k]..=hi[k]).contains(&table.values()[k]));
            let covered = (0..m.n_pairs()).all(|k| {
                let hit = data.lists.iter().filter(|l| l.iter().filter(|x| x.state * na + x.action == k).count() as u64 >= hi[k]).count();
                hit as f64 >= lists as f64 * eps / 8.0
            });
            let model = build_truncated_model(&data, &table).unwrap();
            let set = confidence_widths(&model, &table, lists, eps, delta).unwrap();
            let member = contains(&set, &m).unwrap();
            (bracket, covered, member, (table.repetitions + lists) * per_list)
        })
        .collect();
    let max_episodes = runs.iter().map(|r| r.3).max().unwrap();
    ensure(max_episodes <= 100_000, || format!("{max_episodes} episodes per run"))?;
    let bound = frequency_bound(delta, seeds);
    let miss = |f: fn(&(bool, bool, bool, u64)) -> bool| runs.iter().filter(|r| !f(r)).count() as f64 / seeds as f64;
    let rates = [miss(|r| r.0), miss(|r| r.1), miss(|r| r.2)];
    ensure(rates.iter().all(|&r| r <= bound), || format!("failure rates {rates:?} exceed {bound:.4}"))?;
    Ok(format!(
        "bracket {lo:?}..{hi:?}, {lists} lists, {max_episodes} episodes per run, failure rates {rates:?} <= {bound:.4}"
    ))
}

fn planner_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..200 {
        let (ns, na, h) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=8));
        let m = dense(&mut rng, ns, na, h);
        let set = IntervalModelSet::zero_width(EstimatedModel::from_mdp(&m));
        let opt = local_optimum(&m);
        ensure((pessimistic_plan(&set).unwrap().1 - opt).abs() <= 1e-12, || format!("collapse {i}"))?;
        let pi = random_policy(&mut rng, m.n_states(), m.n_actions());
        ensure((pessimistic_policy_value(&pi, &set).unwrap() - local_value(&m, &pi)).abs() <= 1e-12, || {
            format!("collapse policy {i}")
        })?;
    }
    for i in 0..1000 {
        let (ns, na, h) = (rng.gen_range(2..=3), rng.gen_range(1..=3), rng.gen_range(1..=6));
        let m = dense(&mut rng, ns, na, h);
        let mut narrow = IntervalModelSet::zero_width(EstimatedModel::from_mdp(&m));
        narrow.transition_width.iter_mut().for_each(|w| *w = rng.gen::<f64>() * 0.3);
        narrow.initial_width.iter_mut().for_each(|w| *w = rng.gen::<f64>() * 0.3);
        let mut wide = narrow.clone();
        wide.transition_width.iter_mut().for_each(|w| *w += rng.gen::<f64>() * 0.3);
        wide.initial_width.iter_mut().for_each(|w| *w += rng.gen::<f64>() * 0.3);
        let pi = random_policy(&mut rng, ns, na);
        ensure(pessimistic_plan(&wide).unwrap().1 <= pessimistic_plan(&narrow).unwrap().1 + 1e-12, || format!("monotone plan {i}"))?;
        ensure(
            pessimistic_policy_value(&pi, &wide).unwrap() <= pessimistic_policy_value(&pi, &narrow).unwrap() + 1e-12,
            || format!("monotone value {i}"),
        )?;
    }
    let mut enumerated = 0;
    for h in 1..=6 {
        for _ in 0..4 {
            let m = dense(&mut rng, 2, 2, h);
            let mut set = IntervalModelSet::zero_width(EstimatedModel::from_mdp(&m));
            set.transition_width.iter_mut().for_each(|w| *w = rng.gen::<f64>() * 0.4);
            set.initial_width.iter_mut().for_each(|w| *w = rng.gen::<f64>() * 0.4);
            let policies = all_nonstationary(2, 2, h);
            let values: Vec<f64> = policies.par_iter().map(|p| robust_value_oracle(&set, p)).collect();
            for (p, &v) in policies.iter().zip(&values).step_by(7) {
                ensure((pessimistic_policy_value(p, &set).unwrap() - v).abs() <= 1e-9, || format!("policy value H={h}"))?;
            }
            let best = values.iter().copied().fold(f64::MIN, f64::max);
            let (pi, v) = pessimistic_plan(&set).unwrap();
            ensure((v - best).abs() <= 1e-9 && (robust_value_oracle(&set, &pi) - best).abs() <= 1e-9, || {
                format!("robust optimum H={h}: {v} vs {best}")
            })?;
            enumerated += policies.len();
        }
    }
    for i in 0..10_000 {
        let n = rng.gen_range(1..=6);
        let mut c: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let t: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= t);
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 0.5).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let row = worst_case_row(&c, &w, &v).unwrap();
        let got: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        let lo: Vec<f64> = c.iter().zip(&w).map(|(c, w)| (c - w).max(0.0)).collect();
        let hi: Vec<f64> = c.iter().zip(&w).map(|(c, w)| (c + w).min(1.0)).collect();
        ensure((got - lp_corner_min(&lo, &hi, &v)).abs() <= 1e-9, || format!("row {i}"))?;
    }
    Ok(format!("{enumerated} policies enumerated, 10000 rows"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn generative_median(h: usize, n: u64) -> f64 {
    let m = random_dense(2, 2, h, 0).unwrap();
    let opt = local_optimum(&m);
    let gaps = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (pi, _) =
                run_generative_pipeline(&m, 0.5, 0.1, GenerativeSamples::Fixed(n), &Budget::unlimited(), &RngStream::new(seed, 0))
                    .unwrap();
            opt - local_value(&m, &pi)
        })
        .collect();
    median(gaps)
}

fn horizon_independence() -> Outcome {
    let start = Instant::now();
    let mut n = 1;
    while generative_median(8, n) > 0.05 {
        n *= 2;
        ensure(n <= 1 << 24, || "calibration did not converge".into())?;
    }
    let medians: Vec<(usize, f64)> = [8, 64, 512].into_iter().map(|h| (h, generative_median(h, n))).collect();
    for (i, &(h1, a)) in medians.iter().enumerate() {
        for &(h2, b) in &medians[i + 1..] {
            ensure(b <= a + 0.02, || format!("median rose from {a} at H={h1} to {b} at H={h2}"))?;
        }
    }
    within(start.elapsed(), 600)?;
    Ok(format!("N = {n} per pair, medians {medians:?}"))
}

fn pessimistic_pipeline() -> Outcome {
    let m = twostate_exit(8).unwrap();
    let opt = local_optimum(&m);
    let mut params = PipelineParams::new(0.5, 0.1, 1600.0 / theoretical_lists(2, 2, 0.5, 0.1));
    params.eps_est = Some(0.2);
    params.reuse_phase_samples = true;
    let runs: Vec<(f64, f64, bool, f64, f64, u64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (pi, d) = run_pessimistic_pipeline(&m, &params, &RngStream::new(seed, 0)).unwrap();
            let v = local_value(&m, &pi);
            (opt - v, d.epsilon_hat, d.true_model_contained, d.pessimistic_value, v, d.episodes())
        })
        .collect();
    let within_eps = runs.iter().filter(|r| r.0 <= r.1 + 1e-12).count();
    ensure(within_eps >= 95, || format!("suboptimality within epsilon-hat on {within_eps} of 100 seeds"))?;
    let unsound = runs.iter().filter(|r| r.2 && r.3 > r.4 + 1e-12).count();
    ensure(unsound == 0, || format!("pessimistic value above true value on {unsound} contained seeds"))?;
    let contained = runs.iter().filter(|r| r.2).count();
    let gap = median(runs.iter().map(|r| r.0).collect());
    let eps_hat = median(runs.iter().map(|r| r.1).collect());
    Ok(format!(
        "{within_eps}/100 within epsilon-hat, {contained} contained, median gap {gap:.4}, median epsilon-hat {eps_hat:.4}, {} episodes",
        runs[0].5
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("chain reach ratio", chain_ratio),
        ("discounted vs finite horizon", discount_comparison),
        ("stationary near-optimality", stationary_near_optimal),
        ("multiplicative perturbation", mult_add),
        ("perturbation bounds", perturbation),
        ("concentration suite", concentration),
        ("estimator brackets", estimator_brackets),
        ("planner soundness", planner_soundness),
        ("horizon independence", horizon_independence),
        ("pessimistic pipeline", pessimistic_pipeline),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
