use super::CheckReport;
use crate::error::{Error, Result};
use crate::mdp::{validate_bounded_total_reward, FiniteMdp, Policy, RewardDist};
use crate::oracle::{exact_quantile, finite_horizon_value, visitation_distribution};
use crate::sim::RngStream;

/// `x - x^2 <= ln(1+x) <= x` and `1 + x <= e^x <= 1 + 2|x|` for `|x| <= 1/2`.
pub fn check_fact_log(x: f64) -> CheckReport {
    const ID: &str = "fact_log";
    let inst = format!("x={x}");
    if !(x.abs() <= 0.5) {
        return CheckReport::unmet(ID, inst);
    }
    let l = x.ln_1p();
    let e = x.exp();
    CheckReport::all(ID, inst, &[(x - x * x, l), (l, x), (1.0 + x, e), (e, 1.0 + 2.0 * x.abs())])
}

/// Inputs of the multiplicative perturbation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MultAddInstance {
    pub p: Vec<f64>,
    pub delta: Vec<f64>,
    pub m: f64,
    pub gamma: Vec<f64>,
    pub m_bar: u64,
    pub n_bar: u64,
    pub eps: f64,
}

impl MultAddInstance {
    pub fn hypotheses_hold(&self) -> bool {
        let n = self.p.len();
        let (mb, nb) = (self.m_bar as f64, self.n_bar as f64);
        let same_len = self.delta.len() == n && self.gamma.len() == n;
        if !(same_len && self.m_bar >= 1 && self.n_bar >= n as u64 && n >= 1) {
            return false;
        }
        let sum_p: f64 = self.p.iter().sum();
        let sum_d: f64 = self.delta.iter().sum();
        (0.0..=1.0 / (8.0 * nb)).contains(&self.eps)
            && (0.0..=mb).contains(&self.m)
            && sum_p <= 1.0 + 1e-12
            && sum_d.abs() <= self.eps * nb / mb
            && self.p.iter().zip(&self.delta).zip(&self.gamma).all(|((&p, &d), &g)| {
                (1.0 / mb..=1.0).contains(&p) && d.abs() <= self.eps * (p / mb).sqrt() && g.abs() <= (p * mb).sqrt()
            })
    }

    /// `prod (p_i + delta_i)^(p_i m + Gamma_i) / prod p_i^(p_i m + Gamma_i)`.
    pub fn ratio(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.delta)
            .zip(&self.gamma)
            .map(|((&p, &d), &g)| (p * self.m + g) * (d / p).ln_1p())
            .sum::<f64>()
            .exp()
    }

    /// Draws an instance satisfying every hypothesis.
    pub fn random(rng: &mut RngStream, max_len: usize) -> Self {
        let n = 1 + rng.sample_index(&vec![1.0 / max_len as f64; max_len]);
        let n_bar = n as u64 + (rng.uniform() * 4.0) as u64;
        let m_bar = n as u64 + (rng.uniform() * 1000.0) as u64;
        let mb = m_bar as f64;
        let eps = rng.uniform() / (8.0 * n_bar as f64);
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
        let total: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let spare = (1.0 - n as f64 / mb) * rng.uniform();
        let p: Vec<f64> = w.iter().map(|x| (1.0 / mb + spare * x / total).min(1.0)).collect();
        let mut delta: Vec<f64> = p.iter().map(|&pi| eps * (pi / mb).sqrt() * (2.0 * rng.uniform() - 1.0)).collect();
        let sum: f64 = delta.iter().sum();
        let cap = eps * n_bar as f64 / mb;
        if sum.abs() > cap {
            let f = cap / sum.abs() * (1.0 - 1e-9);
            delta.iter_mut().for_each(|d| *d *= f);
        }
        let gamma = p.iter().map(|&pi| (pi * mb).sqrt() * (2.0 * rng.uniform() - 1.0)).collect();
        Self { p, delta, m: mb * rng.uniform(), gamma, m_bar, n_bar, eps }
    }
}

/// `ratio` lies in `[1 - 8 n_bar eps, 1 + 8 n_bar eps]`.
pub fn check_mult_add(inst: &MultAddInstance) -> CheckReport {
    const ID: &str = "mult_add";
    let desc = format!("n={} m_bar={} n_bar={} eps={}", inst.p.len(), inst.m_bar, inst.n_bar, inst.eps);
    if !inst.hypotheses_hold() {
        return CheckReport::unmet(ID, desc);
    }
    let r = inst.ratio();
    let b = 8.0 * inst.n_bar as f64 * inst.eps;
    CheckReport::all(ID, desc, &[(1.0 - b, r), (r, 1.0 + b)])
}

/// Per-entry closeness allowances between a model and its perturbation.
/// `f64::INFINITY` marks an unconstrained entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Indexed like the transition table.
    pub transition: Vec<f64>,
    /// Indexed by `s * |A| + a`; applies to the mean reward.
    pub reward: Vec<f64>,
    pub initial: f64,
}

fn build_tolerances(mdp: &FiniteMdp, eps: f64, t_scale: f64, t_inner: f64, r_scale: f64, mu: f64, visits: &[f64]) -> Tolerances {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let sa = (ns * na) as f64;
    let mut transition = Vec::with_capacity(ns * na * ns);
    let mut reward = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let m = visits[s * na + a];
            if m < 1.0 {
                transition.extend(std::iter::repeat(f64::INFINITY).take(ns));
                reward.push(f64::INFINITY);
                continue;
            }
            let q = eps / (t_inner * m * sa);
            for &p in mdp.row(s, a) {
                transition.push(eps / (t_scale * (ns * ns * na) as f64) * (p * q).sqrt().max(q));
            }
            let r2 = mdp.reward(s, a).second_moment();
            reward.push(eps / (r_scale * sa) * (r2 / m).sqrt().max(1.0 / m));
        }
    }
    Tolerances { transition, reward, initial: eps / (mu * ns as f64) }
}

/// `Q^pi_{eps/(12|S||A|)}(s,a)` for every pair.
pub fn quantile_visits(mdp: &FiniteMdp, policy: &Policy, eps: f64) -> Result<Vec<usize>> {
    let level = eps / (12.0 * mdp.n_pairs() as f64);
    let mut out = Vec::with_capacity(mdp.n_pairs());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push(exact_quantile(&visitation_distribution(mdp, policy, s, a)?, level));
        }
    }
    Ok(out)
}

/// Allowances for the episodic perturbation bounds, scaled by the policy's
/// visit quantiles.
pub fn episodic_tolerances(mdp: &FiniteMdp, policy: &Policy, eps: f64) -> Result<Tolerances> {
    let m: Vec<f64> = quantile_visits(mdp, policy, eps)?.into_iter().map(|x| x as f64).collect();
    Ok(build_tolerances(mdp, eps, 96.0, 72.0, 24.0, 6.0, &m))
}

/// Allowances for the generative perturbation bound, scaled by `H`.
pub fn generative_tolerances(mdp: &FiniteMdp, eps: f64) -> Tolerances {
    let m = vec![mdp.horizon() as f64; mdp.n_pairs()];
    build_tolerances(mdp, eps, 192.0, 576.0, 48.0, 12.0, &m)
}

fn within(diff: f64, tol: f64) -> bool {
    diff.abs() <= tol * (1.0 + 1e-9) + 1e-15
}

fn same_shape(a: &FiniteMdp, b: &FiniteMdp) -> Result<()> {
    if (a.n_states(), a.n_actions(), a.horizon()) != (b.n_states(), b.n_actions(), b.horizon()) {
        return Err(Error::Dimension(format!(
            "models differ in shape: ({}, {}, {}) vs ({}, {}, {})",
            a.n_states(),
            a.n_actions(),
            a.horizon(),
            b.n_states(),
            b.n_actions(),
            b.horizon()
        )));
    }
    Ok(())
}

/// Whether `other` is within `tol` of `base` entrywise.
pub fn within_tolerances(base: &FiniteMdp, other: &FiniteMdp, tol: &Tolerances) -> Result<bool> {
    same_shape(base, other)?;
    let t = base.transition().iter().zip(other.transition()).zip(&tol.transition).all(|((p, q), &b)| within(p - q, b));
    let r = (0..base.n_pairs())
        .all(|k| within(base.rewards()[k].mean() - other.rewards()[k].mean(), tol.reward[k]));
    let mu = base.initial().iter().zip(other.initial()).all(|(p, q)| within(p - q, tol.initial));
    Ok(t && r && mu)
}

fn eps_ok(eps: f64) -> bool {
    eps > 0.0 && eps <= 0.5
}

fn describe(mdp: &FiniteMdp, eps: f64) -> String {
    format!("S={} A={} H={} eps={eps}", mdp.n_states(), mdp.n_actions(), mdp.horizon())
}

/// A close enough model never undervalues `policy` by more than `eps`.
pub fn check_perturbation_lower(mdp: &FiniteMdp, other: &FiniteMdp, policy: &Policy, eps: f64) -> Result<CheckReport> {
    const ID: &str = "perturbation_lower";
    let inst = describe(mdp, eps);
    if !eps_ok(eps) || !validate_bounded_total_reward(mdp).holds {
        return Ok(CheckReport::unmet(ID, inst));
    }
    if !within_tolerances(mdp, other, &episodic_tolerances(mdp, policy, eps)?)? {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let v = finite_horizon_value(mdp, policy)?;
    let v_hat = finite_horizon_value(other, policy)?;
    Ok(CheckReport::inequality(ID, inst, v - eps, v_hat))
}

/// Changing only the mean rewards within the allowance never overvalues
/// `policy` by more than `eps`.
pub fn check_perturbation_upper(mdp: &FiniteMdp, other: &FiniteMdp, policy: &Policy, eps: f64) -> Result<CheckReport> {
    const ID: &str = "perturbation_upper";
    let inst = describe(mdp, eps);
    same_shape(mdp, other)?;
    let same_dynamics = mdp.transition() == other.transition() && mdp.initial() == other.initial();
    if !eps_ok(eps) || !same_dynamics || !validate_bounded_total_reward(mdp).holds {
        return Ok(CheckReport::unmet(ID, inst));
    }
    if !within_tolerances(mdp, other, &episodic_tolerances(mdp, policy, eps)?)? {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let v = finite_horizon_value(mdp, policy)?;
    let v_hat = finite_horizon_value(other, policy)?;
    Ok(CheckReport::inequality(ID, inst, v_hat, v + eps))
}

/// With `H`-scaled allowances on every entry the values agree to `eps / 2`.
pub fn check_perturbation_generative(mdp: &FiniteMdp, other: &FiniteMdp, policy: &Policy, eps: f64) -> Result<CheckReport> {
    const ID: &str = "perturbation_generative";
    let inst = describe(mdp, eps);
    if !eps_ok(eps) || !validate_bounded_total_reward(mdp).holds {
        return Ok(CheckReport::unmet(ID, inst));
    }
    if !within_tolerances(mdp, other, &generative_tolerances(mdp, eps))? {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let v = finite_horizon_value(mdp, policy)?;
    let v_hat = finite_horizon_value(other, policy)?;
    Ok(CheckReport::inequality(ID, inst, (v_hat - v).abs(), eps / 2.0))
}

/// Moves mass between random pairs of entries, each move bounded by the
/// remaining allowance of both entries and by the mass available.
fn shift_mass(probs: &mut [f64], allowance: &[f64], rng: &mut RngStream) {
    let n = probs.len();
    if n < 2 {
        return;
    }
    let mut left: Vec<f64> = allowance.to_vec();
    let uniform = vec![1.0 / n as f64; n];
    for _ in 0..2 * n {
        let from = rng.sample_index(&uniform);
        let to = rng.sample_index(&uniform);
        if from == to {
            continue;
        }
        let t = rng.uniform() * probs[from].min(left[from]).min(left[to]);
        if t > 0.0 {
            probs[from] -= t;
            probs[to] += t;
            left[from] -= t;
            left[to] -= t;
        }
    }
}

/// A random model inside `tol` around `mdp`. Mean rewards move by at most
/// their allowance and stay in `[0, 1]`; a moved reward becomes a point mass.
/// With `dynamics` false only rewards change.
pub fn perturb_within(mdp: &FiniteMdp, tol: &Tolerances, dynamics: bool, rng: &mut RngStream) -> Result<FiniteMdp> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut transition = mdp.transition().to_vec();
    let mut initial = mdp.initial().to_vec();
    if dynamics {
        for k in 0..ns * na {
            let row = k * ns..(k + 1) * ns;
            shift_mass(&mut transition[row.clone()], &tol.transition[row], rng);
        }
        shift_mass(&mut initial, &vec![tol.initial; ns], rng);
    }
    let mut reward = Vec::with_capacity(ns * na);
    for (k, r) in mdp.rewards().iter().enumerate() {
        let b = tol.reward[k].min(1.0);
        let mean = r.mean();
        let target = (mean + b * (2.0 * rng.uniform() - 1.0)).clamp(0.0, 1.0);
        reward.push(if target == mean { r.clone() } else { RewardDist::constant(target)? });
    }
    FiniteMdp::new(ns, na, mdp.horizon(), transition, reward, initial)
}
