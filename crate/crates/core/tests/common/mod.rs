//! Reference implementations written independently of the library code.
#![allow(dead_code)]

use hzrl_core::estimate::IntervalModelSet;
use hzrl_core::{FiniteMdp, MarkovChain, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Value by summing over every trajectory with positive probability.
pub fn brute_value(m: &FiniteMdp, pi: &Policy) -> f64 {
    fn go(m: &FiniteMdp, pi: &Policy, h: usize, s: usize) -> f64 {
        if h == m.horizon() {
            return 0.0;
        }
        let a = pi.action(h, s);
        let mut v = m.reward(s, a).mean();
        for (t, &p) in m.row(s, a).iter().enumerate() {
            if p > 0.0 {
                v += p * go(m, pi, h + 1, t);
            }
        }
        v
    }
    m.initial().iter().enumerate().map(|(s, &p)| if p > 0.0 { p * go(m, pi, 0, s) } else { 0.0 }).sum()
}

/// Distribution of the visit count to `(s, a)` by trajectory enumeration.
pub fn brute_visits(m: &FiniteMdp, pi: &Policy, target: (usize, usize)) -> Vec<f64> {
    fn go(m: &FiniteMdp, pi: &Policy, target: (usize, usize), h: usize, s: usize, k: usize, w: f64, out: &mut [f64]) {
        if h == m.horizon() {
            out[k] += w;
            return;
        }
        let a = pi.action(h, s);
        let k2 = k + usize::from((s, a) == target);
        for (t, &p) in m.row(s, a).iter().enumerate() {
            if p > 0.0 {
                go(m, pi, target, h + 1, t, k2, w * p, out);
            }
        }
    }
    let mut out = vec![0.0; m.horizon() + 1];
    for (s, &p) in m.initial().iter().enumerate() {
        if p > 0.0 {
            go(m, pi, target, 0, s, 0, p, &mut out);
        }
    }
    out
}

pub fn all_maps(ns: usize, na: usize) -> Vec<Vec<usize>> {
    let total = na.pow(ns as u32);
    (0..total)
        .map(|mut x| {
            let mut m = vec![0; ns];
            for slot in m.iter_mut() {
                *slot = x % na;
                x /= na;
            }
            m
        })
        .collect()
}

pub fn all_stationary(ns: usize, na: usize) -> Vec<Policy> {
    all_maps(ns, na).into_iter().map(Policy::Stationary).collect()
}

pub fn all_nonstationary(ns: usize, na: usize, h: usize) -> Vec<Policy> {
    let maps = all_maps(ns, na);
    let total = maps.len().pow(h as u32);
    (0..total)
        .map(|mut x| {
            let mut steps = Vec::with_capacity(h);
            for _ in 0..h {
                steps.push(maps[x % maps.len()].clone());
                x /= maps.len();
            }
            Policy::NonStationary(steps)
        })
        .collect()
}

/// `min q . v` over `lo <= q <= hi`, `sum q = 1`, by enumerating vertices:
/// every coordinate but one sits at a bound.
pub fn lp_corner_min(lo: &[f64], hi: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut best = f64::INFINITY;
    for free in 0..n {
        for mask in 0..(1u32 << (n - 1)) {
            let mut q = vec![0.0; n];
            let mut bit = 0;
            for i in 0..n {
                if i == free {
                    continue;
                }
                q[i] = if mask >> bit & 1 == 1 { hi[i] } else { lo[i] };
                bit += 1;
            }
            let rest: f64 = q.iter().sum();
            q[free] = 1.0 - rest;
            if q[free] >= lo[free] - 1e-12 && q[free] <= hi[free] + 1e-12 {
                best = best.min(q.iter().zip(v).map(|(a, b)| a * b).sum());
            }
        }
    }
    best
}

fn bounds(center: &[f64], width: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        center.iter().zip(width).map(|(c, w)| (c - w).max(0.0)).collect(),
        center.iter().zip(width).map(|(c, w)| (c + w).min(1.0)).collect(),
    )
}

/// Worst-case value of `pi` with a fresh adversarial row at every step,
/// each row chosen by [`lp_corner_min`].
pub fn robust_value_oracle(set: &IntervalModelSet, pi: &Policy) -> f64 {
    let c = &set.center;
    let (ns, na) = (c.n_states, c.n_actions);
    let mut next = vec![0.0; ns];
    for h in (0..c.horizon).rev() {
        next = (0..ns)
            .map(|s| {
                let a = pi.action(h, s);
                let k = (s * na + a) * ns;
                let (lo, hi) = bounds(&c.transition[k..k + ns], &set.transition_width[k..k + ns]);
                c.reward[s * na + a] + lp_corner_min(&lo, &hi, &next)
            })
            .collect();
    }
    let (lo, hi) = bounds(&c.initial, &set.initial_width);
    lp_corner_min(&lo, &hi, &next)
}

/// `Pr[X_h = s]` by repeated vector-matrix products.
pub fn chain_marginals(c: &MarkovChain, steps: usize) -> Vec<Vec<f64>> {
    let n = c.n_states();
    let mut cur = c.initial().to_vec();
    let mut out = vec![cur.clone()];
    for _ in 0..steps {
        let mut nxt = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                nxt[j] += cur[i] * c.p(i, j);
            }
        }
        out.push(nxt.clone());
        cur = nxt;
    }
    out
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Per-list visit counts of every pair under the collection schedule:
/// for each pair `z` and each ordered pair of stationary maps, one episode
/// that switches from the first map to the second once `z` has been taken
/// at an earlier step.
pub fn simulate_schedule(m: &FiniteMdp, lists: usize, seed: u64) -> Vec<Vec<u32>> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let maps = all_maps(ns, na);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    (0..lists)
        .map(|_| {
            let mut counts = vec![0u32; ns * na];
            for z in 0..ns * na {
                let target = (z / na, z % na);
                for p1 in &maps {
                    for p2 in &maps {
                        let mut s = draw(&mut rng, m.initial());
                        let mut switched = false;
                        for _ in 0..m.horizon() {
                            let a = if switched { p2[s] } else { p1[s] };
                            counts[s * na + a] += 1;
                            if (s, a) == target {
                                switched = true;
                            }
                            s = draw(&mut rng, m.row(s, a));
                        }
                    }
                }
            }
            counts
        })
        .collect()
}

/// Largest `x` such that at least a fraction `eps` of `samples` is `>= x`.
pub fn empirical_quantile(samples: &[u32], eps: f64) -> u64 {
    let mut v = samples.to_vec();
    v.sort_unstable_by(|a, b| b.cmp(a));
    let need = (eps * v.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    v[need.min(v.len()) - 1] as u64
}
