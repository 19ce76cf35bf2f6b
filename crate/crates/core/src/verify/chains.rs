use super::{pow_self, CheckReport};
use crate::error::{Error, Result};
use crate::mdp::MarkovChain;
use crate::oracle::{state_distributions, MAX_REACH_STEPS};

/// Removes loops `s_i .. s_{j-1}` with `s_i = s_j` (earliest repeat first)
/// until no state repeats. The last state is kept.
pub fn excise_loops(states: &[usize]) -> Vec<usize> {
    let mut t = states.to_vec();
    loop {
        let mut cut = None;
        'outer: for j in 1..t.len() {
            for i in 0..j {
                if t[i] == t[j] {
                    cut = Some((i, j));
                    break 'outer;
                }
            }
        }
        match cut {
            Some((i, j)) => {
                t.drain(i..j);
            }
            None => return t,
        }
    }
}

/// Shortening a state sequence by loop excision leaves at most `|S|`
/// states, keeps the final state and never lowers the sequence probability.
pub fn check_reduction(chain: &MarkovChain, states: &[usize]) -> CheckReport {
    const ID: &str = "reduction";
    let inst = format!("states={states:?}");
    if states.len() <= chain.n_states() || states.iter().any(|&s| s >= chain.n_states()) {
        return CheckReport::unmet(ID, inst);
    }
    let short = excise_loops(states);
    let mut r = CheckReport::inequality(ID, inst, chain.sequence_probability(states), chain.sequence_probability(&short));
    r.pass &= short.len() <= chain.n_states() && short.last() == states.last();
    r
}

/// `p_h(s)` for `h = 0..=steps`.
fn reach_series(chain: &MarkovChain, s: usize, steps: usize) -> Result<Vec<f64>> {
    if steps > MAX_REACH_STEPS {
        return Err(Error::Argument(format!("{steps} steps exceeds the limit of {MAX_REACH_STEPS}")));
    }
    if s >= chain.n_states() {
        return Err(Error::Argument(format!("state {s} out of range")));
    }
    Ok(state_distributions(chain, steps).into_iter().map(|d| d[s]).collect())
}

/// `sum_{h <= 2L} p_h(s) <= 4 |S|^(4|S|) sum_{h < L} p_h(s)` for `L >= |S|`.
pub fn check_mc_main(chain: &MarkovChain, s: usize, l: usize) -> Result<CheckReport> {
    const ID: &str = "mc_main";
    let inst = format!("S={} s={s} L={l}", chain.n_states());
    if l < chain.n_states() {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let p = reach_series(chain, s, 2 * l)?;
    let lhs: f64 = p.iter().sum();
    let rhs = 4.0 * pow_self(chain.n_states(), 4) * p[..l].iter().sum::<f64>();
    Ok(CheckReport::inequality(ID, inst, lhs, rhs))
}

/// `sum_{h < 4|S|} p_{beta h + alpha}(s) <= 4 |S|^(4|S|) sum_{h < |S|} p_{beta h + alpha}(s)`.
pub fn check_sum_expanded(chain: &MarkovChain, s: usize, alpha: usize, beta: usize) -> Result<CheckReport> {
    const ID: &str = "sum_expanded";
    let n = chain.n_states();
    let inst = format!("S={n} s={s} alpha={alpha} beta={beta}");
    if beta == 0 {
        return Ok(CheckReport::unmet(ID, inst));
    }
    let p = reach_series(chain, s, beta * (4 * n - 1) + alpha)?;
    let at = |h: usize| p[beta * h + alpha];
    let lhs: f64 = (0..4 * n).map(at).sum();
    let rhs = 4.0 * pow_self(n, 4) * (0..n).map(at).sum::<f64>();
    Ok(CheckReport::inequality(ID, inst, lhs, rhs))
}

/// The `alpha = 0`, `beta = 1` case of [`check_sum_expanded`].
pub fn check_sum_unexpanded(chain: &MarkovChain, s: usize) -> Result<CheckReport> {
    let mut r = check_sum_expanded(chain, s, 0, 1)?;
    r.lemma = "sum_unexpanded";
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> MarkovChain {
        MarkovChain::new(1, vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn excision() {
        assert_eq!(excise_loops(&[0, 0, 1]), vec![0, 1]);
        assert_eq!(excise_loops(&[0, 1, 0, 1, 2]), vec![0, 1, 2]);
        assert_eq!(excise_loops(&[2, 1, 0]), vec![2, 1, 0]);
    }

    #[test]
    fn reduction_on_repeat() {
        let c = MarkovChain::new(2, vec![0.5, 0.5, 0.3, 0.7], vec![1.0, 0.0]).unwrap();
        let r = check_reduction(&c, &[0, 0, 1]);
        assert!(r.pass && r.hypothesis_ok);
        assert!(!check_reduction(&c, &[0, 1]).hypothesis_ok);
    }

    #[test]
    fn single_state_mc_main() {
        let r = check_mc_main(&single(), 0, 3).unwrap();
        assert_eq!(r.lhs, 7.0);
        assert_eq!(r.rhs, 12.0);
        assert!(r.pass);
    }

    #[test]
    fn single_state_sum_ratio() {
        let r = check_sum_unexpanded(&single(), 0).unwrap();
        assert_eq!((r.lhs, r.rhs), (4.0, 4.0));
        assert!(r.pass);
    }
}
