//! Numeric checkers for the inequalities the algorithms rely on.
//!
//! Every checker returns [`CheckReport`]s. A report passes when its `lhs`
//! is at most its `rhs` (up to [`CHECK_TOL`]); inequalities of the form
//! `A >= c B` are reported with `lhs = c B` and `rhs = A`. When an input
//! does not meet the stated hypotheses the report says so and never passes.

mod chains;
mod concentration;
mod corpus;
mod horizon;
mod perturbation;

pub use chains::*;
pub use concentration::*;
pub use corpus::*;
pub use horizon::*;
pub use perturbation::*;

/// Relative slack allowed on exact comparisons.
pub const CHECK_TOL: f64 = 1e-9;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub lemma: &'static str,
    pub instance: String,
    pub hypothesis_ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
    pub pass: bool,
}

impl CheckReport {
    /// `lhs <= rhs` up to a relative tolerance.
    pub fn inequality(lemma: &'static str, instance: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let pass = lhs <= rhs + CHECK_TOL * rhs.abs().max(1.0);
        Self { lemma, instance: instance.into(), hypothesis_ok: true, lhs, rhs, slack: rhs - lhs, pass }
    }

    /// Several inequalities that must all hold; reports the tightest.
    pub fn all(lemma: &'static str, instance: impl Into<String>, sides: &[(f64, f64)]) -> Self {
        let instance = instance.into();
        let mut worst: Option<Self> = None;
        for &(l, r) in sides {
            let c = Self::inequality(lemma, instance.clone(), l, r);
            let replace = match &worst {
                None => true,
                Some(w) => (!c.pass && w.pass) || (c.pass == w.pass && c.slack < w.slack),
            };
            if replace {
                worst = Some(c);
            }
        }
        worst.expect("at least one inequality")
    }

    pub fn unmet(lemma: &'static str, instance: impl Into<String>) -> Self {
        Self {
            lemma,
            instance: instance.into(),
            hypothesis_ok: false,
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack: f64::NAN,
            pass: false,
        }
    }

    /// Failure frequency against `delta + 3` binomial standard errors.
    pub fn frequency(lemma: &'static str, instance: impl Into<String>, failures: u64, trials: u64, delta: f64) -> Self {
        let freq = failures as f64 / trials.max(1) as f64;
        let rhs = delta + 3.0 * (delta * (1.0 - delta) / trials.max(1) as f64).sqrt();
        let pass = freq <= rhs;
        Self { lemma, instance: instance.into(), hypothesis_ok: true, lhs: freq, rhs, slack: rhs - freq, pass }
    }

    /// Hypotheses held but the conclusion failed.
    pub fn is_failure(&self) -> bool {
        self.hypothesis_ok && !self.pass
    }
}

/// `n^(k n)` as a float.
pub(crate) fn pow_self(n: usize, k: usize) -> f64 {
    (n as f64).powf((k * n) as f64)
}

/// `ln(8 n^(4 n))`.
pub(crate) fn ln_eight_pow(n: usize) -> f64 {
    8f64.ln() + 4.0 * n as f64 * (n as f64).ln()
}
