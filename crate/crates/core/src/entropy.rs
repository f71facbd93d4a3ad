//! Exact Shannon entropy of rational distributions.
//!
//! An entropy is kept as `Σ c_p log₂ p` over primes `p` with rational
//! coefficients. Logarithms of distinct primes are linearly independent over
//! the rationals, so two such sums are equal exactly when their coefficients
//! are.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::prob::{rational_to_f64, Rational};

/// Trial division stops at this bound; a larger cofactor stays unfactored.
const TRIAL_LIMIT: u64 = 1 << 20;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LogSum {
    terms: BTreeMap<BigUint, Rational>,
    /// Some base is an unfactored cofactor, so equality is only sufficient.
    partial: bool,
}

fn factor(mut m: BigUint) -> (Vec<(BigUint, u32)>, bool) {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p <= TRIAL_LIMIT && m > BigUint::one() {
        let bp = BigUint::from(p);
        if (&bp * &bp) > m {
            break;
        }
        let mut e = 0;
        while (&m % &bp).is_zero() {
            m /= &bp;
            e += 1;
        }
        if e > 0 {
            out.push((bp, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let partial = m > BigUint::one() && m.to_u64().is_none_or(|v| v > TRIAL_LIMIT * TRIAL_LIMIT);
    if m > BigUint::one() {
        out.push((m, 1));
    }
    (out, partial)
}

impl LogSum {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `log₂ r` for positive rational `r`.
    pub fn log2(r: &Rational) -> Self {
        assert!(*r > Rational::zero(), "log of a non-positive number");
        let mut s = Self::zero();
        for (part, sign) in [(r.numer(), 1), (r.denom(), -1)] {
            let (fs, partial) = factor(part.magnitude().clone());
            s.partial |= partial;
            for (p, e) in fs {
                s.add_term(p, Rational::from_integer((sign * e as i64).into()));
            }
        }
        s
    }

    /// Integer constant `c` (that is, `c · log₂ 2`).
    pub fn bits(c: i64) -> Self {
        let mut s = Self::zero();
        s.add_term(BigUint::from(2u32), Rational::from_integer(c.into()));
        s
    }

    fn add_term(&mut self, p: BigUint, c: Rational) {
        let entry = self.terms.entry(p.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&p);
        }
    }

    pub fn add(&mut self, other: &LogSum) {
        for (p, c) in &other.terms {
            self.add_term(p.clone(), c.clone());
        }
        self.partial |= other.partial;
    }

    pub fn scaled(&self, k: &Rational) -> Self {
        let mut s = Self::zero();
        s.partial = self.partial;
        for (p, c) in &self.terms {
            s.add_term(p.clone(), c * k);
        }
        s
    }

    pub fn minus(&self, other: &LogSum) -> Self {
        let mut s = self.clone();
        s.add(&other.scaled(&-Rational::one()));
        s
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every base is prime, so equality tests are exact both ways.
    pub fn is_fully_factored(&self) -> bool {
        !self.partial
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(p, c)| rational_to_f64(c) * p.to_f64().unwrap_or(f64::INFINITY).log2())
            .sum()
    }

    /// Exact when the sums are equal; otherwise ordered by the numeric value
    /// of their (nonzero) difference.
    pub fn compare(&self, other: &LogSum) -> Ordering {
        let diff = self.minus(other);
        if diff.is_zero() {
            return Ordering::Equal;
        }
        diff.to_f64().partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }
}

impl fmt::Display for LogSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(p, c)| if *p == BigUint::from(2u32) { format!("{c}") } else { format!("{c}*log2({p})") })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

/// `−Σ w log₂ w` over the positive weights.
pub fn shannon<'a>(weights: impl IntoIterator<Item = &'a Rational>) -> LogSum {
    let mut h = LogSum::zero();
    for w in weights {
        if *w > Rational::zero() {
            h.add(&LogSum::log2(w).scaled(&-w.clone()));
        }
    }
    h
}
