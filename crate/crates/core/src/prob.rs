//! Exact probabilities.
//!
//! Every probability in a distribution machine is an element of a real
//! quadratic field `Q(√d)`: `rational + irrational·√radicand` with rational
//! coefficients and a square-free radicand. Plain rationals have a zero
//! irrational part and radicand 1, so the representation is canonical and
//! structural equality is numerical equality.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

pub type Rational = BigRational;

/// Builds the rational `num/den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators: fall back to scaled division.
        let n = r.numer().to_string();
        let d = r.denom().to_string();
        n.parse::<f64>().unwrap_or(f64::NAN) / d.parse::<f64>().unwrap_or(f64::NAN)
    })
}

/// JSON encoding of an exact rational as `{num, den}`.
pub fn rational_json(r: &Rational) -> Value {
    fn int(v: &BigInt) -> Value {
        match v.to_i64() {
            Some(x) => json!(x),
            None => json!(v.to_string()),
        }
    }
    json!({ "num": int(r.numer()), "den": int(r.denom()) })
}

/// Parses `{num, den}` (numbers or decimal strings) back into a rational.
pub fn rational_from_json(v: &Value) -> Option<Rational> {
    fn int(v: &Value) -> Option<BigInt> {
        match v {
            Value::Number(n) => n.as_i64().map(BigInt::from),
            Value::String(s) => s.parse().ok(),
            _ => None,
        }
    }
    let num = int(v.get("num")?)?;
    let den = int(v.get("den")?)?;
    if den.is_zero() {
        return None;
    }
    Some(BigRational::new(num, den))
}

/// Parses `"p/q"`, an integer, or a finite decimal like `"0.6"` exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int_part, frac)) = s.split_once('.') {
        let negative = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches('-');
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let mut num: BigInt = digits.parse().ok()?;
        if negative {
            num = -num;
        }
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        return Some(BigRational::new(num, den));
    }
    s.parse::<BigInt>().ok().map(BigRational::from_integer)
}

/// Splits `m` into `(square part root, square-free part)` so that
/// `m = root² · free`.
fn square_free_decompose(mut m: u64) -> (u64, u64) {
    let mut root = 1u64;
    let mut free = 1u64;
    let mut p = 2u64;
    while p * p <= m {
        let mut e = 0;
        while m.is_multiple_of(p) {
            m /= p;
            e += 1;
        }
        root *= p.pow(e / 2);
        if e % 2 == 1 {
            free *= p;
        }
        p += 1;
    }
    free *= m;
    (root, free)
}

/// An exact element `rational + irrational·√radicand` of a real quadratic field.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Prob {
    rational: Rational,
    irrational: Rational,
    radicand: u64,
}

impl Prob {
    pub fn zero() -> Self {
        Self::from_rational(Rational::zero())
    }

    pub fn one() -> Self {
        Self::from_rational(Rational::one())
    }

    pub fn from_rational(r: Rational) -> Self {
        Prob { rational: r, irrational: Rational::zero(), radicand: 1 }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Self::from_rational(ratio(num, den))
    }

    /// `rational + irrational·√radicand`, normalized so that the radicand is
    /// square-free and rational values have radicand 1.
    pub fn new(rational: Rational, irrational: Rational, radicand: u64) -> Self {
        assert!(radicand > 0, "radicand must be positive");
        let (root, free) = square_free_decompose(radicand);
        let irrational = irrational * Rational::from_integer(BigInt::from(root));
        if free == 1 {
            return Self::from_rational(rational + irrational);
        }
        if irrational.is_zero() {
            return Self::from_rational(rational);
        }
        Prob { rational, irrational, radicand: free }
    }

    /// Exact square root of a non-negative rational, as a field element.
    pub fn sqrt_rational(r: &Rational) -> Self {
        assert!(!r.is_negative(), "square root of a negative rational");
        if r.is_zero() {
            return Self::zero();
        }
        // √(a/b) = √(ab)/b
        let ab = r.numer() * r.denom();
        let ab = ab.to_u64().expect("radicand too large for exact square root");
        let (root, free) = square_free_decompose(ab);
        let coeff = BigRational::new(BigInt::from(root), r.denom().clone());
        if free == 1 {
            Self::from_rational(coeff)
        } else {
            Prob { rational: Rational::zero(), irrational: coeff, radicand: free }
        }
    }

    pub fn rational_part(&self) -> &Rational {
        &self.rational
    }

    pub fn irrational_part(&self) -> &Rational {
        &self.irrational
    }

    pub fn radicand(&self) -> u64 {
        self.radicand
    }

    pub fn is_rational(&self) -> bool {
        self.irrational.is_zero()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.is_rational().then_some(&self.rational)
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.irrational.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.is_rational() && self.rational.is_one()
    }

    fn common_radicand(&self, other: &Prob) -> u64 {
        match (self.is_rational(), other.is_rational()) {
            (true, _) => other.radicand,
            (_, true) => self.radicand,
            _ => {
                assert_eq!(
                    self.radicand, other.radicand,
                    "mixing different quadratic fields is not supported"
                );
                self.radicand
            }
        }
    }

    /// Sign of the number: -1, 0 or 1.
    pub fn signum(&self) -> i32 {
        fn sgn(r: &Rational) -> i32 {
            match r.numer().sign() {
                Sign::Minus => -1,
                Sign::NoSign => 0,
                Sign::Plus => 1,
            }
        }
        let a = sgn(&self.rational);
        let b = sgn(&self.irrational);
        if b == 0 {
            return a;
        }
        if a == 0 || a == b {
            return b;
        }
        // opposite signs: compare a² with b²·d
        let a2 = &self.rational * &self.rational;
        let b2d = &self.irrational
            * &self.irrational
            * Rational::from_integer(BigInt::from(self.radicand));
        match a2.cmp(&b2d) {
            Ordering::Greater => a,
            Ordering::Less => b,
            Ordering::Equal => 0,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    pub fn conjugate(&self) -> Self {
        Prob {
            rational: self.rational.clone(),
            irrational: -self.irrational.clone(),
            radicand: self.radicand,
        }
    }

    /// Field norm `a² − b²d`, always rational.
    pub fn norm(&self) -> Rational {
        &self.rational * &self.rational
            - &self.irrational * &self.irrational * Rational::from_integer(BigInt::from(self.radicand))
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "division by zero probability");
        let n = self.norm();
        let c = self.conjugate();
        Prob::new(c.rational / &n, c.irrational / &n, c.radicand.max(1))
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.rational)
            + rational_to_f64(&self.irrational) * (self.radicand as f64).sqrt()
    }

    /// `1 − self`.
    pub fn complement(&self) -> Self {
        Prob::one() - self.clone()
    }

    pub fn to_json(&self) -> Value {
        if self.is_rational() {
            rational_json(&self.rational)
        } else {
            json!({
                "rational": rational_json(&self.rational),
                "irrational": rational_json(&self.irrational),
                "radicand": self.radicand,
            })
        }
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prob {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.clone() - other.clone()).signum().cmp(&0)
    }
}

impl From<Rational> for Prob {
    fn from(r: Rational) -> Self {
        Prob::from_rational(r)
    }
}

impl Default for Prob {
    fn default() -> Self {
        Prob::zero()
    }
}

impl Add for Prob {
    type Output = Prob;
    fn add(self, rhs: Prob) -> Prob {
        let d = self.common_radicand(&rhs);
        Prob::new(self.rational + rhs.rational, self.irrational + rhs.irrational, d)
    }
}

impl<'a> Add<&'a Prob> for &'a Prob {
    type Output = Prob;
    fn add(self, rhs: &Prob) -> Prob {
        let d = self.common_radicand(rhs);
        Prob::new(&self.rational + &rhs.rational, &self.irrational + &rhs.irrational, d)
    }
}

impl AddAssign<&Prob> for Prob {
    fn add_assign(&mut self, rhs: &Prob) {
        let d = self.common_radicand(rhs);
        self.rational += &rhs.rational;
        self.irrational += &rhs.irrational;
        self.radicand = d;
        if self.irrational.is_zero() {
            self.radicand = 1;
        }
    }
}

impl Sub for Prob {
    type Output = Prob;
    fn sub(self, rhs: Prob) -> Prob {
        let d = self.common_radicand(&rhs);
        Prob::new(self.rational - rhs.rational, self.irrational - rhs.irrational, d)
    }
}

impl Neg for Prob {
    type Output = Prob;
    fn neg(self) -> Prob {
        Prob { rational: -self.rational, irrational: -self.irrational, radicand: self.radicand }
    }
}

impl<'a> Mul<&'a Prob> for &'a Prob {
    type Output = Prob;
    fn mul(self, rhs: &Prob) -> Prob {
        if self.is_rational() && rhs.is_rational() {
            return Prob::from_rational(&self.rational * &rhs.rational);
        }
        let d = self.common_radicand(rhs);
        let dr = Rational::from_integer(BigInt::from(d));
        let rational =
            &self.rational * &rhs.rational + &self.irrational * &rhs.irrational * dr;
        let irrational = &self.rational * &rhs.irrational + &self.irrational * &rhs.rational;
        Prob::new(rational, irrational, d)
    }
}

impl Mul for Prob {
    type Output = Prob;
    fn mul(self, rhs: Prob) -> Prob {
        &self * &rhs
    }
}

impl Div for Prob {
    type Output = Prob;
    fn div(self, rhs: Prob) -> Prob {
        if self.is_rational() && rhs.is_rational() {
            return Prob::from_rational(self.rational / rhs.rational);
        }
        &self * &rhs.recip()
    }
}

impl<'a> Div<&'a Prob> for &'a Prob {
    type Output = Prob;
    fn div(self, rhs: &Prob) -> Prob {
        if self.is_rational() && rhs.is_rational() {
            return Prob::from_rational(&self.rational / &rhs.rational);
        }
        self * &rhs.recip()
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            write!(f, "{}", self.rational)
        } else {
            write!(f, "{} + {}·√{}", self.rational, self.irrational, self.radicand)
        }
    }
}

impl fmt::Debug for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
