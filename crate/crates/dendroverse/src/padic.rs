//! Exact 2-adic branch codes, the Monna map, and ultrametric geometry.
//!
//! A branch of a binary event tree is a finite digit string `a_0 a_1 ... a_k`
//! (`a_j ∈ {0,1}`, `a_0` nearest the root) with integer value `Σ a_j 2^j`.
//! The Monna map sends it to the dyadic rational `Σ a_j 2^{-j-1}` in `[0,1)`.
//! Distances between codes are 2-adic: `2^{-m}` where `m` is the length of
//! the shared root path, which makes every triangle isosceles.
//!
//! Everything in this module is exact; floating point only appears in the
//! grid-field layer.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PadicError {
    #[error("edge code must contain at least one digit")]
    EmptyCode,
    #[error("edge code digit must be 0 or 1, got {0}")]
    InvalidDigit(u8),
    #[error("value {value} is not representable with {depth} binary fraction digits")]
    NotRepresentable { value: String, depth: u32 },
    #[error("`{0}` is not a dyadic rational literal")]
    BadDyadicLiteral(String),
}

/// A finite 2-adic branch code. `digits[j]` is `a_j`; `a_0` is the branch
/// choice nearest the root. Trailing zeros are significant: `[1]` and
/// `[1,0]` are different codes (leaves at different depths) even though
/// both have integer value 1.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeCode {
    digits: Vec<u8>,
}

impl EdgeCode {
    pub fn new(digits: Vec<u8>) -> Result<Self, PadicError> {
        if digits.is_empty() {
            return Err(PadicError::EmptyCode);
        }
        if let Some(&bad) = digits.iter().find(|&&d| d > 1) {
            return Err(PadicError::InvalidDigit(bad));
        }
        Ok(EdgeCode { digits })
    }

    /// Parses a root-first digit string such as `"101"` (`a_0=1, a_1=0, a_2=1`).
    pub fn parse(s: &str) -> Result<Self, PadicError> {
        let digits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(PadicError::InvalidDigit(other as u8)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        EdgeCode::new(digits)
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn depth(&self) -> u32 {
        self.digits.len() as u32
    }

    /// The integer value `Σ a_j 2^j`.
    pub fn integer_value(&self) -> BigUint {
        let mut v = BigUint::zero();
        for (j, &d) in self.digits.iter().enumerate() {
            if d == 1 {
                v |= BigUint::one() << j;
            }
        }
        v
    }
}

impl fmt::Display for EdgeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for EdgeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EdgeCode({self})")
    }
}

/// An exact dyadic rational `numer / 2^exp`, held in canonical form
/// (`numer` odd, or zero with `exp = 0`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    numer: BigInt,
    exp: u32,
}

impl Dyadic {
    pub fn new(numer: impl Into<BigInt>, exp: u32) -> Self {
        let mut d = Dyadic {
            numer: numer.into(),
            exp,
        };
        d.canonicalize();
        d
    }

    pub fn zero() -> Self {
        Dyadic {
            numer: BigInt::zero(),
            exp: 0,
        }
    }

    pub fn one() -> Self {
        Dyadic {
            numer: BigInt::one(),
            exp: 0,
        }
    }

    fn canonicalize(&mut self) {
        if self.numer.is_zero() {
            self.exp = 0;
            return;
        }
        while self.exp > 0 && (&self.numer & BigInt::one()).is_zero() {
            self.numer >>= 1;
            self.exp -= 1;
        }
    }

    pub fn numer(&self) -> &BigInt {
        &self.numer
    }

    /// Exponent of the canonical power-of-two denominator.
    pub fn exp(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.numer.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.numer.is_negative()
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let exp = self.exp.max(other.exp);
        let a = &self.numer << (exp - self.exp);
        let b = &other.numer << (exp - other.exp);
        Dyadic::new(a + b, exp)
    }

    pub fn sub(&self, other: &Dyadic) -> Dyadic {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic {
            numer: -&self.numer,
            exp: self.exp,
        }
    }

    pub fn abs(&self) -> Dyadic {
        Dyadic {
            numer: self.numer.abs(),
            exp: self.exp,
        }
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.numer.clone(), BigInt::one() << self.exp)
    }

    /// Converts an arbitrary rational, returning `None` unless its reduced
    /// denominator is a power of two.
    pub fn from_rational(r: &BigRational) -> Option<Dyadic> {
        let mut den = r.denom().magnitude().clone();
        let mut exp = 0u32;
        while (&den & BigUint::one()).is_zero() {
            den >>= 1;
            exp += 1;
        }
        if !den.is_one() {
            return None;
        }
        let mut numer = r.numer().clone();
        if r.denom().is_negative() {
            numer = -numer;
        }
        Some(Dyadic::new(numer, exp))
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `"5/8"`, `"-1/4"`, or an integer literal; the denominator
    /// must be a power of two.
    pub fn parse(s: &str) -> Result<Dyadic, PadicError> {
        let bad = || PadicError::BadDyadicLiteral(s.to_string());
        let (num_s, den_s) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (s.trim(), None),
        };
        let numer: BigInt = num_s.parse().map_err(|_| bad())?;
        let Some(den_s) = den_s else {
            return Ok(Dyadic::new(numer, 0));
        };
        let den: BigUint = den_s.parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        let mut d = den;
        let mut exp = 0u32;
        while (&d & BigUint::one()).is_zero() {
            d >>= 1;
            exp += 1;
        }
        if !d.is_one() {
            return Err(bad());
        }
        Ok(Dyadic::new(numer, exp))
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let exp = self.exp.max(other.exp);
        let a = &self.numer << (exp - self.exp);
        let b = &other.numer << (exp - other.exp);
        a.cmp(&b)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, BigInt::one() << self.exp)
        }
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dyadic({self})")
    }
}

/// The Monna map: digit reversal into `[0,1)`, `Σ a_j 2^{-j-1}`.
pub fn monna_map(code: &EdgeCode) -> Dyadic {
    let d = code.depth();
    let mut numer = BigInt::zero();
    for (j, &a) in code.digits().iter().enumerate() {
        if a == 1 {
            numer |= BigInt::one() << (d as usize - 1 - j);
        }
    }
    Dyadic::new(numer, d)
}

/// Inverse of [`monna_map`] at a fixed depth. The output has exactly
/// `depth` digits (trailing zeros included), so
/// `inverse_monna(monna_map(c), c.depth()) == c`.
pub fn inverse_monna(value: &BigRational, depth: u32) -> Result<EdgeCode, PadicError> {
    let not_rep = || PadicError::NotRepresentable {
        value: value.to_string(),
        depth,
    };
    if value.is_negative() || *value >= BigRational::one() {
        return Err(not_rep());
    }
    let scaled = value * BigRational::from_integer(BigInt::one() << depth);
    if !scaled.is_integer() {
        return Err(not_rep());
    }
    let n = scaled.to_integer().magnitude().clone();
    let digits = (0..depth)
        .map(|j| u8::from(n.bit((depth - 1 - j) as u64)))
        .collect();
    EdgeCode::new(digits)
}

/// 2-adic valuation of the difference of the two integer values, read off
/// as the index of the first differing digit (shorter codes zero-extended).
/// `None` means the integer values are equal (infinite valuation).
pub fn valuation_of_difference(a: &EdgeCode, b: &EdgeCode) -> Option<u32> {
    let len = a.digits().len().max(b.digits().len());
    (0..len)
        .find(|&j| {
            a.digits().get(j).copied().unwrap_or(0) != b.digits().get(j).copied().unwrap_or(0)
        })
        .map(|j| j as u32)
}

/// The 2-adic distance `|edge_a - edge_b|_2 = 2^{-m}`, zero iff the codes
/// have equal integer value. A longer shared root path means a shorter
/// distance.
pub fn padic_distance(a: &EdgeCode, b: &EdgeCode) -> Dyadic {
    match valuation_of_difference(a, b) {
        None => Dyadic::zero(),
        Some(m) => Dyadic::new(1, m),
    }
}

/// Membership in the ball of the given radius around `center`: strict for
/// the open ball `{x : |center - x|_2 < R}`, otherwise the closed ball.
pub fn ball_membership(
    center: &EdgeCode,
    radius: &BigRational,
    strict: bool,
    candidate: &EdgeCode,
) -> bool {
    let d = padic_distance(center, candidate).to_rational();
    if strict {
        d < *radius
    } else {
        d <= *radius
    }
}
