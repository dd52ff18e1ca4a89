//! Exact dyadic probabilities.
//!
//! Every branching in the protocols is a fair coin flip, so every probability
//! that appears is `numerator / 2^k`. Keeping that shape lets sums, products and
//! complements stay exact without a general rational type.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// A probability `numerator / 2^log2_den` in lowest terms.
///
/// Lowest terms means the numerator is odd unless the exponent is zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Prob {
    num: BigUint,
    log2_den: u32,
}

impl Prob {
    pub fn zero() -> Self {
        Prob { num: BigUint::zero(), log2_den: 0 }
    }

    pub fn one() -> Self {
        Prob { num: BigUint::one(), log2_den: 0 }
    }

    pub fn half() -> Self {
        Prob::dyadic(1, 1)
    }

    /// `num / 2^log2_den`. Panics if the value exceeds one.
    pub fn dyadic(num: u64, log2_den: u32) -> Self {
        Prob::try_new(BigUint::from(num), log2_den).expect("probability must not exceed 1")
    }

    /// Returns `None` when the value is greater than one.
    pub fn try_new(num: BigUint, log2_den: u32) -> Option<Self> {
        let p = Prob::normalized(num, log2_den);
        if p.num > (BigUint::one() << p.log2_den) {
            None
        } else {
            Some(p)
        }
    }

    fn normalized(mut num: BigUint, mut log2_den: u32) -> Self {
        if num.is_zero() {
            return Prob::zero();
        }
        let tz = num.trailing_zeros().unwrap_or(0).min(u64::from(log2_den)) as u32;
        num >>= tz as usize;
        log2_den -= tz;
        Prob { num, log2_den }
    }

    /// The exact dyadic value of a finite float in `[0, 1]`.
    ///
    /// Every finite `f64` is itself a dyadic rational, so no rounding happens.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return None;
        }
        if x == 0.0 {
            return Some(Prob::zero());
        }
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp2) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        // x = mantissa * 2^exp2 with exp2 <= 0 for x <= 1
        if exp2 >= 0 {
            return Prob::try_new(BigUint::from(mantissa) << exp2 as usize, 0);
        }
        Prob::try_new(BigUint::from(mantissa), (-exp2) as u32)
    }

    pub fn numer(&self) -> &BigUint {
        &self.num
    }

    pub fn denom(&self) -> BigUint {
        BigUint::one() << self.log2_den
    }

    pub fn log2_denom(&self) -> u32 {
        self.log2_den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.log2_den == 0 && self.num.is_one()
    }

    /// `1 - self`.
    pub fn complement(&self) -> Prob {
        let full = BigUint::one() << self.log2_den;
        Prob::normalized(full - &self.num, self.log2_den)
    }

    pub fn pow(&self, exp: u32) -> Prob {
        let mut acc = Prob::one();
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    /// Nearest `f64`; exact whenever the numerator fits in 53 bits.
    pub fn to_f64(&self) -> f64 {
        if self.num.is_zero() {
            return 0.0;
        }
        let bits = self.num.bits();
        let shift = bits.saturating_sub(64);
        let top = (&self.num >> shift as usize).to_u64().unwrap_or(u64::MAX) as f64;
        let scale = shift as i64 - i64::from(self.log2_den);
        top * 2f64.powi(scale.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    fn aligned(&self, other: &Prob) -> (BigUint, BigUint) {
        let k = self.log2_den.max(other.log2_den);
        (&self.num << (k - self.log2_den) as usize, &other.num << (k - other.log2_den) as usize)
    }
}

impl Default for Prob {
    fn default() -> Self {
        Prob::zero()
    }
}

impl fmt::Debug for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prob({self})")
    }
}

/// Prints as `num/den`, or `0` / `1`.
impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log2_den == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.denom())
        }
    }
}

impl Ord for Prob {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = self.aligned(other);
        a.cmp(&b)
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Sums of disjoint events; callers keep them within [0, 1].
impl Add for &Prob {
    type Output = Prob;
    fn add(self, rhs: &Prob) -> Prob {
        let (a, b) = self.aligned(rhs);
        Prob::normalized(a + b, self.log2_den.max(rhs.log2_den))
    }
}

impl Add for Prob {
    type Output = Prob;
    fn add(self, rhs: Prob) -> Prob {
        &self + &rhs
    }
}

impl Mul for &Prob {
    type Output = Prob;
    fn mul(self, rhs: &Prob) -> Prob {
        Prob::normalized(&self.num * &rhs.num, self.log2_den + rhs.log2_den)
    }
}

impl Mul for Prob {
    type Output = Prob;
    fn mul(self, rhs: Prob) -> Prob {
        &self * &rhs
    }
}

impl Sum for Prob {
    fn sum<I: Iterator<Item = Prob>>(iter: I) -> Prob {
        iter.fold(Prob::zero(), |acc, p| &acc + &p)
    }
}

impl<'a> Sum<&'a Prob> for Prob {
    fn sum<I: Iterator<Item = &'a Prob>>(iter: I) -> Prob {
        iter.fold(Prob::zero(), |acc, p| &acc + p)
    }
}
