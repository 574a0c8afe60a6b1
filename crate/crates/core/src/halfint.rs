//! Exact half-integers: the index domain of the mock theta parameters m and s.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::Error;

/// An exact element of (1/2)Z, stored as twice its value.
///
/// The classification helpers follow the index domains used throughout:
/// N = {1, 2, ...}, (1/2)N = {1/2, 1, 3/2, ...}, and the "odd halves"
/// (1/2)N_odd = {1/2, 3/2, 5/2, ...} (twice the value is odd).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt {
    twice: i64,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };
    pub const HALF: HalfInt = HalfInt { twice: 1 };
    pub const ONE: HalfInt = HalfInt { twice: 2 };

    pub fn from_twice(twice: i64) -> Self {
        HalfInt { twice }
    }

    pub fn from_int(n: i64) -> Self {
        HalfInt { twice: 2 * n }
    }

    pub fn twice(self) -> i64 {
        self.twice
    }

    pub fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }

    /// Twice the value is odd: the element lies in (1/2)Z \ Z.
    pub fn is_half_odd(self) -> bool {
        self.twice % 2 != 0
    }

    pub fn is_positive(self) -> bool {
        self.twice > 0
    }

    /// m in N = {1, 2, 3, ...}.
    pub fn in_nat(self) -> bool {
        self.is_integer() && self.twice >= 2
    }

    /// m in N_odd = {1, 3, 5, ...}.
    pub fn in_nat_odd(self) -> bool {
        self.in_nat() && (self.twice / 2) % 2 != 0
    }

    /// m in (1/2)N = {1/2, 1, 3/2, ...}.
    pub fn in_half_nat(self) -> bool {
        self.twice >= 1
    }

    /// m in (1/2)N_odd = {1/2, 3/2, 5/2, ...}.
    pub fn in_half_nat_odd(self) -> bool {
        self.twice >= 1 && self.twice % 2 != 0
    }

    /// s in (1/2)Z_odd = {..., -3/2, -1/2, 1/2, 3/2, ...}.
    pub fn in_half_int_odd(self) -> bool {
        self.twice % 2 != 0
    }

    /// Integer value, if integral.
    pub fn as_integer(self) -> Option<i64> {
        if self.is_integer() {
            Some(self.twice / 2)
        } else {
            None
        }
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.twice), BigInt::from(2))
    }

    pub fn to_f64(self) -> f64 {
        self.twice as f64 / 2.0
    }

    /// The dyadic decomposition m = 2^p * m' with m' having odd numerator
    /// over its (1 or 2) denominator; returns p for positive integers and 0
    /// otherwise. Used to size doubling plans.
    pub fn dyadic_exponent(self) -> u32 {
        match self.as_integer() {
            Some(n) if n > 0 => n.trailing_zeros(),
            _ => 0,
        }
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt { twice: self.twice + rhs.twice }
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt { twice: self.twice - rhs.twice }
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt { twice: -self.twice }
    }
}

impl Mul<i64> for HalfInt {
    type Output = HalfInt;
    fn mul(self, rhs: i64) -> HalfInt {
        HalfInt { twice: self.twice * rhs }
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts "2", "-1", "3/2", "-5/2".
    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Usage(format!("cannot parse half-integer from `{s}`"));
        if let Some((num, den)) = s.split_once('/') {
            let n: i64 = num.trim().parse().map_err(|_| bad())?;
            let d: i64 = den.trim().parse().map_err(|_| bad())?;
            match d {
                1 => Ok(HalfInt::from_int(n)),
                2 => Ok(HalfInt::from_twice(n)),
                _ => Err(Error::Usage(format!(
                    "`{s}` is not a half-integer (denominator must be 1 or 2)"
                ))),
            }
        } else {
            let n: i64 = s.trim().parse().map_err(|_| bad())?;
            Ok(HalfInt::from_int(n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let h = HalfInt::HALF;
        assert!(h.in_half_nat() && h.in_half_nat_odd() && !h.in_nat());
        let one = HalfInt::ONE;
        assert!(one.in_nat() && one.in_nat_odd() && !one.in_half_nat_odd());
        let m32 = HalfInt::from_twice(3);
        assert!(m32.in_half_nat_odd() && m32.in_half_int_odd());
        let m2 = HalfInt::from_int(2);
        assert!(m2.in_nat() && !m2.in_nat_odd());
        assert!(HalfInt::from_twice(-3).in_half_int_odd());
        assert!(!HalfInt::from_twice(-3).in_half_nat_odd());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("3/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(3));
        assert_eq!("-1/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(-1));
        assert_eq!("4".parse::<HalfInt>().unwrap(), HalfInt::from_int(4));
        assert_eq!(HalfInt::from_twice(5).to_string(), "5/2");
        assert_eq!(HalfInt::from_int(-3).to_string(), "-3");
        assert!("2/3".parse::<HalfInt>().is_err());
    }

    #[test]
    fn dyadic() {
        assert_eq!(HalfInt::from_int(4).dyadic_exponent(), 2);
        assert_eq!(HalfInt::from_int(6).dyadic_exponent(), 1);
        assert_eq!(HalfInt::from_int(3).dyadic_exponent(), 0);
    }
}
