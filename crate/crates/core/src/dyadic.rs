//! Exact dyadic rationals `p / 2^e`, the index set for fermionic modes.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest exponent we allow; keeps every aligned numerator inside `i128`.
pub const MAX_EXPONENT: u32 = 60;

/// A dyadic rational `numerator / 2^exponent` in lowest terms.
///
/// Canonical form: `exponent == 0` or `numerator` is odd. The derived
/// `Eq`/`Hash` are therefore value equality.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicIndex {
    numerator: i64,
    exponent: u32,
}

impl DyadicIndex {
    pub const ZERO: DyadicIndex = DyadicIndex {
        numerator: 0,
        exponent: 0,
    };

    pub fn new(numerator: i64, exponent: u32) -> Self {
        Self::canonical(numerator as i128, exponent)
    }

    pub const fn integer(value: i64) -> Self {
        DyadicIndex {
            numerator: value,
            exponent: 0,
        }
    }

    fn canonical(mut num: i128, mut exp: u32) -> Self {
        if num == 0 {
            return Self::ZERO;
        }
        while exp > 0 && num % 2 == 0 {
            num /= 2;
            exp -= 1;
        }
        assert!(exp <= MAX_EXPONENT, "dyadic exponent {exp} exceeds {MAX_EXPONENT}");
        let numerator = i64::try_from(num).expect("dyadic numerator overflow");
        DyadicIndex {
            numerator,
            exponent: exp,
        }
    }

    pub fn numerator(self) -> i64 {
        self.numerator
    }

    pub fn exponent(self) -> u32 {
        self.exponent
    }

    pub fn is_integer(self) -> bool {
        self.exponent == 0
    }

    pub fn to_integer(self) -> Option<i64> {
        self.is_integer().then_some(self.numerator)
    }

    /// True when the value lies in `Z / 2^level`.
    pub fn in_level(self, level: u32) -> bool {
        self.exponent <= level
    }

    /// Multiply by `2^k` (`k` may be negative).
    pub fn mul_pow2(self, k: i32) -> Self {
        if k >= 0 {
            let k = k as u32;
            if self.exponent >= k {
                DyadicIndex {
                    numerator: self.numerator,
                    exponent: self.exponent - k,
                }
            } else {
                let shift = k - self.exponent;
                Self::canonical((self.numerator as i128) << shift, 0)
            }
        } else {
            Self::canonical(self.numerator as i128, self.exponent + k.unsigned_abs())
        }
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / (2f64).powi(self.exponent as i32)
    }

    fn aligned(self, other: Self) -> (i128, i128, u32) {
        let e = self.exponent.max(other.exponent);
        (
            (self.numerator as i128) << (e - self.exponent),
            (other.numerator as i128) << (e - other.exponent),
            e,
        )
    }

    /// `p/2^e` rendering used by the JSON formats.
    pub fn to_pow2_string(self) -> String {
        format!("{}/2^{}", self.numerator, self.exponent)
    }
}

impl From<i64> for DyadicIndex {
    fn from(value: i64) -> Self {
        DyadicIndex::integer(value)
    }
}

impl Ord for DyadicIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}

impl PartialOrd for DyadicIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for DyadicIndex {
    type Output = DyadicIndex;
    fn add(self, rhs: Self) -> Self {
        let (a, b, e) = self.aligned(rhs);
        Self::canonical(a + b, e)
    }
}

impl Sub for DyadicIndex {
    type Output = DyadicIndex;
    fn sub(self, rhs: Self) -> Self {
        let (a, b, e) = self.aligned(rhs);
        Self::canonical(a - b, e)
    }
}

impl Neg for DyadicIndex {
    type Output = DyadicIndex;
    fn neg(self) -> Self {
        DyadicIndex {
            numerator: -self.numerator,
            exponent: self.exponent,
        }
    }
}

impl fmt::Display for DyadicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 0 {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, 1u64 << self.exponent)
        }
    }
}

impl fmt::Debug for DyadicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Exponent `e` with `2^e == value`, if any.
pub(crate) fn log2_exact(value: i64) -> Option<u32> {
    (value > 0 && value & (value - 1) == 0).then(|| value.trailing_zeros())
}

impl FromStr for DyadicIndex {
    type Err = Error;

    /// Accepts `p`, `p/q` with `q` a power of two, and `p/2^e`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: &str| Error::Syntax {
            column: 1,
            message: format!("{msg}: {s:?}"),
        };
        let Some((num, den)) = s.split_once('/') else {
            return s
                .parse::<i64>()
                .map(DyadicIndex::integer)
                .map_err(|_| bad("invalid integer"));
        };
        let numerator: i64 = num.trim().parse().map_err(|_| bad("invalid numerator"))?;
        let den = den.trim();
        let exponent = if let Some(e) = den.strip_prefix("2^") {
            e.parse::<u32>().map_err(|_| bad("invalid exponent"))?
        } else {
            let q: i64 = den.parse().map_err(|_| bad("invalid denominator"))?;
            log2_exact(q).ok_or(Error::NonDyadic {
                column: 1,
                denominator: q,
            })?
        };
        if exponent > MAX_EXPONENT {
            return Err(bad("exponent too large"));
        }
        Ok(DyadicIndex::new(numerator, exponent))
    }
}

impl Serialize for DyadicIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_pow2_string())
    }
}

impl<'de> Deserialize<'de> for DyadicIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
