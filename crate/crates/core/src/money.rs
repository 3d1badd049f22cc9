//! Fixed-point currency with four fractional digits.
//!
//! Prices and bankrolls are carried as an integer count of 1/10000 currency
//! units, so ledger arithmetic is exact and identical on every platform.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Internal units per whole currency unit.
pub const SCALE: i64 = 10_000;
const FRACTION_DIGITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`")]
    Invalid(String),
    #[error("amount `{0}` has more than 4 fractional digits")]
    TooPrecise(String),
    #[error("amount `{0}` is out of range")]
    Overflow(String),
}

/// A signed amount of money (or a price) in units of 0.0001.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_units(units: i64) -> Self {
        Money(units)
    }

    pub const fn from_whole(whole: i64) -> Self {
        Money(whole * SCALE)
    }

    /// Raw count of 0.0001 units.
    pub const fn units(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Cost of `quantity` items at this price.
    pub fn times(self, quantity: u64) -> Money {
        let q = i64::try_from(quantity).expect("quantity exceeds i64");
        Money(self.0.checked_mul(q).expect("money overflow"))
    }

    pub fn checked_times(self, quantity: u64) -> Option<Money> {
        let q = i64::try_from(quantity).ok()?;
        self.0.checked_mul(q).map(Money)
    }

    /// Lossy conversion for statistics and display.
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Nearest representable amount to `value`.
    pub fn from_f64_rounded(value: f64) -> Money {
        Money((value * SCALE as f64).round() as i64)
    }

    /// Render with `digits` fractional digits (0..=4), rounding half away from zero.
    pub fn format_with(self, digits: usize) -> String {
        let digits = digits.min(FRACTION_DIGITS);
        let drop = 10_i64.pow((FRACTION_DIGITS - digits) as u32);
        let abs = self.0.unsigned_abs() as i128;
        let rounded = (abs + (drop as i128) / 2) / drop as i128;
        let sign = if self.0 < 0 && rounded != 0 { "-" } else { "" };
        if digits == 0 {
            return format!("{sign}{rounded}");
        }
        let div = 10_i128.pow(digits as u32);
        format!(
            "{sign}{}.{:0width$}",
            rounded / div,
            rounded % div,
            width = digits
        )
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format_with(FRACTION_DIGITS))
    }
}

impl FromStr for Money {
    type Err = MoneyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(MoneyParseError::Empty);
        }
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(MoneyParseError::Invalid(s.to_string()));
        }
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) {
            return Err(MoneyParseError::Invalid(s.to_string()));
        }
        // Trailing zeros beyond the fourth digit carry no information.
        let frac_trimmed = if frac_part.len() > FRACTION_DIGITS {
            let (keep, rest) = frac_part.split_at(FRACTION_DIGITS);
            if rest.bytes().any(|b| b != b'0') {
                return Err(MoneyParseError::TooPrecise(s.to_string()));
            }
            keep
        } else {
            frac_part
        };
        let overflow = || MoneyParseError::Overflow(s.to_string());
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: i64 = 0;
        for (i, b) in frac_trimmed.bytes().enumerate() {
            frac += i64::from(b - b'0') * 10_i64.pow((FRACTION_DIGITS - 1 - i) as u32);
        }
        let units = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(overflow)?;
        Ok(Money(if negative { -units } else { units }))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("money overflow"))
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0.checked_sub(rhs.0).expect("money overflow"))
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        *self = *self - rhs;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Number(v) => Ok(Money::from_f64_rounded(v)),
        }
    }
}
