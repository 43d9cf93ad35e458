//! Exact rational values and their canonical decimal rendering.
//!
//! Metric values are computed in exact rational arithmetic and rendered as
//! decimal strings with six fractional digits (round half away from zero).
//! Threshold comparisons always happen on the exact values, never on the
//! rendered decimals.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

pub const DECIMAL_DIGITS: u32 = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatioError {
    #[error("ratio {0} is outside [0, 1]")]
    OutOfRange(String),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("malformed decimal {0:?}")]
    MalformedDecimal(String),
}

/// A rational value in [0, 1], held exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ratio(Rational64);

impl Ratio {
    pub const ZERO: Ratio = Ratio(Rational64::new_raw(0, 1));
    pub const ONE: Ratio = Ratio(Rational64::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Result<Self, RatioError> {
        if denom == 0 {
            return Err(RatioError::ZeroDenominator);
        }
        let r = Rational64::new(numer, denom);
        Self::from_rational(r)
    }

    pub fn from_rational(r: Rational64) -> Result<Self, RatioError> {
        if r.is_negative() || r > Rational64::from_integer(1) {
            return Err(RatioError::OutOfRange(to_decimal_string(r)));
        }
        Ok(Ratio(r))
    }

    /// Fraction `hits / total`, with `total == 0` mapped to the stated
    /// convention value instead of an error.
    pub fn fraction_or(hits: usize, total: usize, when_empty: Ratio) -> Ratio {
        if total == 0 {
            when_empty
        } else {
            Ratio(Rational64::new(hits as i64, total as i64))
        }
    }

    pub fn as_rational(&self) -> Rational64 {
        self.0
    }

    /// Canonical decimal rendering, e.g. "0.750000".
    pub fn to_decimal(&self) -> String {
        to_decimal_string(self.0)
    }

    pub fn parse_decimal(s: &str) -> Result<Self, RatioError> {
        let r = parse_decimal_rational(s)?;
        Self::from_rational(r)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_decimal())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Ratio::parse_decimal(&s).map_err(serde::de::Error::custom)
    }
}

/// Render any non-negative rational as a decimal string with six fractional
/// digits, rounding half away from zero.
pub fn to_decimal_string(r: Rational64) -> String {
    let scale: i128 = 10i128.pow(DECIMAL_DIGITS);
    let n = *r.numer() as i128;
    let d = *r.denom() as i128;
    debug_assert!(d > 0);
    let sign = if n < 0 { "-" } else { "" };
    let n = n.abs();
    let scaled = (n * scale + d / 2) / d;
    let int_part = scaled / scale;
    let frac_part = scaled % scale;
    format!("{sign}{int_part}.{frac_part:0width$}", width = DECIMAL_DIGITS as usize)
}

/// Parse a decimal string ("0.9", "2.500000") into an exact rational.
pub fn parse_decimal_rational(s: &str) -> Result<Rational64, RatioError> {
    let malformed = || RatioError::MalformedDecimal(s.to_string());
    let (int_str, frac_str) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_str.is_empty() || !int_str.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    if !frac_str.bytes().all(|b| b.is_ascii_digit()) || frac_str.len() > 12 {
        return Err(malformed());
    }
    let int_part: i64 = int_str.parse().map_err(|_| malformed())?;
    if frac_str.is_empty() {
        return Ok(Rational64::from_integer(int_part));
    }
    let frac_digits: i64 = frac_str.parse().map_err(|_| malformed())?;
    let denom = 10i64.pow(frac_str.len() as u32);
    Ok(Rational64::from_integer(int_part) + Rational64::new(frac_digits, denom))
}

/// Serde adapter serializing a `Rational64` as its canonical decimal string.
pub mod rational_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational64, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&to_decimal_string(*r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rational64, D::Error> {
        let s = String::deserialize(de)?;
        parse_decimal_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Mean of a list of rationals; `when_empty` if the list is empty.
pub fn mean_or(values: &[Rational64], when_empty: Rational64) -> Rational64 {
    if values.is_empty() {
        return when_empty;
    }
    let sum: Rational64 = values.iter().copied().fold(Rational64::zero(), |a, b| a + b);
    sum / Rational64::from_integer(values.len() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_six_digits() {
        assert_eq!(Ratio::new(3, 4).unwrap().to_decimal(), "0.750000");
        assert_eq!(Ratio::new(2, 3).unwrap().to_decimal(), "0.666667");
        assert_eq!(Ratio::ONE.to_decimal(), "1.000000");
        assert_eq!(Ratio::ZERO.to_decimal(), "0.000000");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Ratio::new(5, 4).is_err());
        assert!(Ratio::new(-1, 4).is_err());
        assert!(Ratio::new(1, 0).is_err());
    }

    #[test]
    fn parses_short_decimals_exactly() {
        assert_eq!(Ratio::parse_decimal("0.9").unwrap().as_rational(), Rational64::new(9, 10));
        assert_eq!(Ratio::parse_decimal("1").unwrap(), Ratio::ONE);
        assert_eq!(Ratio::parse_decimal("0.750000").unwrap(), Ratio::new(3, 4).unwrap());
        assert!(Ratio::parse_decimal("1.5").is_err());
        assert!(Ratio::parse_decimal("-0.5").is_err());
        assert!(Ratio::parse_decimal("abc").is_err());
    }

    #[test]
    fn mean_over_depths() {
        let m = mean_or(
            &[Rational64::from_integer(2), Rational64::from_integer(3)],
            Rational64::zero(),
        );
        assert_eq!(m, Rational64::new(5, 2));
        assert_eq!(to_decimal_string(m), "2.500000");
    }

    #[test]
    fn exact_threshold_comparison_does_not_round() {
        // 899999/1000000 renders as "0.899999" but must stay below 0.9 exactly.
        let below = Ratio::new(899_999, 1_000_000).unwrap();
        let tau = Ratio::parse_decimal("0.9").unwrap();
        assert!(below < tau);
        let at = Ratio::new(9, 10).unwrap();
        assert!(at >= tau);
    }

    #[test]
    fn serde_round_trip() {
        let r = Ratio::new(1, 2).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "\"0.500000\"");
        let back: Ratio = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
