//! Exact rational numbers: parsing, printing and decimal rendering.
//!
//! Every probability, reward and derived value in the crate is a
//! [`Rational`]. Literals are accepted as `p/q`, integers or finite decimals
//! (`0.25` parses to exactly `1/4`).

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRationalError(pub String);

/// Integer as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `p/q` as a rational. Panics when `q == 0`.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p/q`, an integer, or a finite decimal such as `-1.25`.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_integer(p).ok_or_else(err)?;
        let q = parse_integer(q).ok_or_else(err)?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() && digits.is_empty() {
            return Err(err());
        }
        if !digits.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let combined = format!("{digits}{frac}");
        let mut numer: BigInt = combined.parse().map_err(|_| err())?;
        if negative {
            numer = -numer;
        }
        let denom = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(numer, denom));
    }
    parse_integer(s).map(Rational::from_integer).ok_or_else(err)
}

fn parse_integer(s: &str) -> Option<BigInt> {
    let s = s.trim();
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// `p/q` in lowest terms, or `p` for integers.
pub fn fmt_rational(r: &Rational) -> String {
    r.to_string()
}

/// Decimal rendering with `digits` fractional digits, rounded half away from zero.
pub fn to_decimal(r: &Rational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = r * Rational::from_integer(scale.clone());
    let negative = scaled.is_negative();
    let abs = scaled.abs();
    let (q, rem) = abs.numer().div_rem(abs.denom());
    let mut q = q;
    if rem * BigInt::from(2) >= *abs.denom() {
        q += 1;
    }
    let (int_part, frac_part) = q.div_rem(&scale);
    let sign = if negative && !q.is_zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = digits)
    }
}

/// Nearest `f64`.
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Smallest integer ≥ `r`.
pub fn ceil(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

/// `r` as a `u64` when it is a non-negative integer that fits.
pub fn to_u64(r: &Rational) -> Option<u64> {
    if r.is_integer() {
        r.to_integer().to_u64()
    } else {
        None
    }
}

/// True when `0 < r ≤ 1`.
pub fn is_probability(r: &Rational) -> bool {
    r.is_positive() && *r <= Rational::one()
}

/// Least common multiple of the denominators of `values` (1 when empty).
pub fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Zero as a rational.
pub fn zero() -> Rational {
    Rational::zero()
}

/// One as a rational.
pub fn one() -> Rational {
    Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_literal_forms() {
        assert_eq!(parse_rational("1/4").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert_eq!(parse_rational("6/8").unwrap(), ratio(3, 4));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1e3").is_err());
        assert!(parse_rational("").is_err());
        assert!(parse_rational("-").is_err());
    }

    #[test]
    fn prints_lowest_terms() {
        assert_eq!(fmt_rational(&ratio(6, 8)), "3/4");
        assert_eq!(fmt_rational(&int(3)), "3");
        assert_eq!(fmt_rational(&ratio(-1, 4)), "-1/4");
    }

    #[test]
    fn decimal_rounding() {
        assert_eq!(to_decimal(&ratio(5, 4), 3), "1.250");
        assert_eq!(to_decimal(&ratio(2, 3), 4), "0.6667");
        assert_eq!(to_decimal(&ratio(-1, 8), 2), "-0.13");
        assert_eq!(to_decimal(&ratio(-1, 1000), 2), "0.00");
        assert_eq!(to_decimal(&int(40), 0), "40");
    }
}
