//! Exact fractions and their text form.

use num_rational::Ratio;
use num_traits::{One, Zero};

pub type Rational = Ratio<i64>;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot parse {0:?} as a fraction (expected p/q, an integer, or a decimal)")]
pub struct ParseRationalError(pub String);

/// Parses `p/q`, integers, and finite decimals such as `0.25`.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let t = s.trim();
    if let Some((int, frac)) = t.split_once('.') {
        let neg = int.starts_with('-');
        let int_part: i64 = match int.trim_start_matches('-') {
            "" => 0,
            v => v.parse().map_err(|_| err())?,
        };
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let den = 10i64.pow(frac.len() as u32);
        let num: i64 = frac.parse().map_err(|_| err())?;
        let r = Rational::from_integer(int_part) + Rational::new(num, den);
        return Ok(if neg { -r } else { r });
    }
    let r: Rational = t.parse().map_err(|_| err())?;
    Ok(r)
}

pub fn fraction(num: usize, den: usize) -> Rational {
    if den == 0 {
        return Rational::zero();
    }
    Rational::new(num as i64, den as i64)
}

/// `value * scale`, as an exact fraction.
pub fn scaled(value: Rational, scale: usize) -> Rational {
    value * Rational::from_integer(scale as i64)
}

/// Whether `count < value * scale`.
pub fn below(count: usize, value: Rational, scale: usize) -> bool {
    Rational::from_integer(count as i64) < scaled(value, scale)
}

pub fn ceil_nonneg(r: Rational) -> usize {
    let c = r.ceil().to_integer();
    c.max(0) as usize
}

pub fn floor_nonneg(r: Rational) -> usize {
    let f = r.floor().to_integer();
    f.max(0) as usize
}

pub fn in_open_unit(r: Rational) -> bool {
    r > Rational::zero() && r < Rational::one()
}
