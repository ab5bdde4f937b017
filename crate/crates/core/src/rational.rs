//! Exact rationals used for every density, defect and threshold.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Parses `"3/8"`, `"0.125"`, `"1e-3"` or `"2"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Format(format!("not a rational number: `{s}`"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: i64 = digits.parse().map_err(|_| bad())?;
    let mut scale = -(frac_part.len() as i32) + exp;
    let ten = |k: i32| 10i64.checked_pow(k as u32).ok_or_else(bad);
    let mut den = 1i64;
    if scale >= 0 {
        num = num.checked_mul(ten(scale)?).ok_or_else(bad)?;
    } else {
        scale = -scale;
        den = ten(scale)?;
    }
    if neg {
        num = -num;
    }
    Ok(Rational::new(num, den))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Checks `0 < r < 1` (or `<= 1` when `closed_above`).
pub fn check_unit_interval(name: &str, r: &Rational, closed_above: bool) -> Result<()> {
    let one = Rational::from_integer(1);
    let ok = r.is_positive() && if closed_above { *r <= one } else { *r < one };
    if !ok {
        let range = if closed_above { "(0, 1]" } else { "(0, 1)" };
        return Err(Error::domain(format!("{name} = {r} must lie in {range}")));
    }
    Ok(())
}

pub fn ratio(num: usize, den: usize) -> Rational {
    if den == 0 {
        return Rational::zero();
    }
    Rational::new(num as i64, den as i64)
}

/// JSON shape for an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: i64,
    pub den: i64,
}

impl From<Rational> for Fraction {
    fn from(r: Rational) -> Self {
        Fraction {
            num: *r.numer(),
            den: *r.denom(),
        }
    }
}

impl From<Fraction> for Rational {
    fn from(f: Fraction) -> Self {
        Rational::new(f.num, f.den)
    }
}
