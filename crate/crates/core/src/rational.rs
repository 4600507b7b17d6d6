//! Exact rational helpers: decimal parsing, significant-digit rounding and
//! report-friendly formatting.

use std::fmt;

use num::bigint::Sign;
use num::{BigInt, BigRational, BigUint, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Parses `"-1"`, `"0.5"`, `"1.66e-3"`, `"3/13"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_decimal(num)?;
        let d = parse_decimal(den)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    parse_decimal(s)
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let s = text.trim();
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i64>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(digits.parse::<BigInt>().ok()?);
    let shift = exponent - frac_part.len() as i64;
    value *= pow10(shift);
    Some(if negative { -value } else { value })
}

/// Converts a finite double to the rational denoted by its shortest
/// round-trip decimal representation (so `0.4` becomes exactly `2/5`).
pub fn from_f64_literal(value: f64) -> Option<BigRational> {
    if !value.is_finite() {
        return None;
    }
    parse_decimal(&format!("{value:e}"))
}

pub fn pow10(exp: i64) -> BigRational {
    let base = BigInt::from(10u32).pow(exp.unsigned_abs() as u32);
    if exp >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

pub fn to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn int(value: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(value))
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Decimal exponent `e` with `10^e <= |x| < 10^(e+1)`; `x` must be nonzero.
pub fn decimal_exponent(x: &BigRational) -> i64 {
    let x = x.abs();
    let n_digits = x.numer().to_string().len() as i64;
    let d_digits = x.denom().to_string().len() as i64;
    let mut e = n_digits - d_digits;
    while pow10(e) > x {
        e -= 1;
    }
    while pow10(e + 1) <= x {
        e += 1;
    }
    e
}

/// Rounds a positive rational toward zero, keeping `digits` significant digits.
pub fn truncate_sig(x: &BigRational, digits: u32) -> BigRational {
    if x.is_zero() {
        return x.clone();
    }
    let scale = pow10(digits as i64 - 1 - decimal_exponent(x));
    (x * &scale).trunc() / scale
}

/// Rounds to `digits` significant digits, ties away from zero.
pub fn round_sig(x: &BigRational, digits: u32) -> BigRational {
    if x.is_zero() {
        return x.clone();
    }
    let scale = pow10(digits as i64 - 1 - decimal_exponent(x));
    (x * &scale).round() / scale
}

/// Exact decimal if the denominator only has factors 2 and 5, `p/q` otherwise.
pub fn to_exact_string(x: &BigRational) -> String {
    let mut den = x.denom().clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let mut twos = 0u32;
    let mut fives = 0u32;
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", x.numer(), x.denom());
    }
    let places = twos.max(fives);
    let scaled = (x * pow10(places as i64)).to_integer();
    if places == 0 {
        return scaled.to_string();
    }
    let negative = scaled.sign() == Sign::Minus;
    let mut digits = scaled.abs().to_string();
    while digits.len() <= places as usize {
        digits.insert(0, '0');
    }
    let split = digits.len() - places as usize;
    let (i, f) = digits.split_at(split);
    format!("{}{i}.{f}", if negative { "-" } else { "" })
}

/// Scientific notation with `digits` significant digits, truncated: `2.62e113`.
pub fn sci_biguint(value: &BigUint, digits: usize) -> String {
    let s = value.to_string();
    if s == "0" {
        return "0".into();
    }
    let exp = s.len() - 1;
    let keep = digits.min(s.len());
    let mut mant = s[..1].to_string();
    if keep > 1 {
        mant.push('.');
        mant.push_str(&s[1..keep]);
    }
    format!("{mant}e{exp}")
}

/// `log10` of a big unsigned integer, accurate to double precision.
pub fn log10_biguint(value: &BigUint) -> f64 {
    let s = value.to_string();
    let lead = s.len().min(17);
    let mant: f64 = s[..lead].parse().unwrap_or(0.0);
    mant.log10() + (s.len() - lead) as f64
}

/// A number as it appears in reports: the exact value and a double.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Num {
    pub exact: String,
    pub value: f64,
}

impl From<&BigRational> for Num {
    fn from(x: &BigRational) -> Self {
        Num {
            exact: to_exact_string(x),
            value: to_f64(x),
        }
    }
}

impl From<BigRational> for Num {
    fn from(x: BigRational) -> Self {
        Num::from(&x)
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.exact)
    }
}

/// A big count as it appears in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub exact: String,
    pub sci: String,
    pub log10: f64,
}

impl From<&BigUint> for Count {
    fn from(x: &BigUint) -> Self {
        Count {
            exact: x.to_string(),
            sci: sci_biguint(x, 3),
            log10: log10_biguint(x),
        }
    }
}
