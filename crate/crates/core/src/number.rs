//! Exact rational numbers for gold answers and graded model output.
//!
//! Gold answers are stored as reduced integer fractions rather than floats so
//! that grading is reproducible bit-for-bit: `18`, `70000`, and `12.5` all
//! have exactly one canonical value, and equality is integer equality.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational: reduced numerator/denominator with positive denominator.
///
/// Construct via [`CanonicalNumber::from_integer`], [`CanonicalNumber::new`],
/// or [`CanonicalNumber::normalize`]; render back to text via
/// [`CanonicalNumber::render`]. Normalization is idempotent:
/// `normalize(render(x)) == x` for every value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalNumber {
    num: i128,
    den: i128,
}

impl CanonicalNumber {
    pub fn from_integer(n: i128) -> CanonicalNumber {
        CanonicalNumber { num: n, den: 1 }
    }

    /// Build `num/den` in lowest terms. Errors if `den == 0`.
    pub fn new(num: i128, den: i128) -> Result<CanonicalNumber> {
        if den == 0 {
            return Err(Error::data("number has zero denominator"));
        }
        let sign = if (num < 0) != (den < 0) { -1 } else { 1 };
        let (num, den) = (num.unsigned_abs(), den.unsigned_abs());
        let g = gcd(num, den);
        let num = i128::try_from(num / g).map_err(|_| Error::data("numerator out of range"))?;
        let den = i128::try_from(den / g).map_err(|_| Error::data("denominator out of range"))?;
        Ok(CanonicalNumber {
            num: sign * num,
            den,
        })
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn denominator(&self) -> i128 {
        self.den
    }

    /// Parse a human-written number into canonical form.
    ///
    /// Strips `$`, `,`, `%`, and surrounding whitespace, then accepts an
    /// integer (`-42`), a decimal (`12.50`), or a fraction (`25/2`).
    pub fn normalize(raw: &str) -> Result<CanonicalNumber> {
        let cleaned: String = raw
            .trim()
            .chars()
            .filter(|c| !matches!(c, '$' | ',' | '%'))
            .collect();
        let cleaned = cleaned.trim();
        if cleaned.is_empty() {
            return Err(Error::data(format!("cannot parse number from {raw:?}")));
        }

        if let Some((n, d)) = cleaned.split_once('/') {
            let num = parse_signed_integer(n.trim())
                .ok_or_else(|| Error::data(format!("cannot parse number from {raw:?}")))?;
            let den = parse_signed_integer(d.trim())
                .ok_or_else(|| Error::data(format!("cannot parse number from {raw:?}")))?;
            if den == 0 {
                return Err(Error::data(format!("zero denominator in {raw:?}")));
            }
            return CanonicalNumber::new(num, den);
        }

        parse_decimal(cleaned)
            .ok_or_else(|| Error::data(format!("cannot parse number from {raw:?}")))
    }

    /// Render the canonical textual form.
    ///
    /// Integers render bare (`18`); denominators of the form 2^a·5^b render
    /// as exact decimals with trailing zeros trimmed (`25/2` → `12.5`);
    /// anything else renders as a fraction (`1/3`).
    pub fn render(&self) -> String {
        if self.den == 1 {
            return self.num.to_string();
        }
        if let Some(k) = decimal_scale(self.den) {
            if let Some(s) = self.render_decimal(k) {
                return s;
            }
        }
        format!("{}/{}", self.num, self.den)
    }

    fn render_decimal(&self, k: u32) -> Option<String> {
        let pow = 10i128.checked_pow(k)?;
        let scaled = self.num.unsigned_abs().checked_mul(pow as u128)? / self.den as u128;
        let int_part = scaled / pow as u128;
        let mut frac = format!("{:0width$}", scaled % pow as u128, width = k as usize);
        while frac.ends_with('0') {
            frac.pop();
        }
        let sign = if self.num < 0 { "-" } else { "" };
        Some(format!("{sign}{int_part}.{frac}"))
    }

    /// Exact equality, or |self − other| ≤ tolerance when a positive
    /// tolerance is supplied.
    pub fn approx_eq(&self, other: &CanonicalNumber, tolerance: f64) -> bool {
        if self == other {
            return true;
        }
        tolerance > 0.0 && (self.to_f64() - other.to_f64()).abs() <= tolerance
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for CanonicalNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for CanonicalNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for CanonicalNumber {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<CanonicalNumber, D::Error> {
        // Accept either a JSON string ("12.5") or a bare JSON number (12.5);
        // numbers go through their shortest decimal rendering.
        let v = serde_json::Value::deserialize(deserializer)?;
        let text = match &v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(D::Error::custom(format!(
                    "expected number or numeric string, got {other}"
                )))
            }
        };
        CanonicalNumber::normalize(&text).map_err(D::Error::custom)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// If `den` is 2^a·5^b, the number renders exactly with max(a, b) decimals.
fn decimal_scale(den: i128) -> Option<u32> {
    let mut d = den;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    (d == 1).then_some(twos.max(fives))
}

fn parse_signed_integer(s: &str) -> Option<i128> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut value: i128 = 0;
    for b in digits.bytes() {
        value = value.checked_mul(10)?.checked_add((b - b'0') as i128)?;
    }
    Some(if neg { -value } else { value })
}

fn parse_decimal(s: &str) -> Option<CanonicalNumber> {
    let (neg, rest) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all_digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return None;
    }

    let mut num: i128 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        num = num.checked_mul(10)?.checked_add((b - b'0') as i128)?;
    }
    let den = 10i128.checked_pow(frac_part.len() as u32)?;
    if neg {
        num = -num;
    }
    CanonicalNumber::new(num, den).ok()
}
