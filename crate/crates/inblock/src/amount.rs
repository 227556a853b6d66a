//! Exact rational quantities.
//!
//! Every monetary value in the system — fiat fees, ledger coin balances,
//! exchange rates, index values — is an exact rational. No float ever touches
//! state, so comparisons like "paid at least the required fee" carry no
//! rounding slack and replays are bit-stable. Rounding happens only at
//! presentation time ([`Amount::format_decimal`], [`Amount::format_sigfigs`]).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AmountError {
    #[error("malformed amount literal {0:?}")]
    Malformed(String),
}

/// An exact rational quantity.
///
/// The canonical textual form is an integer (`"15"`) or a reduced fraction
/// (`"3/2"`); decimal literals (`"1.03"`) are accepted on input and converted
/// exactly. Serialization always emits the canonical form, which keeps
/// snapshots byte-stable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(BigRational);

impl Amount {
    pub fn zero() -> Self {
        Amount(BigRational::zero())
    }

    pub fn from_u64(v: u64) -> Self {
        Amount(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn from_i64(v: i64) -> Self {
        Amount(BigRational::from_integer(BigInt::from(v)))
    }

    /// Exact ratio `numer / denom`. Panics if `denom == 0`.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Amount(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// `self * 2^exp` — used for fees that scale linearly with block size.
    pub fn scale_pow2(&self, exp: u32) -> Self {
        Amount(&self.0 * BigRational::from_integer(BigInt::one() << exp))
    }

    /// Exact division; `None` when the divisor is zero.
    pub fn checked_div(&self, rhs: &Amount) -> Option<Amount> {
        if rhs.0.is_zero() {
            None
        } else {
            Some(Amount(&self.0 / &rhs.0))
        }
    }

    /// Fixed-point presentation with `dp` decimal places, rounding half-up
    /// on the magnitude (so `-2.005` at two places shows `-2.01`).
    pub fn format_decimal(&self, dp: usize) -> String {
        let negative = self.0.is_negative();
        let v = self.0.abs();
        let scale = ten_pow(dp as u64);
        let scaled = v.numer() * &scale;
        let (mut q, r) = scaled.div_rem(v.denom());
        if &r * 2 >= *v.denom() {
            q += 1;
        }
        let digits = q.to_string();
        let body = if dp == 0 {
            digits
        } else if digits.len() <= dp {
            format!("0.{}{}", "0".repeat(dp - digits.len()), digits)
        } else {
            let split = digits.len() - dp;
            format!("{}.{}", &digits[..split], &digits[split..])
        };
        if negative && body.chars().any(|c| c.is_ascii_digit() && c != '0') {
            format!("-{body}")
        } else {
            body
        }
    }

    /// Presentation rounded to `figs` significant figures, half-up.
    /// `58700 / 31536000` at two figures formats as `"0.0019"`.
    pub fn format_sigfigs(&self, figs: u32) -> String {
        assert!(figs >= 1, "need at least one significant figure");
        if self.0.is_zero() {
            return "0".to_string();
        }
        let negative = self.0.is_negative();
        let v = self.0.abs();

        // Find e such that 10^e <= v < 10^(e+1).
        let mut e = v.numer().to_string().len() as i64 - v.denom().to_string().len() as i64;
        while !pow10_le(&v, e) {
            e -= 1;
        }
        while pow10_le(&v, e + 1) {
            e += 1;
        }

        // Scale v into [10^(figs-1), 10^figs) and round half-up to an integer.
        let shift = figs as i64 - 1 - e;
        let (num, den) = if shift >= 0 {
            (v.numer() * ten_pow(shift as u64), v.denom().clone())
        } else {
            (v.numer().clone(), v.denom() * ten_pow((-shift) as u64))
        };
        let (mut q, r) = num.div_rem(&den);
        if &r * 2 >= den {
            q += 1;
        }
        if q == ten_pow(figs as u64) {
            // Rounding carried into one more digit (e.g. 99.5 -> 100).
            q /= 10;
            e += 1;
        }
        let digits = q.to_string();
        debug_assert_eq!(digits.len(), figs as usize);

        let body = if e < 0 {
            format!("0.{}{}", "0".repeat((-e - 1) as usize), digits)
        } else if (e + 1) as usize >= digits.len() {
            format!("{}{}", digits, "0".repeat((e + 1) as usize - digits.len()))
        } else {
            let split = (e + 1) as usize;
            format!("{}.{}", &digits[..split], &digits[split..])
        };
        if negative {
            format!("-{body}")
        } else {
            body
        }
    }
}

fn ten_pow(k: u64) -> BigInt {
    BigInt::from(10u32).pow(k as u32)
}

/// True when `10^e <= v` for positive `v`.
fn pow10_le(v: &BigRational, e: i64) -> bool {
    if e >= 0 {
        v.numer() >= &(v.denom() * ten_pow(e as u64))
    } else {
        v.numer() * ten_pow((-e) as u64) >= *v.denom()
    }
}

impl From<u64> for Amount {
    fn from(v: u64) -> Self {
        Amount::from_u64(v)
    }
}

impl FromStr for Amount {
    type Err = AmountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AmountError::Malformed(s.to_string());
        let t = s.trim();
        if t.is_empty() {
            return Err(bad());
        }
        if let Some((n, d)) = t.split_once('/') {
            let n = BigInt::from_str(n).map_err(|_| bad())?;
            let d = BigInt::from_str(d).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(Amount(BigRational::new(n, d)));
        }
        if let Some((int, frac)) = t.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let (negative, int_digits) = match int.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, int.strip_prefix('+').unwrap_or(int)),
            };
            if int_digits.is_empty() || !int_digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let scale = ten_pow(frac.len() as u64);
            let whole = BigInt::from_str(int_digits).map_err(|_| bad())?;
            let fractional = BigInt::from_str(frac).map_err(|_| bad())?;
            let mut numer = whole * &scale + fractional;
            if negative {
                numer = -numer;
            }
            return Ok(Amount(BigRational::new(numer, scale)));
        }
        let n = BigInt::from_str(t).map_err(|_| bad())?;
        Ok(Amount(BigRational::from_integer(n)))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({self})")
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Amount> for Amount {
    type Output = Amount;
    fn add(self, rhs: &'a Amount) -> Amount {
        Amount(self.0 + &rhs.0)
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a Amount> for Amount {
    type Output = Amount;
    fn sub(self, rhs: &'a Amount) -> Amount {
        Amount(self.0 - &rhs.0)
    }
}

impl Mul for Amount {
    type Output = Amount;
    fn mul(self, rhs: Amount) -> Amount {
        Amount(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a Amount> for Amount {
    type Output = Amount;
    fn mul(self, rhs: &'a Amount) -> Amount {
        Amount(self.0 * &rhs.0)
    }
}

impl Mul<&Amount> for &Amount {
    type Output = Amount;
    fn mul(self, rhs: &Amount) -> Amount {
        Amount(&self.0 * &rhs.0)
    }
}

impl Neg for Amount {
    type Output = Amount;
    fn neg(self) -> Amount {
        Amount(-self.0)
    }
}

impl AddAssign<&Amount> for Amount {
    fn add_assign(&mut self, rhs: &Amount) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Amount> for Amount {
    fn sub_assign(&mut self, rhs: &Amount) {
        self.0 -= &rhs.0;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::zero(), |acc, x| acc + x)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(amt("1.03"), Amount::ratio(103, 100));
        assert_eq!(amt("2.0"), Amount::from_u64(2));
        assert_eq!(amt("-0.5"), Amount::ratio(-1, 2));
        assert_eq!(amt("0.0019"), Amount::ratio(19, 10_000));
    }

    #[test]
    fn canonical_form_round_trips() {
        for s in ["15", "3/2", "-7/3", "0", "12288000"] {
            assert_eq!(amt(s).to_string(), s);
            let json = serde_json::to_string(&amt(s)).unwrap();
            let back: Amount = serde_json::from_str(&json).unwrap();
            assert_eq!(back, amt(s));
        }
        // Decimal input normalizes to fraction form.
        assert_eq!(amt("1.5").to_string(), "3/2");
    }

    #[test]
    fn malformed_literals_rejected() {
        for s in ["", "abc", "1.2.3", "1/0", ".5", "1.", "--2", "1e3"] {
            assert!(Amount::from_str(s).is_err(), "accepted {s:?}");
        }
    }

    #[test]
    fn division_is_exact() {
        // $3000 at 200 fiat per coin -> exactly 15 coin.
        let coins = amt("3000").checked_div(&amt("200")).unwrap();
        assert_eq!(coins, Amount::from_u64(15));
        assert!(amt("1").checked_div(&Amount::zero()).is_none());
    }

    #[test]
    fn decimal_presentation_rounds_half_up_on_magnitude() {
        assert_eq!(amt("2.005").format_decimal(2), "2.01");
        assert_eq!(amt("-2.005").format_decimal(2), "-2.01");
        assert_eq!(amt("309").format_decimal(2), "309.00");
        assert_eq!(amt("1/3").format_decimal(2), "0.33");
        assert_eq!(amt("2/3").format_decimal(2), "0.67");
        assert_eq!(amt("-0.001").format_decimal(2), "0.00");
    }

    #[test]
    fn sigfig_presentation() {
        let throughput = amt("58700").checked_div(&amt("31536000")).unwrap();
        assert_eq!(throughput.format_sigfigs(2), "0.0019");
        assert_eq!(amt("1").format_sigfigs(2), "1.0");
        assert_eq!(amt("999.5").format_sigfigs(3), "1000");
        assert_eq!(amt("12884901888000").format_sigfigs(5), "12885000000000");
        assert_eq!(amt("0.00186").format_sigfigs(1), "0.002");
        assert_eq!(amt("-123.4").format_sigfigs(2), "-120");
        assert_eq!(Amount::zero().format_sigfigs(3), "0");
    }

    #[test]
    fn pow2_scaling() {
        assert_eq!(amt("3000").scale_pow2(12), amt("12288000"));
        assert_eq!(amt("3000").scale_pow2(32), amt("12884901888000"));
    }

    #[test]
    fn ordering_is_exact() {
        // 2.0 coin covers a 2-coin requirement with zero slack either way.
        assert!(amt("2.0") >= amt("300").checked_div(&amt("150")).unwrap());
        assert!(amt("1.999999999999") < amt("2"));
    }
}
