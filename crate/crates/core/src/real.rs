//! Extended-precision reals backed by MPFR.
//!
//! A [`Real`] carries its own precision and a flag recording whether the
//! value is known to be exact, i.e. no rounding happened anywhere in the
//! computation that produced it. Exact values compare exactly; rounded values
//! refuse to decide comparisons that fall inside the rounding noise.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Smallest precision any [`Real`] is allowed to have.
pub const MIN_PRECISION: u32 = 64;
/// Default starting precision for orbit computations.
pub const DEFAULT_PRECISION: u32 = 256;
/// Default ceiling for precision escalation.
pub const DEFAULT_PRECISION_CAP: u32 = 16384;
/// Environment variable overriding the precision cap.
pub const PRECISION_CAP_ENV: &str = "FIBWALK_PRECISION_CAP";

fn clamp_prec(prec: u32) -> u32 {
    prec.max(MIN_PRECISION)
}

#[derive(Clone)]
pub struct Real {
    v: Float,
    exact: bool,
}

impl Real {
    fn rounded((v, ord): (Float, Ordering), exact_inputs: bool) -> Real {
        Real {
            v,
            exact: exact_inputs && ord == Ordering::Equal,
        }
    }

    pub fn from_f64(value: f64, prec: u32) -> Real {
        let p = clamp_prec(prec);
        Real::rounded(Float::with_val_round(p, value, Round::Nearest), true)
    }

    pub fn from_i64(value: i64, prec: u32) -> Real {
        let p = clamp_prec(prec);
        Real::rounded(Float::with_val_round(p, value, Round::Nearest), true)
    }

    /// `num / den`, rounded once.
    pub fn ratio(num: i64, den: i64, prec: u32) -> Real {
        Real::from_i64(num, prec) / Real::from_i64(den, prec)
    }

    pub fn zero(prec: u32) -> Real {
        Real::from_i64(0, prec)
    }

    pub fn one(prec: u32) -> Real {
        Real::from_i64(1, prec)
    }

    pub fn half(prec: u32) -> Real {
        Real::from_f64(0.5, prec)
    }

    /// Parses a decimal (or scientific) literal, rounding to `prec` bits.
    pub fn parse(text: &str, prec: u32) -> Result<Real> {
        let p = clamp_prec(prec);
        let incomplete = Float::parse(text.trim())
            .map_err(|e| Error::InvalidArgument(format!("cannot parse {text:?} as a real: {e}")))?;
        let (v, ord) = Float::with_val_round(p, incomplete, Round::Nearest);
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{text:?} is not finite")));
        }
        Ok(Real {
            v,
            exact: ord == Ordering::Equal,
        })
    }

    pub fn from_float(v: Float, exact: bool) -> Real {
        let mut v = v;
        if v.prec() < MIN_PRECISION {
            v.set_prec(MIN_PRECISION);
        }
        Real { v, exact }
    }

    pub fn prec(&self) -> u32 {
        self.v.prec()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Marks the value as carrying rounding error even if none was observed.
    pub fn inexact(mut self) -> Real {
        self.exact = false;
        self
    }

    pub fn as_float(&self) -> &Float {
        &self.v
    }

    /// Rounds (or widens) to `prec` bits.
    pub fn with_prec(&self, prec: u32) -> Real {
        let p = clamp_prec(prec);
        Real::rounded(Float::with_val_round(p, &self.v, Round::Nearest), self.exact)
    }

    pub fn to_f64(&self) -> f64 {
        self.v.to_f64()
    }

    /// Shortest decimal string that reads back to the same value at this precision.
    pub fn to_decimal(&self) -> String {
        self.v.to_string_radix(10, None)
    }

    /// Decimal string with `digits` significant digits.
    pub fn to_decimal_digits(&self, digits: usize) -> String {
        self.v.to_string_radix(10, Some(digits.max(1)))
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.v.is_sign_negative() && !self.v.is_zero()
    }

    /// -1, 0 or 1.
    pub fn signum(&self) -> i32 {
        match self.v.cmp0() {
            Some(Ordering::Less) => -1,
            Some(Ordering::Greater) => 1,
            _ => 0,
        }
    }

    pub fn abs(&self) -> Real {
        Real {
            v: Float::with_val(self.prec(), &*self.v.as_abs()),
            exact: self.exact,
        }
    }

    /// Multiplies by `2^k`, which never rounds.
    pub fn mul_pow2(&self, k: i32) -> Real {
        let mut v = self.v.clone();
        if k >= 0 {
            v <<= k as u32;
        } else {
            v >>= (-k) as u32;
        }
        Real { v, exact: self.exact }
    }

    pub fn sqrt(&self) -> Real {
        let p = self.prec();
        Real::rounded(Float::with_val_round(p, self.v.sqrt_ref(), Round::Nearest), self.exact)
    }

    pub fn ln(&self) -> Real {
        let p = self.prec();
        Real::rounded(Float::with_val_round(p, self.v.ln_ref(), Round::Nearest), self.exact)
    }

    pub fn exp(&self) -> Real {
        let p = self.prec();
        Real::rounded(Float::with_val_round(p, self.v.exp_ref(), Round::Nearest), self.exact)
    }

    pub fn recip(&self) -> Real {
        let p = self.prec();
        Real::rounded(Float::with_val_round(p, self.v.recip_ref(), Round::Nearest), self.exact)
    }

    /// `self^e` at the larger of the two precisions.
    pub fn pow(&self, e: &Real) -> Real {
        let p = self.prec().max(e.prec());
        Real::rounded(
            Float::with_val_round(p, (&self.v).pow(&e.v), Round::Nearest),
            self.exact && e.exact,
        )
    }

    pub fn powi(&self, e: u32) -> Real {
        let p = self.prec();
        Real::rounded(Float::with_val_round(p, (&self.v).pow(e), Round::Nearest), self.exact)
    }

    pub fn min(&self, other: &Real) -> Real {
        if self.v <= other.v {
            self.clone()
        } else {
            other.clone()
        }
    }

    pub fn max(&self, other: &Real) -> Real {
        if self.v >= other.v {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Plain numeric comparison with no noise check.
    pub fn cmp_raw(&self, other: &Real) -> Ordering {
        self.v.partial_cmp(&other.v).unwrap_or(Ordering::Equal)
    }

    /// Width of the noise band used by [`Real::cmp_checked`], relative to the magnitude.
    pub fn noise_bits(prec: u32) -> i32 {
        -(prec as i32) + 8
    }

    /// Compares two values, refusing to decide when the difference is below
    /// `2^(-prec+8)` of their magnitude unless both values are exact.
    pub fn cmp_checked(&self, other: &Real) -> Result<Ordering> {
        if self.exact && other.exact {
            return Ok(self.cmp_raw(other));
        }
        let p = self.prec().max(other.prec());
        let diff = Float::with_val(p + 2, &self.v - &other.v);
        let mag = if self.v.cmp_abs(&other.v) == Some(Ordering::Less) {
            Float::with_val(p, &*other.v.as_abs())
        } else {
            Float::with_val(p, &*self.v.as_abs())
        };
        let mut threshold = mag;
        let shift = Real::noise_bits(p);
        threshold <<= shift;
        if diff.is_zero() || diff.cmp_abs(&threshold) != Some(Ordering::Greater) {
            return Err(Error::precision(
                p,
                format!(
                    "comparison of {} and {} is inside the rounding noise",
                    self.to_decimal_digits(12),
                    other.to_decimal_digits(12)
                ),
            ));
        }
        Ok(diff.cmp0().unwrap_or(Ordering::Equal))
    }

    /// Relative distance `|a - b| / max(|a|, |b|)` as an f64 (0 when both vanish).
    pub fn rel_diff(&self, other: &Real) -> f64 {
        let d = (self - other).abs();
        let m = self.abs().max(&other.abs());
        if m.is_zero() {
            return 0.0;
        }
        (&d / &m).to_f64()
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Real) -> bool {
        self.v == other.v
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Real) -> Option<Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({}, {} bits", self.to_decimal_digits(20), self.prec())?;
        if self.exact {
            write!(f, ", exact")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal())
    }
}

macro_rules! real_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                let p = self.prec().max(rhs.prec());
                Real::rounded(Float::with_val_round(p, &self.v $op &rhs.v, Round::Nearest),
                    self.exact && rhs.exact,
                )
            }
        }
        impl $trait<Real> for Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                &self $op &rhs
            }
        }
        impl $trait<&Real> for Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                &self $op rhs
            }
        }
        impl $trait<Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                self $op &rhs
            }
        }
        impl $trait<i32> for &Real {
            type Output = Real;
            fn $method(self, rhs: i32) -> Real {
                let p = self.prec();
                Real::rounded(Float::with_val_round(p, &self.v $op rhs, Round::Nearest),
                    self.exact,
                )
            }
        }
        impl $trait<i32> for Real {
            type Output = Real;
            fn $method(self, rhs: i32) -> Real {
                &self $op rhs
            }
        }
    };
}

real_binop!(Add, add, +);
real_binop!(Sub, sub, -);
real_binop!(Mul, mul, *);
real_binop!(Div, div, /);

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real {
            v: Float::with_val(self.prec(), -&self.v),
            exact: self.exact,
        }
    }
}

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        -&self
    }
}

/// Start precision and ceiling for the retry-with-doubled-precision policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PrecisionPolicy {
    pub start_bits: u32,
    pub cap_bits: u32,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            start_bits: DEFAULT_PRECISION,
            cap_bits: DEFAULT_PRECISION_CAP,
        }
    }
}

impl PrecisionPolicy {
    pub fn new(start_bits: u32, cap_bits: u32) -> Self {
        let start_bits = clamp_prec(start_bits);
        PrecisionPolicy {
            start_bits,
            cap_bits: cap_bits.max(start_bits),
        }
    }

    /// Default policy with the cap taken from `FIBWALK_PRECISION_CAP` when set.
    pub fn from_env() -> Result<Self> {
        let mut policy = PrecisionPolicy::default();
        if let Ok(raw) = std::env::var(PRECISION_CAP_ENV) {
            let cap: u32 = raw
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{PRECISION_CAP_ENV}={raw:?} is not a bit count")))?;
            policy = PrecisionPolicy::new(policy.start_bits.min(cap), cap);
        }
        Ok(policy)
    }

    /// Runs `op` at the start precision, doubling on precision failures until the cap.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T>) -> Result<T> {
        let mut bits = self.start_bits;
        loop {
            match op(bits) {
                Err(e) if e.is_precision() && bits < self.cap_bits => {
                    bits = (bits.saturating_mul(2)).min(self.cap_bits);
                }
                other => return other,
            }
        }
    }
}
