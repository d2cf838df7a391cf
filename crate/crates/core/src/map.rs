//! The symmetric unimodal family `f(x) = λ(1 − |2x − 1|^ℓ)` on `[0, 1]`.

use std::cmp::Ordering;

use rug::float::Round;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::real::Real;

/// Position relative to the critical point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Side::Left => -1,
            Side::Right => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// An interval with real endpoints; each endpoint may be open or closed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalR {
    pub lo: Real,
    pub hi: Real,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl IntervalR {
    /// Closed interval `[lo, hi]`; requires `lo < hi`.
    pub fn new(lo: Real, hi: Real) -> Result<IntervalR> {
        if lo.cmp_raw(&hi) != Ordering::Less {
            return Err(Error::InvalidArgument(format!(
                "interval endpoints out of order: {} >= {}",
                lo.to_decimal_digits(12),
                hi.to_decimal_digits(12)
            )));
        }
        Ok(IntervalR {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        })
    }

    /// Open interval `(lo, hi)`.
    pub fn open(lo: Real, hi: Real) -> Result<IntervalR> {
        let mut i = IntervalR::new(lo, hi)?;
        i.lo_closed = false;
        i.hi_closed = false;
        Ok(i)
    }

    /// Builds the interval spanned by two points given in either order.
    pub fn spanning(a: &Real, b: &Real) -> Result<IntervalR> {
        if a.cmp_raw(b) == Ordering::Greater {
            IntervalR::new(b.clone(), a.clone())
        } else {
            IntervalR::new(a.clone(), b.clone())
        }
    }

    /// The single point `[x, x]`, allowed only through this constructor.
    pub fn degenerate(x: Real) -> IntervalR {
        IntervalR {
            lo: x.clone(),
            hi: x,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn len(&self) -> Real {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Real {
        (&self.lo + &self.hi).mul_pow2(-1)
    }

    /// Membership, honouring open endpoints.
    pub fn contains(&self, x: &Real) -> bool {
        let lo_ok = match x.cmp_raw(&self.lo) {
            Ordering::Greater => true,
            Ordering::Equal => self.lo_closed,
            Ordering::Less => false,
        };
        let hi_ok = match x.cmp_raw(&self.hi) {
            Ordering::Less => true,
            Ordering::Equal => self.hi_closed,
            Ordering::Greater => false,
        };
        lo_ok && hi_ok
    }

    pub fn within_unit(&self) -> bool {
        self.lo.signum() >= 0 && self.hi.cmp_raw(&Real::one(64)) != Ordering::Greater
    }
}

/// `f(x) = λ(1 − |2x − 1|^ℓ)` with critical point `c = 1/2`.
///
/// All evaluations are rounded to the map's working precision, which is the
/// precision of `λ` (at least that of `ℓ`).
#[derive(Clone, Debug)]
pub struct FibMap {
    lambda: Real,
    ell: Real,
    ell_int: Option<u32>,
    c: Real,
    prec: u32,
}

impl FibMap {
    pub fn new(lambda: Real, ell: Real) -> Result<FibMap> {
        if lambda.signum() <= 0 || lambda.cmp_raw(&Real::one(64)) == Ordering::Greater {
            return Err(Error::Domain(format!(
                "lambda must lie in (0, 1], got {}",
                lambda.to_decimal_digits(12)
            )));
        }
        if ell.cmp_raw(&Real::one(64)) == Ordering::Less {
            return Err(Error::Domain(format!(
                "critical order must be at least 1, got {}",
                ell.to_decimal_digits(12)
            )));
        }
        let prec = lambda.prec().max(ell.prec());
        let lambda = lambda.with_prec(prec);
        let ell = ell.with_prec(prec);
        let ell_f = ell.to_f64();
        let ell_int = if ell.is_exact() && ell_f.fract() == 0.0 && ell_f <= 4096.0 {
            Some(ell_f as u32)
        } else {
            None
        };
        Ok(FibMap {
            lambda,
            ell,
            ell_int,
            c: Real::half(prec),
            prec,
        })
    }

    /// Convenience constructor from `f64` values at the given precision.
    pub fn from_f64(lambda: f64, ell: f64, prec: u32) -> Result<FibMap> {
        FibMap::new(Real::from_f64(lambda, prec), Real::from_f64(ell, prec))
    }

    /// Same map evaluated at a different working precision.
    pub fn with_precision(&self, bits: u32) -> FibMap {
        let mut m =
            FibMap::new(self.lambda.with_prec(bits), self.ell.with_prec(bits)).expect("parameters already validated");
        if self.lambda.prec() > bits {
            m.lambda = self.lambda.with_prec(bits);
        }
        m
    }

    pub fn lambda(&self) -> &Real {
        &self.lambda
    }

    pub fn ell(&self) -> &Real {
        &self.ell
    }

    pub fn ell_f64(&self) -> f64 {
        self.ell.to_f64()
    }

    pub fn critical_point(&self) -> &Real {
        &self.c
    }

    pub fn critical_value(&self) -> &Real {
        &self.lambda
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    fn check_domain(&self, x: &Real) -> Result<()> {
        if x.signum() < 0 || x.cmp_raw(&Real::one(64)) == Ordering::Greater {
            return Err(Error::Domain(format!(
                "x = {} is outside [0, 1]",
                x.to_decimal_digits(20)
            )));
        }
        Ok(())
    }

    /// `2x − 1` rounded once to the working precision.
    fn centered(&self, x: &Real) -> Real {
        let (v, ord) = Float::with_val_round(self.prec, x.mul_pow2(1).as_float() - 1i32, Round::Nearest);
        Real::from_float(v, x.is_exact() && ord == Ordering::Equal)
    }

    fn power(&self, w: &Real) -> Real {
        match self.ell_int {
            Some(k) => w.powi(k),
            None => w.pow(&self.ell),
        }
    }

    fn power_minus(&self, w: &Real, shift: u32) -> Real {
        match self.ell_int {
            Some(k) if k >= shift => w.powi(k - shift),
            _ => w.pow(&(&self.ell - shift as i32)),
        }
    }

    /// `f(x)`.
    pub fn eval(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        let w = self.centered(x).abs();
        let one = Real::one(self.prec);
        Ok(&self.lambda * &(&one - &self.power(&w)))
    }

    /// `|f(x) − f(c)| = λ|2x − 1|^ℓ`, computed without cancellation.
    pub fn critical_gap(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        let w = self.centered(x).abs();
        Ok(&self.lambda * &self.power(&w))
    }

    /// `Df(x) = −2λℓ·sign(2x − 1)·|2x − 1|^(ℓ−1)`.
    pub fn deriv(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        let t = self.centered(x);
        if t.is_zero() {
            if self.ell_int == Some(1) {
                return Err(Error::SingularPoint(
                    "derivative undefined at the critical point for order 1".into(),
                ));
            }
            return Ok(Real::zero(self.prec));
        }
        let w = t.abs();
        let mag = &(&self.lambda * &self.ell).mul_pow2(1) * &self.power_minus(&w, 1);
        Ok(if t.signum() > 0 { -mag } else { mag })
    }

    /// Schwarzian derivative `f'''/f' − (3/2)(f''/f')²`.
    pub fn schwarzian(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        let t = self.centered(x);
        if t.is_zero() {
            return Err(Error::SingularPoint("Schwarzian is singular at c".into()));
        }
        let w = t.abs();
        let s = t.signum();
        let ell = &self.ell;
        let l1 = ell - 1;
        let l2 = ell - 2;
        let lam_ell = &self.lambda * ell;
        let mut d1 = lam_ell.mul_pow2(1) * &self.power_minus(&w, 1);
        let d2 = -((&lam_ell * &l1).mul_pow2(2) * &self.power_minus(&w, 2));
        let mut d3 = (&(&lam_ell * &l1) * &l2).mul_pow2(3) * &self.power_minus(&w, 3);
        if s > 0 {
            d1 = -d1;
            d3 = -d3;
        }
        let q = &d2 / &d1;
        let three_halves = Real::ratio(3, 2, self.prec);
        Ok(&(&d3 / &d1) - &(&three_halves * &(&q * &q)))
    }

    /// `f^n(x)`.
    pub fn iterate(&self, x: &Real, n: usize) -> Result<Real> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.eval(&y)?;
        }
        Ok(y)
    }

    /// The orbit `x, f(x), …, f^n(x)`.
    pub fn orbit(&self, x: &Real, n: usize) -> Result<Vec<Real>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(x.clone());
        for i in 0..n {
            let next = self.eval(&out[i])?;
            out.push(next);
        }
        Ok(out)
    }

    /// The critical orbit `c_0 = c, c_1, …, c_n`.
    pub fn critical_orbit(&self, n: usize) -> Result<Vec<Real>> {
        self.orbit(&self.c, n)
    }

    /// The symmetric point `1 − x`, computed exactly.
    pub fn hat(&self, x: &Real) -> Real {
        let extra = match x.as_float().get_exp() {
            Some(e) if e < 0 => (-e) as u32,
            _ => 0,
        };
        let p = x.prec() + extra + 2;
        let (v, ord) = Float::with_val_round(p, 1i32 - x.as_float(), Round::Nearest);
        Real::from_float(v, x.is_exact() && ord == Ordering::Equal)
    }

    /// Side of `x` relative to `c`; points inside the noise band of `c` are a precision failure.
    pub fn side(&self, x: &Real) -> Result<Side> {
        match x.cmp_checked(&self.c) {
            Ok(Ordering::Less) => Ok(Side::Left),
            Ok(Ordering::Greater) => Ok(Side::Right),
            Ok(Ordering::Equal) => Err(Error::precision(
                x.prec(),
                "orbit point coincides with the critical point",
            )),
            Err(e) => Err(e),
        }
    }

    /// The preimage of `target` on the given side of `c` (closed form).
    pub fn inverse(&self, target: &Real, side: Side) -> Result<Real> {
        if target.signum() < 0 || target.cmp_raw(&self.lambda) == Ordering::Greater {
            return Err(Error::NoRoot(format!(
                "{} is outside the range [0, lambda]",
                target.to_decimal_digits(20)
            )));
        }
        let gap = &(&self.lambda - target) / &self.lambda;
        let root = match self.ell_int {
            Some(1) => gap,
            Some(2) => gap.sqrt(),
            Some(k) => {
                let (v, ord) = Float::with_val_round(self.prec, gap.as_float().root_ref(k), Round::Nearest);
                Real::from_float(v, gap.is_exact() && ord == Ordering::Equal)
            }
            None => gap.pow(&self.ell.recip()),
        };
        let half = root.mul_pow2(-1);
        Ok(match side {
            Side::Left => &self.c - &half,
            Side::Right => &self.c + &half,
        })
    }

    /// The unique `y` in a monotone branch with `f(y) = target`.
    pub fn pullback_branch(&self, target: &Real, branch: &IntervalR) -> Result<Real> {
        if !branch.within_unit() {
            return Err(Error::Domain("branch must lie inside [0, 1]".into()));
        }
        let lo_side = branch.lo.cmp_raw(&self.c);
        let hi_side = branch.hi.cmp_raw(&self.c);
        if lo_side == Ordering::Less && hi_side == Ordering::Greater {
            return Err(Error::NonMonotone("branch straddles the critical point".into()));
        }
        let side = if hi_side != Ordering::Greater {
            Side::Left
        } else {
            Side::Right
        };
        let f_lo = self.eval(&branch.lo)?;
        let f_hi = self.eval(&branch.hi)?;
        let (small, small_closed, big, big_closed) = match side {
            Side::Left => (f_lo, branch.lo_closed, f_hi, branch.hi_closed),
            Side::Right => (f_hi, branch.hi_closed, f_lo, branch.lo_closed),
        };
        let below = match target.cmp_raw(&small) {
            Ordering::Less => true,
            Ordering::Equal => !small_closed,
            Ordering::Greater => false,
        };
        let above = match target.cmp_raw(&big) {
            Ordering::Greater => true,
            Ordering::Equal => !big_closed,
            Ordering::Less => false,
        };
        if below || above {
            return Err(Error::NoRoot(format!(
                "{} is not in the image of the branch",
                target.to_decimal_digits(20)
            )));
        }
        let y = self.inverse(target, side)?;
        if branch.contains(&y) {
            return Ok(y);
        }
        let tol = self.pullback_tolerance(&y);
        let nearest = if y.cmp_raw(&branch.lo) == Ordering::Less {
            &branch.lo
        } else {
            &branch.hi
        };
        let miss = (&y - nearest).abs();
        if miss.cmp_raw(&tol) != Ordering::Greater {
            return Ok(nearest.clone());
        }
        self.bisect_preimage(target, branch, side)
    }

    fn pullback_tolerance(&self, y: &Real) -> Real {
        let scale = y.abs().max(&Real::from_f64(f64::MIN_POSITIVE, self.prec));
        scale.mul_pow2(-(self.prec as i32) + 16)
    }

    /// Plain bisection for `f(y) = target` on a monotone branch.
    pub fn bisect_preimage(&self, target: &Real, branch: &IntervalR, side: Side) -> Result<Real> {
        let increasing = side == Side::Left;
        let mut lo = branch.lo.clone();
        let mut hi = branch.hi.clone();
        for _ in 0..(self.prec + 8) {
            let mid = (&lo + &hi).mul_pow2(-1);
            let v = self.eval(&mid)?;
            let go_right = (v.cmp_raw(target) == Ordering::Less) == increasing;
            if go_right {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((&lo + &hi).mul_pow2(-1))
    }

    /// The orientation-reversing fixed point in `(c, 1]`.
    pub fn reversing_fixed_point(&self) -> Result<Real> {
        let mut lo = self.c.clone();
        let mut hi = Real::one(self.prec);
        for _ in 0..(self.prec + 8) {
            let mid = (&lo + &hi).mul_pow2(-1);
            let g = &self.eval(&mid)? - &mid;
            if g.signum() > 0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((&lo + &hi).mul_pow2(-1))
    }
}
