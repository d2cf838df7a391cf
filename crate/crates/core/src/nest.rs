//! Closest-return geometry of a solved map and the numerical scaling inequalities.

use std::cmp::Ordering;

use serde::Serialize;

use crate::combinatorics::{fibonacci_times, is_fibonacci_to_depth, CuttingTimes};
use crate::error::{Error, Result};
use crate::map::{FibMap, Side};
use crate::real::Real;

/// Per-level geometry. Distances with an `_f` suffix are measured from `c^f = f(c)`.
#[derive(Clone, Debug, Serialize)]
pub struct NestLevel {
    pub n: usize,
    #[serde(rename = "S_n")]
    pub s_n: usize,
    pub side: Side,
    pub d: Real,
    pub z: Real,
    pub z_f: Real,
    pub u: Real,
    pub u_f: Real,
    pub y: Option<Real>,
    pub t_f: Option<Real>,
    pub dist_d: Real,
    pub dist_d_f: Real,
    pub dist_u: Real,
    pub dist_u_f: Real,
    pub dist_z_f: Real,
    pub dist_y_f: Option<Real>,
}

/// Levels `0..=K` together with the stored critical orbit they were built from.
#[derive(Clone, Debug)]
pub struct Nest {
    pub depth: usize,
    pub times: CuttingTimes,
    pub orbit: Vec<Real>,
    pub sides: Vec<Option<Side>>,
    pub fixed_point: Real,
    pub levels: Vec<NestLevel>,
}

fn identity_tolerance(prec: u32) -> Real {
    Real::one(prec).mul_pow2(-((prec / 2) as i32))
}

fn close_to(a: &Real, b: &Real, prec: u32) -> bool {
    let scale = a
        .abs()
        .max(&b.abs())
        .max(&Real::one(prec).mul_pow2(-((prec / 2) as i32)));
    let diff = (a - b).abs();
    diff.cmp_raw(&(&scale * &identity_tolerance(prec))) != Ordering::Greater
}

impl Nest {
    /// Pulls `x`, which shadows `c_{from}`, back along the critical orbit to a point shadowing `c_{to}`.
    fn pull_back(&self, f: &FibMap, x: &Real, from: usize, to: usize) -> Result<Real> {
        let mut y = x.clone();
        for i in (to..from).rev() {
            let side =
                self.sides[i].ok_or_else(|| Error::BranchIdentification(format!("no side recorded for c_{i}")))?;
            y = f.inverse(&y, side).map_err(|e| match e {
                Error::NoRoot(msg) => Error::BranchIdentification(format!(
                    "pullback along the critical orbit left the range at step {i}: {msg}"
                )),
                other => other,
            })?;
        }
        Ok(y)
    }

    pub fn level(&self, n: usize) -> Result<&NestLevel> {
        self.levels
            .get(n)
            .ok_or_else(|| Error::OutOfDepth(format!("level {n} beyond depth {}", self.depth)))
    }

    /// `|Df^len(c_start)|` by the chain rule along the stored orbit.
    pub fn orbit_derivative(&self, f: &FibMap, start: usize, len: usize) -> Result<Real> {
        if start + len > self.orbit.len() {
            return Err(Error::OutOfDepth(format!(
                "derivative needs c_{} but the orbit stops at c_{}",
                start + len - 1,
                self.orbit.len() - 1
            )));
        }
        let mut acc = Real::one(f.prec());
        for x in &self.orbit[start..start + len] {
            acc = &acc * &f.deriv(x)?.abs();
        }
        Ok(acc)
    }
}

/// Builds `d_n, z_n, u_n, y_n, t_n^f` for `n = 0..=K`.
pub fn build_nest(f: &FibMap, k: usize) -> Result<Nest> {
    let verdict = is_fibonacci_to_depth(f, k)?;
    if !verdict.ok {
        return Err(Error::Precondition(format!(
            "map is not Fibonacci to depth {k}: {verdict:?}"
        )));
    }
    let prec = f.prec();
    let times = fibonacci_times(k + 1)?;
    let orbit_len = times.get(k + 1);
    let orbit = f.critical_orbit(orbit_len)?;
    let mut sides = vec![None];
    for x in &orbit[1..] {
        sides.push(Some(f.side(x)?));
    }
    let c = f.critical_point().clone();
    let fixed_point = f.reversing_fixed_point()?;
    let mut nest = Nest {
        depth: k,
        times: times.clone(),
        orbit,
        sides,
        fixed_point: fixed_point.clone(),
        levels: Vec::with_capacity(k + 1),
    };

    let mut u_f_prev = fixed_point.clone();
    for n in 0..=k {
        let s_n = times.get(n);
        let d = nest.orbit[s_n].clone();
        let side = nest.sides[s_n].expect("orbit sides start at index 1");
        let next_side = nest.sides[times.get(n + 1)].expect("orbit sides start at index 1");

        let z_f = nest.pull_back(f, &c, s_n, 1)?;
        let z = f.inverse(&z_f, next_side)?;
        let back = f.iterate(&z, s_n)?;
        if !close_to(&back, &c, prec) {
            return Err(Error::BranchIdentification(format!(
                "f^S_{n}(z_{n}) misses c by {}",
                (&back - &c).abs().to_decimal_digits(6)
            )));
        }

        let (u, u_f) = if n == 0 {
            (fixed_point.clone(), fixed_point.clone())
        } else {
            let s_prev = times.get(n - 1);
            let u_f = nest.pull_back(f, &u_f_prev, s_prev + 1, 1)?;
            (f.inverse(&u_f, side)?, u_f)
        };
        u_f_prev = u_f.clone();

        let t_f = if n >= 4 {
            let j = s_n - 1 - times.get(n - 4);
            let t_f = nest.pull_back(f, &c, 1 + j, 1)?;
            let image = f.iterate(&t_f, s_n - 1)?;
            if !close_to(&image, &nest.orbit[times.get(n - 4)], prec) {
                return Err(Error::BranchIdentification(format!(
                    "f^(S_{n}-1)(t_{n}^f) does not land on d_{}",
                    n - 4
                )));
            }
            verify_monotone(f, &z_f, &t_f, s_n - 1)?;
            Some(t_f)
        } else {
            None
        };

        let y = if n + 2 <= k + 1 {
            nest.orbit.get(times.get(n + 2).saturating_add(s_n)).cloned()
        } else {
            None
        };
        let y = if n + 2 <= k { y } else { None };
        let dist_y_f = match &y {
            Some(y) => Some(f.critical_gap(y)?),
            None => None,
        };

        nest.levels.push(NestLevel {
            n,
            s_n,
            side,
            dist_d: (&d - &c).abs(),
            dist_d_f: f.critical_gap(&d)?,
            dist_u: (&u - &c).abs(),
            dist_u_f: f.critical_gap(&u)?,
            dist_z_f: (&z_f - f.critical_value()).abs(),
            dist_y_f,
            d,
            z,
            z_f,
            u,
            u_f,
            y,
            t_f,
        });
    }
    Ok(nest)
}

/// Checks that no image `f^i((a, b))`, `i < n`, has `c` strictly inside.
fn verify_monotone(f: &FibMap, a: &Real, b: &Real, n: usize) -> Result<()> {
    let c = f.critical_point();
    let tol = identity_tolerance(f.prec());
    let side_of = |x: &Real| -> i32 {
        let d = x - c;
        if d.abs().cmp_raw(&tol) != Ordering::Greater {
            0
        } else {
            d.signum()
        }
    };
    let mut x = a.clone();
    let mut y = b.clone();
    for i in 0..n {
        if side_of(&x) * side_of(&y) < 0 {
            return Err(Error::BranchIdentification(format!(
                "image {i} of the branch straddles the critical point"
            )));
        }
        x = f.eval(&x)?;
        y = f.eval(&y)?;
    }
    Ok(())
}

/// `max d^f_k / d^f_{k+1}` over `n − N0 ≤ k < n`.
pub fn rho_of(dists: &[Real], n: usize, n0: usize) -> Result<Real> {
    if n0 == 0 || n0 > 10 {
        return Err(Error::InvalidArgument(format!("window length {n0} not in 1..=10")));
    }
    if n < n0 || n >= dists.len() {
        return Err(Error::OutOfDepth(format!(
            "window [{}, {n}) outside computed levels 0..{}",
            n as isize - n0 as isize,
            dists.len()
        )));
    }
    let mut best: Option<Real> = None;
    for k in n - n0..n {
        let r = &dists[k] / &dists[k + 1];
        best = Some(match best {
            Some(b) => b.max(&r),
            None => r,
        });
    }
    Ok(best.expect("window is non-empty"))
}

fn d_f(levels: &[NestLevel]) -> Vec<Real> {
    levels.iter().map(|l| l.dist_d_f.clone()).collect()
}

pub fn rho(levels: &[NestLevel], n: usize, n0: usize) -> Result<Real> {
    rho_of(&d_f(levels), n, n0)
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaCheck {
    pub n: usize,
    pub value: Real,
    pub pass: bool,
    pub ln_ratio: Option<Real>,
    pub ln_pass: Option<bool>,
}

pub const LAMBDA_BOUND: f64 = 3.85;
pub const LN_RATIO_BOUND: f64 = 2.7;

/// `λ^f_n = d^f_{n−2}/d^f_n > 3.85`, with `ln(d^f_{n−4}/d^f_n) > 2.7` for `n ≥ 4`.
pub fn lambda_check(levels: &[NestLevel], n: usize) -> Result<LambdaCheck> {
    if n < 2 || n >= levels.len() {
        return Err(Error::OutOfDepth(format!("lambda check needs 2 <= n <= K, got {n}")));
    }
    let prec = levels[n].dist_d_f.prec();
    let value = &levels[n - 2].dist_d_f / &levels[n].dist_d_f;
    let pass = value.cmp_raw(&Real::from_f64(LAMBDA_BOUND, prec)) == Ordering::Greater;
    let (ln_ratio, ln_pass) = if n >= 4 {
        let r = (&levels[n - 4].dist_d_f / &levels[n].dist_d_f).ln();
        let ok = r.cmp_raw(&Real::from_f64(LN_RATIO_BOUND, prec)) == Ordering::Greater;
        (Some(r), Some(ok))
    } else {
        (None, None)
    };
    Ok(LambdaCheck {
        n,
        value,
        pass,
        ln_ratio,
        ln_pass,
    })
}

/// Smallest `n ≥ 4` from which both parts of [`lambda_check`] hold up to the depth.
pub fn lambda_threshold(levels: &[NestLevel]) -> Result<Option<usize>> {
    let mut threshold = None;
    for n in (4..levels.len()).rev() {
        let chk = lambda_check(levels, n)?;
        if chk.pass && chk.ln_pass == Some(true) {
            threshold = Some(n);
        } else {
            break;
        }
    }
    Ok(threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
    Lower,
}

/// One numerically evaluated inequality; `margin ≥ 1` means it holds.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityRow {
    pub name: String,
    pub n: usize,
    pub kind: BoundKind,
    pub lhs: Real,
    pub rhs: Real,
    pub margin: Real,
    pub pass: bool,
    pub precondition: bool,
}

impl InequalityRow {
    fn new(name: &str, n: usize, kind: BoundKind, lhs: Real, rhs: Real) -> InequalityRow {
        let margin = match kind {
            BoundKind::Upper => &rhs / &lhs,
            BoundKind::Lower => &lhs / &rhs,
        };
        let pass = margin.cmp_raw(&Real::one(64)) != Ordering::Less;
        InequalityRow {
            name: name.to_string(),
            n,
            kind,
            lhs,
            rhs,
            margin,
            pass,
            precondition: true,
        }
    }

    fn with_precondition(mut self, ok: bool) -> InequalityRow {
        self.precondition = ok;
        self
    }
}

fn ell_pow(rho: &Real, num: i64, f: &FibMap) -> Real {
    rho.pow(&(&Real::from_i64(num, f.prec()) / f.ell()))
}

fn inside_z(nest: &Nest, a: &Real, n: usize, f: &FibMap) -> bool {
    let c = f.critical_point();
    (a - c).abs().cmp_raw(&(&nest.levels[n].z - c).abs()) == Ordering::Less
}

/// Two-step derivative estimates: the central cone bounds, the return-derivative
/// bound and the general two-step bound with its windowed specialisations.
pub fn two_step_checks(f: &FibMap, nest: &Nest) -> Result<Vec<InequalityRow>> {
    if nest.depth < 10 {
        return Err(Error::InsufficientDepth(format!(
            "two-step checks need depth >= 10, got {}",
            nest.depth
        )));
    }
    let k = nest.depth;
    let s = &nest.times;
    let d = d_f(&nest.levels);
    let prec = f.prec();
    let mut rows = Vec::new();

    for m in 4..=k {
        let central = nest.orbit_derivative(f, 1, s.get(m))?;
        if m < k {
            let rhs = &(&d[m] / &d[m + 1]) * &ell_pow(&rho_of(&d, m, 4)?, -4, f);
            rows.push(InequalityRow::new(
                "central_derivative_lower",
                m,
                BoundKind::Lower,
                central.clone(),
                rhs,
            ));
        }
        if m + 2 <= k {
            let r = rho_of(&d, m + 1, 5)?;
            let rhs = &(&(&d[m] / &d[m + 2]) * &r.ln()) * &ell_pow(&r, 1, f);
            rows.push(InequalityRow::new(
                "central_derivative_upper",
                m,
                BoundKind::Upper,
                central,
                rhs.mul_pow2(1),
            ));
        }
    }

    for m in 7..=k.saturating_sub(2) {
        let lhs = nest.orbit_derivative(f, s.get(m + 1) + 1, s.get(m))?;
        let r = rho_of(&d, m + 2, 9)?;
        let ln = r.ln();
        let rhs = &(&(&Real::from_i64(160, prec) * &(&d[m + 2] / &d[m + 1])) * &ln.powi(4)) * &ell_pow(&r, 13, f);
        rows.push(InequalityRow::new(
            "return_derivative_upper",
            m,
            BoundKind::Upper,
            lhs,
            rhs,
        ));
    }

    for n in 4..=k.saturating_sub(2) {
        let level = &nest.levels[n];
        let (Some(bf), Some(_)) = (level.dist_y_f.clone(), level.y.as_ref()) else {
            continue;
        };
        let a = &nest.levels[n + 2].d;
        let af = &d[n + 2];
        let lhs = nest.orbit_derivative(f, s.get(n + 2) + 1, s.get(n))?;
        let pre = inside_z(nest, a, n, f);
        let q4 = &d[n - 4] / &bf;
        let q0 = &d[n] / &bf;
        let direct = &(&(&(&bf / af) * &q4.ln()) * &q0.ln()) * &q4.pow(&f.ell().recip());
        rows.push(
            InequalityRow::new("two_step_direct", n, BoundKind::Upper, lhs.clone(), direct).with_precondition(pre),
        );
        let r = rho_of(&d, n + 1, 5)?;
        let ln = r.ln();
        let remark = &(&(&bf / af) * &(&Real::from_i64(5, prec) * &(&ln * &ln))) * &ell_pow(&r, 5, f);
        rows.push(InequalityRow::new("two_step_window_i1", n, BoundKind::Upper, lhs, remark).with_precondition(pre));
    }

    for n in 4..=k.saturating_sub(4) {
        let Some(y) = nest.levels[n + 1].y.clone() else {
            continue;
        };
        let Some(yf) = nest.levels[n + 1].dist_y_f.clone() else {
            continue;
        };
        let start = s.get(n + 3) + s.get(n + 1) + 1;
        let lhs = nest.orbit_derivative(f, start, s.get(n))?;
        let r = rho_of(&d, n + 4, 8)?;
        let ln = r.ln();
        let rhs = &(&(&d[n + 4] / &yf) * &(&Real::from_i64(32, prec) * &(&ln * &ln))) * &ell_pow(&r, 8, f);
        rows.push(
            InequalityRow::new("two_step_window_i4", n, BoundKind::Upper, lhs, rhs)
                .with_precondition(inside_z(nest, &y, n, f)),
        );
    }
    Ok(rows)
}

/// Largest of the last ten successive ratios `d^f_k / d^f_{k+1}`.
pub fn rho_infinity(levels: &[NestLevel]) -> Result<Real> {
    let n = levels.len() - 1;
    rho_of(&d_f(levels), n, 10.min(n))
}

/// One-step bounds on ratios of closest-return distances and on `d^f_n / u^f_n`.
pub fn one_step_checks(f: &FibMap, nest: &Nest) -> Result<Vec<InequalityRow>> {
    if nest.depth < 10 {
        return Err(Error::InsufficientDepth(format!(
            "one-step checks need depth >= 10, got {}",
            nest.depth
        )));
    }
    let k = nest.depth;
    let d = d_f(&nest.levels);
    let prec = f.prec();
    let one = Real::one(prec);
    let coef = Real::from_i64(51200, prec);
    let rho_inf = rho_infinity(&nest.levels)?;
    let lower_ratio_bound = &one + &(&(&one - &Real::from_f64(-LN_RATIO_BOUND, prec).exp()) / &(&rho_inf - &one));
    let kor_coef = &one - &Real::from_f64(LN_RATIO_BOUND, prec).recip();
    let mut rows = Vec::new();
    for n in 10..=k {
        let r = rho_of(&d, n, 10)?;
        let ln9 = r.ln().powi(9);
        let central = nest.orbit_derivative(f, 1, nest.times.get(n))?;
        rows.push(InequalityRow::new(
            "composite_derivative_upper",
            n,
            BoundKind::Upper,
            central,
            &(&coef * &ln9) * &ell_pow(&r, 27, f),
        ));
        rows.push(InequalityRow::new(
            "rho_self_consistency",
            n,
            BoundKind::Upper,
            r.clone(),
            &(&coef * &ln9) * &ell_pow(&r, 31, f),
        ));
        let level = &nest.levels[n];
        let du = &level.dist_d_f / &level.dist_u_f;
        rows.push(InequalityRow::new(
            "d_over_u_gap_lower",
            n,
            BoundKind::Lower,
            &du - &one,
            &kor_coef / &r,
        ));
        rows.push(InequalityRow::new(
            "d_over_u_above_one",
            n,
            BoundKind::Lower,
            du,
            one.clone(),
        ));
        if n < k {
            let ratio = &d[n] / &d[n + 1];
            rows.push(InequalityRow::new(
                "ratio_upper",
                n,
                BoundKind::Upper,
                ratio.clone(),
                &(&coef * &ln9) * &ell_pow(&r, 31, f),
            ));
            rows.push(InequalityRow::new(
                "ratio_lower",
                n,
                BoundKind::Lower,
                ratio.clone(),
                lower_ratio_bound.clone(),
            ));
            rows.push(InequalityRow::new(
                "d_ratio_above_one",
                n,
                BoundKind::Lower,
                ratio,
                one.clone(),
            ));
            let u_ratio = &level.dist_u_f / &nest.levels[n + 1].dist_u_f;
            rows.push(InequalityRow::new(
                "u_ratio_above_one",
                n,
                BoundKind::Lower,
                u_ratio,
                one.clone(),
            ));
        }
    }
    Ok(rows)
}

/// Empirical constants with `C1/ℓ ≤ q ≤ C2/ℓ` for the three relative gaps.
#[derive(Clone, Debug, Serialize)]
pub struct RelativeGapConstants {
    pub from_level: usize,
    pub c1: f64,
    pub c2: f64,
}

pub fn relative_gap_constants(f: &FibMap, nest: &Nest, from_level: usize) -> Result<RelativeGapConstants> {
    let k = nest.depth;
    if from_level + 1 > k {
        return Err(Error::OutOfDepth(format!(
            "no levels from {from_level} below depth {k}"
        )));
    }
    let c = f.critical_point();
    let ell = f.ell_f64();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for n in from_level.max(1)..k {
        let a = &nest.levels[n];
        let b = &nest.levels[n + 1];
        let q1 = (&(&a.d - &a.u).abs() / &(&a.u - c).abs()).to_f64();
        let q2 = (&(&a.dist_d - &b.dist_d) / &a.dist_d).to_f64();
        let q3 = (&(&a.dist_u - &b.dist_u) / &a.dist_u).to_f64();
        for q in [q1, q2, q3] {
            lo = lo.min(q * ell);
            hi = hi.max(q * ell);
        }
    }
    Ok(RelativeGapConstants {
        from_level,
        c1: lo,
        c2: hi,
    })
}

/// Largest `x` with `x = 51200 ln⁹(x) x^(31/ℓ)`; `ell = ∞` gives `x = 51200 ln⁹ x`.
pub fn rho_upper_bound(ell: f64) -> Result<RhoBound> {
    let a = if ell.is_infinite() { 0.0 } else { 31.0 / ell };
    if !(a < 1.0) || !(ell >= 1.0) {
        return Err(Error::Unbounded(format!(
            "exponent 31/ell = {a} is not below 1; the fixed-point equation has no finite largest root"
        )));
    }
    let g = |s: f64| -> f64 {
        // g(e^s)/e^s in log form: 1 − 51200 s⁹ e^{(a−1)s}
        1.0 - (51200f64.ln() + 9.0 * s.ln() + (a - 1.0) * s).exp()
    };
    let mut lo = (9.0 / (1.0 - a)).max(1.0);
    if g(lo) >= 0.0 {
        return Err(Error::Precondition(
            "no ratio above 1 satisfies the fixed-point inequality".into(),
        ));
    }
    let mut hi = lo * 2.0;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Unbounded("no sign change below exp(1e6)".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(RhoBound {
        root: s.exp(),
        relative_residual: g(s).abs(),
        bracket: (lo.exp(), hi.exp()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoBound {
    pub root: f64,
    pub relative_residual: f64,
    pub bracket: (f64, f64),
}

/// Everything measured on one solved map.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub ell: Real,
    pub lambda: Real,
    #[serde(rename = "K")]
    pub depth: usize,
    pub precision_bits: u32,
    pub levels: Vec<NestLevel>,
    pub lambda_f: Vec<Option<Real>>,
    pub rho_f: Vec<Option<Real>>,
    pub lambda_threshold: Option<usize>,
    pub rho_infinity: Real,
    pub relative_gaps: RelativeGapConstants,
    pub rows: Vec<InequalityRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub n: usize,
    #[serde(rename = "S_n")]
    pub s_n: usize,
    pub side: char,
    pub dist_d: String,
    pub dist_d_f: String,
    pub dist_u: String,
    pub dist_u_f: String,
    pub dist_z_f: String,
    pub dist_y_f: String,
    pub lambda_f: String,
    pub rho_f: String,
    pub lambda_pass: String,
    pub ln_ratio_pass: String,
    pub rows_pass: bool,
}

impl ScalingReport {
    pub fn build(f: &FibMap, nest: &Nest) -> Result<ScalingReport> {
        let levels = nest.levels.clone();
        let d = d_f(&levels);
        let lambda_f = (0..levels.len()).map(|n| (n >= 2).then(|| &d[n - 2] / &d[n])).collect();
        let rho_f = (0..levels.len()).map(|n| rho_of(&d, n, 10).ok()).collect();
        let mut rows = two_step_checks(f, nest)?;
        rows.extend(one_step_checks(f, nest)?);
        Ok(ScalingReport {
            ell: f.ell().clone(),
            lambda: f.lambda().clone(),
            depth: nest.depth,
            precision_bits: f.prec(),
            lambda_threshold: lambda_threshold(&levels)?,
            rho_infinity: rho_infinity(&levels)?,
            relative_gaps: relative_gap_constants(f, nest, 4)?,
            levels,
            lambda_f,
            rho_f,
            rows,
        })
    }

    /// Rows at the deepest `count` levels available for each inequality.
    pub fn deepest_rows(&self, count: usize) -> Vec<&InequalityRow> {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        let mut out = Vec::new();
        for name in names {
            let mut rs: Vec<&InequalityRow> = self.rows.iter().filter(|r| r.name == name).collect();
            rs.sort_by_key(|r| r.n);
            let skip = rs.len().saturating_sub(count);
            out.extend(rs.into_iter().skip(skip));
        }
        out
    }

    pub fn level_rows(&self) -> Vec<LevelRow> {
        let show = |x: &Option<Real>| x.as_ref().map(|v| v.to_decimal()).unwrap_or_default();
        self.levels
            .iter()
            .map(|l| {
                let chk = lambda_check(&self.levels, l.n).ok();
                LevelRow {
                    n: l.n,
                    s_n: l.s_n,
                    side: l.side.symbol(),
                    dist_d: l.dist_d.to_decimal(),
                    dist_d_f: l.dist_d_f.to_decimal(),
                    dist_u: l.dist_u.to_decimal(),
                    dist_u_f: l.dist_u_f.to_decimal(),
                    dist_z_f: l.dist_z_f.to_decimal(),
                    dist_y_f: show(&l.dist_y_f),
                    lambda_f: show(&self.lambda_f[l.n]),
                    rho_f: show(&self.rho_f[l.n]),
                    lambda_pass: chk.as_ref().map(|c| c.pass.to_string()).unwrap_or_default(),
                    ln_ratio_pass: chk.and_then(|c| c.ln_pass).map(|p| p.to_string()).unwrap_or_default(),
                    rows_pass: self.rows.iter().filter(|r| r.n == l.n).all(|r| r.pass),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.level_rows() {
            w.serialize(row)
                .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reals(xs: &[f64]) -> Vec<Real> {
        xs.iter().map(|&x| Real::from_f64(x, 128)).collect()
    }

    #[test]
    fn rho_window_examples() {
        // successive ratios 2.0, 2.5, 2.2
        let d = reals(&[11.0, 5.5, 2.2, 1.0]);
        assert!((rho_of(&d, 3, 3).unwrap().to_f64() - 2.5).abs() < 1e-15);
        assert!((rho_of(&d, 3, 1).unwrap().to_f64() - 2.2).abs() < 1e-15);
        assert!(matches!(rho_of(&d, 4, 2), Err(Error::OutOfDepth(_))));
        assert!(matches!(rho_of(&d, 1, 2), Err(Error::OutOfDepth(_))));
    }

    #[test]
    fn rho_bound_limit() {
        let b = rho_upper_bound(f64::INFINITY).unwrap();
        assert!(b.root > 1e19 && b.root < 1e21, "{}", b.root);
        assert!(b.relative_residual < 1e-6);
        let direct = |x: f64| x - 51200.0 * x.ln().powi(9);
        assert!(direct(1e19) < 0.0 && direct(1e21) > 0.0);
        assert!(matches!(rho_upper_bound(31.0), Err(Error::Unbounded(_))));
        assert!(matches!(rho_upper_bound(2.0), Err(Error::Unbounded(_))));
        let finite = rho_upper_bound(64.0).unwrap();
        assert!(finite.root > b.root);
    }

    #[test]
    fn composite_coefficient() {
        assert_eq!(160 * 160 * 2, 51200);
    }
}
