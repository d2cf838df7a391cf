//! Cross-ratio distortion, the two-interval inequality and the Koebe test.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{FibMap, IntervalR, Side};
use crate::real::Real;

/// A smooth interval map with at most one turning point.
pub trait IntervalMap {
    fn apply(&self, x: &Real) -> Result<Real>;
    fn derivative(&self, x: &Real) -> Result<Real>;
    fn turning_point(&self) -> Option<&Real>;
    fn precision(&self) -> u32;
}

impl IntervalMap for FibMap {
    fn apply(&self, x: &Real) -> Result<Real> {
        self.eval(x)
    }

    fn derivative(&self, x: &Real) -> Result<Real> {
        self.deriv(x)
    }

    fn turning_point(&self) -> Option<&Real> {
        Some(self.critical_point())
    }

    fn precision(&self) -> u32 {
        self.prec()
    }
}

/// `x ↦ a·x + b`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub a: Real,
    pub b: Real,
}

impl IntervalMap for AffineMap {
    fn apply(&self, x: &Real) -> Result<Real> {
        Ok(&(&self.a * x) + &self.b)
    }

    fn derivative(&self, _x: &Real) -> Result<Real> {
        Ok(self.a.clone())
    }

    fn turning_point(&self) -> Option<&Real> {
        None
    }

    fn precision(&self) -> u32 {
        self.a.prec()
    }
}

/// `j ⊂ t` with both components of `t \ j` nonempty.
#[derive(Clone, Debug)]
pub struct CrossConfig {
    pub t: IntervalR,
    pub j: IntervalR,
}

impl CrossConfig {
    pub fn new(t: IntervalR, j: IntervalR) -> Result<CrossConfig> {
        if j.is_degenerate() {
            return Err(Error::Degenerate("inner interval is a point".into()));
        }
        if t.lo.cmp_raw(&j.lo) != Ordering::Less || j.hi.cmp_raw(&t.hi) != Ordering::Less {
            return Err(Error::Degenerate(
                "inner interval must lie strictly inside the outer one".into(),
            ));
        }
        Ok(CrossConfig { t, j })
    }

    fn points(&self) -> [Real; 4] {
        [
            self.t.lo.clone(),
            self.j.lo.clone(),
            self.j.hi.clone(),
            self.t.hi.clone(),
        ]
    }
}

fn cross_of(p: &[Real; 4]) -> Real {
    let len = |a: usize, b: usize| (&p[b] - &p[a]).abs();
    &(&len(0, 3) * &len(1, 2)) / &(&len(0, 1) * &len(2, 3))
}

/// `C(t, j) = |t||j| / (|l||r|)`.
pub fn cross_ratio(config: &CrossConfig) -> Result<Real> {
    Ok(cross_of(&config.points()))
}

fn touch_tolerance(prec: u32) -> Real {
    Real::one(prec).mul_pow2(-((prec / 2) as i32))
}

/// Orbits of the given points for `n` steps, refusing any step whose hull
/// has the turning point strictly inside.
fn hull_orbit<M: IntervalMap, const K: usize>(map: &M, pts: &[Real; K], n: usize) -> Result<Vec<[Real; K]>> {
    let tol = touch_tolerance(map.precision());
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = pts.clone();
    for i in 0..=n {
        if i < n {
            if let Some(c) = map.turning_point() {
                let lo = cur.iter().fold(cur[0].clone(), |m, x| m.min(x));
                let hi = cur.iter().fold(cur[0].clone(), |m, x| m.max(x));
                let below = (c - &lo).cmp_raw(&tol) == Ordering::Greater;
                let above = (&hi - c).cmp_raw(&tol) == Ordering::Greater;
                if below && above {
                    return Err(Error::NonMonotone(format!(
                        "image {i} of the interval contains the turning point"
                    )));
                }
            }
        }
        out.push(cur.clone());
        if i < n {
            let mut next = cur.clone();
            for (k, x) in cur.iter().enumerate() {
                next[k] = map.apply(x)?;
            }
            cur = next;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionRecord {
    pub n: usize,
    #[serde(rename = "B_value")]
    pub b_value: Real,
    pub sum_lengths: Real,
    pub max_length: Real,
}

/// `B(f^n, t, j) = C(f^n t, f^n j) / C(t, j)` from endpoint orbits.
pub fn cross_ratio_distortion<M: IntervalMap>(map: &M, n: usize, config: &CrossConfig) -> Result<DistortionRecord> {
    let orbit = hull_orbit(map, &config.points(), n)?;
    let prec = map.precision();
    let mut sum = Real::zero(prec);
    let mut max = Real::zero(prec);
    for (i, p) in orbit.iter().enumerate() {
        let len = (&p[3] - &p[0]).abs();
        if i < n {
            sum = &sum + &len;
        }
        max = max.max(&len);
    }
    let b_value = &cross_of(&orbit[n]) / &cross_of(&orbit[0]);
    Ok(DistortionRecord {
        n,
        b_value,
        sum_lengths: sum,
        max_length: max,
    })
}

/// Relative slack used when comparing quantities that are equal in exact arithmetic.
pub fn relative_slack(prec: u32) -> Real {
    Real::one(prec).mul_pow2(-((prec / 4) as i32))
}

#[derive(Clone, Debug, Serialize)]
pub struct DoubleIntervalCheck {
    pub lhs: Real,
    pub rhs_lower: Real,
    pub rhs_upper: Real,
    pub pass: bool,
}

/// Two disjoint intervals `j1` left of `j2` inside a common `t`:
/// `(|j1|/|J1|)(|J2|/|j2|)` against the lower bound `|J2∪R2||R2| / (|J1∪R1||R1|)`
/// and the upper bound `|L2||L2∪J2| / (|L1||L1∪J1|)`.
pub fn double_interval_check<M: IntervalMap>(
    map: &M,
    n: usize,
    first: &CrossConfig,
    second: &CrossConfig,
) -> Result<DoubleIntervalCheck> {
    if first.t != second.t {
        return Err(Error::Ordering(
            "both configurations must share the outer interval".into(),
        ));
    }
    if first.j.hi.cmp_raw(&second.j.lo) == Ordering::Greater {
        return Err(Error::Ordering(
            "the first inner interval must lie left of the second and not overlap it".into(),
        ));
    }
    let pts = [
        first.t.lo.clone(),
        first.j.lo.clone(),
        first.j.hi.clone(),
        second.j.lo.clone(),
        second.j.hi.clone(),
        first.t.hi.clone(),
    ];
    let orbit = hull_orbit(map, &pts, n)?;
    let p = &orbit[0];
    let q = &orbit[n];
    let len = |v: &[Real; 6], a: usize, b: usize| (&v[b] - &v[a]).abs();
    let lhs = &(&len(p, 1, 2) / &len(q, 1, 2)) * &(&len(q, 3, 4) / &len(p, 3, 4));
    let rhs_lower = &(&len(q, 3, 5) * &len(q, 4, 5)) / &(&len(q, 1, 5) * &len(q, 2, 5));
    let rhs_upper = &(&len(q, 0, 3) * &len(q, 0, 4)) / &(&len(q, 0, 1) * &len(q, 0, 2));
    let one = Real::one(map.precision());
    let slack = relative_slack(map.precision());
    let pass = lhs.cmp_raw(&(&rhs_lower * &(&one - &slack))) != Ordering::Less
        && lhs.cmp_raw(&(&rhs_upper * &(&one + &slack))) != Ordering::Greater;
    Ok(DoubleIntervalCheck {
        lhs,
        rhs_lower,
        rhs_upper,
        pass,
    })
}

/// `|Df^n(x)|` by the chain rule.
pub fn iterate_derivative<M: IntervalMap>(map: &M, x: &Real, n: usize) -> Result<Real> {
    let mut acc = Real::one(map.precision());
    let mut y = x.clone();
    for _ in 0..n {
        acc = &acc * &map.derivative(&y)?.abs();
        y = map.apply(&y)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct KoebeResult {
    pub ratio: Real,
    pub bound: Real,
    pub tau: Real,
    pub pass: bool,
}

pub const KOEBE_SAMPLES: usize = 1024;

/// Largest `τ` for which `f^n(t)` is a `τ`-scaled neighbourhood of `f^n(j)`.
pub fn image_scaling<M: IntervalMap>(map: &M, n: usize, config: &CrossConfig) -> Result<Real> {
    let orbit = hull_orbit(map, &config.points(), n)?;
    let q = &orbit[n];
    let mid = (&q[2] - &q[1]).abs();
    let collar = (&q[1] - &q[0]).abs().min(&(&q[3] - &q[2]).abs());
    Ok(&collar / &mid)
}

pub fn koebe_check<M: IntervalMap>(map: &M, n: usize, j: &IntervalR, t: &IntervalR, tau: &Real) -> Result<KoebeResult> {
    koebe_check_sampled(map, n, j, t, tau, KOEBE_SAMPLES)
}

/// Koebe test on `samples` Chebyshev nodes of `j` plus its endpoints.
pub fn koebe_check_sampled<M: IntervalMap>(
    map: &M,
    n: usize,
    j: &IntervalR,
    t: &IntervalR,
    tau: &Real,
    samples: usize,
) -> Result<KoebeResult> {
    let prec = map.precision();
    if tau.signum() <= 0 {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let config = CrossConfig::new(t.clone(), j.clone())?;
    let achieved = image_scaling(map, n, &config)?;
    if achieved.cmp_raw(tau) == Ordering::Less {
        return Err(Error::Precondition(format!(
            "image collar only scales by {}, below tau = {}",
            achieved.to_decimal_digits(8),
            tau.to_decimal_digits(8)
        )));
    }
    let mid = j.midpoint();
    let half = j.len().mul_pow2(-1);
    let mut xs = vec![j.lo.clone(), j.hi.clone()];
    for k in 0..samples {
        let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * samples) as f64;
        xs.push(&mid + &(&half * &Real::from_f64(theta.cos(), prec)));
    }
    let derivs = xs
        .iter()
        .map(|x| iterate_derivative(map, x, n))
        .collect::<Result<Vec<_>>>()?;
    let hi = derivs.iter().fold(derivs[0].clone(), |m, d| m.max(d));
    let lo = derivs.iter().fold(derivs[0].clone(), |m, d| m.min(d));
    if lo.is_zero() {
        return Err(Error::NonMonotone("derivative vanishes on the inner interval".into()));
    }
    let ratio = &hi / &lo;
    let one = Real::one(prec);
    let bound = (&(&one + tau) / tau).powi(2);
    let pass = ratio.cmp_raw(&(&bound * &(&one + &one.mul_pow2(-20)))) != Ordering::Greater;
    Ok(KoebeResult {
        ratio,
        bound,
        tau: tau.clone(),
        pass,
    })
}

/// The maximal open interval around `x` on which `f^n` is a diffeomorphism.
pub fn monotone_branch(f: &FibMap, n: usize, x: &Real) -> Result<IntervalR> {
    let prec = f.prec();
    let orbit = f.orbit(x, n)?;
    let mut sides = Vec::with_capacity(n);
    for (i, y) in orbit.iter().take(n).enumerate() {
        if (y - f.critical_point()).is_zero() {
            return Err(Error::Precritical(format!("f^{i}(x) is the critical point")));
        }
        sides.push(f.side(y)?);
    }
    let mut lo = Real::zero(prec);
    let mut hi = Real::one(prec);
    for i in (0..n).rev() {
        let lam = f.lambda();
        let a = lo.min(lam);
        let b = hi.min(lam);
        let pa = f.inverse(&a, sides[i])?;
        let pb = f.inverse(&b, sides[i])?;
        if pa.cmp_raw(&pb) == Ordering::Greater {
            lo = pb;
            hi = pa;
        } else {
            lo = pa;
            hi = pb;
        }
    }
    IntervalR::open(lo, hi)
}

/// Pulls `target` back along the orbit of `x` through the inverse branches it visits.
pub fn pull_back_along(f: &FibMap, x: &Real, n: usize, target: &Real) -> Result<Real> {
    let orbit = f.orbit(x, n)?;
    let mut y = target.clone();
    for i in (0..n).rev() {
        let side: Side = f.side(&orbit[i])?;
        y = f.inverse(&y, side)?;
    }
    Ok(y)
}

/// `(Σ_{i<n} |f^i(t)|, max_{i≤n} |f^i(t)|)` from endpoint orbits.
pub fn orbit_length_sum<M: IntervalMap>(map: &M, n: usize, t: &IntervalR) -> Result<(Real, Real)> {
    let prec = map.precision();
    let mut a = t.lo.clone();
    let mut b = t.hi.clone();
    let mut sum = Real::zero(prec);
    let mut max = Real::zero(prec);
    for i in 0..=n {
        let len = (&b - &a).abs();
        if i < n {
            sum = &sum + &len;
            a = map.apply(&a)?;
            b = map.apply(&b)?;
        }
        max = max.max(&len);
    }
    Ok((sum, max))
}

/// A seeded random trial on a monotone branch of `f^n`.
#[derive(Clone, Debug, Serialize)]
pub struct DistortionTrial {
    pub trial: usize,
    pub n: usize,
    pub record: DistortionRecord,
    pub double: DoubleIntervalCheck,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn random_points(rng: &mut ChaCha8Rng, branch: &IntervalR, count: usize) -> Vec<Real> {
    let width = branch.len();
    let mut us: Vec<f64> = (0..count).map(|_| rng.random_range(0.01..0.99)).collect();
    us.sort_by(f64::total_cmp);
    us.iter()
        .map(|&u| &branch.lo + &(&width * &Real::from_f64(u, width.prec())))
        .collect()
}

/// Inner interval `j` and outer interval `t` about `x` whose images under `f^n` sit in the
/// monotone branch image with collars of `1.01·τ·|f^n(j)|` and `0.005·τ·|f^n(j)|` to spare.
pub fn collared_configuration(f: &FibMap, n: usize, x: &Real, tau: f64) -> Result<(IntervalR, IntervalR)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let branch = monotone_branch(f, n, x)?;
    let a = f.iterate(&branch.lo, n)?;
    let b = f.iterate(&branch.hi, n)?;
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let prec = f.prec();
    let width = &b - &a;
    let jlen = &width / &Real::from_f64(1.0 + 2.0 * 1.01 * tau, prec);
    let collar = &jlen * &Real::from_f64(1.01 * tau, prec);
    let shrink = &jlen * &Real::from_f64(0.005 * tau, prec);
    let back = |y: &Real| pull_back_along(f, x, n, y);
    let j = IntervalR::spanning(&back(&(&a + &collar))?, &back(&(&b - &collar))?)?;
    let t = IntervalR::spanning(&back(&(&a + &shrink))?, &back(&(&b - &shrink))?)?;
    Ok((j, t))
}

/// Random configurations `t ⊃ j1, j2` inside monotone branches of `f^n`, `1 ≤ n ≤ n_max`.
pub fn random_trials(f: &FibMap, n_max: usize, count: usize, seed: u64) -> Result<Vec<DistortionTrial>> {
    (0..count)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            loop {
                let n = rng.random_range(1..=n_max);
                let x = Real::from_f64(rng.random_range(0.0..1.0), f.prec());
                let branch = match monotone_branch(f, n, &x) {
                    Ok(b) => b,
                    Err(e) if e.is_precision() => continue,
                    Err(e) => return Err(e),
                };
                let p = random_points(&mut rng, &branch, 6);
                if p.windows(2).any(|w| w[0].cmp_raw(&w[1]) != Ordering::Less) {
                    continue;
                }
                let t = IntervalR::new(p[0].clone(), p[5].clone())?;
                let first = CrossConfig::new(t.clone(), IntervalR::new(p[1].clone(), p[2].clone())?)?;
                let second = CrossConfig::new(t, IntervalR::new(p[3].clone(), p[4].clone())?)?;
                let record = cross_ratio_distortion(f, n, &first)?;
                let double = double_interval_check(f, n, &first, &second)?;
                return Ok(DistortionTrial {
                    trial,
                    n,
                    record,
                    double,
                });
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> IntervalR {
        IntervalR::new(Real::from_f64(a, 128), Real::from_f64(b, 128)).unwrap()
    }

    #[test]
    fn cross_ratio_examples() {
        let c = CrossConfig::new(iv(0.0, 4.0), iv(1.0, 3.0)).unwrap();
        assert_eq!(cross_ratio(&c).unwrap().to_f64(), 8.0);
        let c = CrossConfig::new(iv(0.0, 3.0), iv(1.0, 2.0)).unwrap();
        assert_eq!(cross_ratio(&c).unwrap().to_f64(), 3.0);
        assert!(matches!(
            CrossConfig::new(iv(0.0, 3.0), iv(0.0, 3.0)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zero_iterates_leave_everything_fixed() {
        let f = FibMap::from_f64(0.9, 2.0, 256).unwrap();
        let c = CrossConfig::new(iv(0.1, 0.4), iv(0.2, 0.3)).unwrap();
        let rec = cross_ratio_distortion(&f, 0, &c).unwrap();
        assert_eq!(rec.b_value.to_f64(), 1.0);
        assert!(rec.sum_lengths.is_zero());
        let second = CrossConfig::new(iv(0.1, 0.4), iv(0.32, 0.35)).unwrap();
        let d = double_interval_check(&f, 0, &c, &second).unwrap();
        assert_eq!(d.lhs.to_f64(), 1.0);
        assert!(d.pass);
        let k = koebe_check(&f, 0, &iv(0.2, 0.3), &iv(0.1, 0.4), &Real::one(128)).unwrap();
        assert_eq!(k.ratio.to_f64(), 1.0);
        assert_eq!(k.bound.to_f64(), 4.0);
    }

    #[test]
    fn overlapping_inner_intervals_are_rejected() {
        let f = FibMap::from_f64(0.9, 2.0, 256).unwrap();
        let a = CrossConfig::new(iv(0.1, 0.4), iv(0.2, 0.3)).unwrap();
        let b = CrossConfig::new(iv(0.1, 0.4), iv(0.25, 0.35)).unwrap();
        assert!(matches!(double_interval_check(&f, 1, &a, &b), Err(Error::Ordering(_))));
    }

    #[test]
    fn straddling_the_critical_point_is_non_monotone() {
        let f = FibMap::from_f64(0.9, 2.0, 256).unwrap();
        let c = CrossConfig::new(iv(0.3, 0.7), iv(0.4, 0.6)).unwrap();
        assert!(matches!(cross_ratio_distortion(&f, 1, &c), Err(Error::NonMonotone(_))));
    }

    #[test]
    fn affine_maps_preserve_cross_ratios() {
        let g = AffineMap {
            a: Real::from_f64(0.75, 128),
            b: Real::from_f64(0.125, 128),
        };
        let c = CrossConfig::new(iv(0.1, 0.4), iv(0.2, 0.3)).unwrap();
        assert_eq!(cross_ratio_distortion(&g, 5, &c).unwrap().b_value.to_f64(), 1.0);
        let k = koebe_check(&g, 7, &iv(0.2, 0.3), &iv(0.1, 0.4), &Real::one(128)).unwrap();
        assert_eq!(k.ratio.to_f64(), 1.0);
    }

    #[test]
    fn one_fold_branches() {
        let f = FibMap::from_f64(0.9, 2.0, 256).unwrap();
        let left = monotone_branch(&f, 1, &Real::from_f64(0.2, 256)).unwrap();
        assert_eq!((left.lo.to_f64(), left.hi.to_f64()), (0.0, 0.5));
        let right = monotone_branch(&f, 1, &Real::from_f64(0.7, 256)).unwrap();
        assert_eq!((right.lo.to_f64(), right.hi.to_f64()), (0.5, 1.0));
        assert!(matches!(
            monotone_branch(&f, 2, &Real::half(256)),
            Err(Error::Precritical(_))
        ));
    }

    #[test]
    fn orbit_length_sum_examples() {
        let f = FibMap::from_f64(0.9, 2.0, 256).unwrap();
        let (s, m) = orbit_length_sum(&f, 1, &iv(0.1, 0.3)).unwrap();
        assert_eq!(s.to_f64(), iv(0.1, 0.3).len().to_f64());
        assert!(m >= s);
        let (s, _) = orbit_length_sum(&f, 5, &IntervalR::degenerate(Real::from_f64(0.2, 256))).unwrap();
        assert!(s.is_zero());
    }
}
