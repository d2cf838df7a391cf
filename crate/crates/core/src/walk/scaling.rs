use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::{Deserialize, Serialize};

use super::sequence::{Sequence, Tail};
use crate::error::{Error, Result};
use crate::real::Real;

/// Extra indices checked past the longer stored prefix.
pub const CHECK_MARGIN: usize = 64;

const REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub omega1: f64,
    pub omega2: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub d: usize,
    pub k0: usize,
}

impl ScalingConstants {
    pub fn new(rho_minus: f64, rho_plus: f64, omega1: f64, omega2: f64, c: f64, d: usize, k0: usize) -> Result<Self> {
        let s = ScalingConstants {
            rho_minus,
            rho_plus,
            omega1,
            omega2,
            c,
            d,
            k0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0 < self.rho_minus && self.rho_minus <= self.rho_plus && self.rho_plus.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 1 < rho_minus <= rho_plus, got {} and {}",
                self.rho_minus, self.rho_plus
            )));
        }
        if !(self.omega1 > 0.0 && self.omega2 > 0.0) {
            return Err(Error::InvalidArgument("Omega1 and Omega2 must be positive".into()));
        }
        if self.k0 < 1 {
            return Err(Error::InvalidArgument("k0 must be at least 1".into()));
        }
        let spread = (self.rho_plus - 1.0) / (self.rho_minus - 1.0);
        if !(self.c >= 1.0) || spread > self.c * (1.0 + REL_TOL) {
            return Err(Error::InvalidArgument(format!(
                "C = {} must be at least 1 and at least (rho_plus-1)/(rho_minus-1) = {spread}",
                self.c
            )));
        }
        Ok(())
    }

    /// `K⁺ = (ρ₊−1)ρ₋ / ((ρ₋−1)ρ₊)`.
    pub fn k_plus(&self) -> f64 {
        (self.rho_plus - 1.0) * self.rho_minus / ((self.rho_minus - 1.0) * self.rho_plus)
    }

    /// Whether `1 < ρ₋ ≤ ρ₊ < 2`, the range the transience argument works in.
    pub fn in_contracting_range(&self) -> bool {
        self.rho_plus < 2.0
    }
}

/// Lengths `(a_i)_{i≥0}` and transition weights `(ν_i)_{i≥1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePair {
    pub a: Sequence,
    pub nu: Sequence,
}

impl SequencePair {
    pub fn new(a: Sequence, nu: Sequence) -> Result<SequencePair> {
        if a.first != 0 || nu.first != 1 {
            return Err(Error::InvalidArgument("a is indexed from 0 and nu from 1".into()));
        }
        if a.values.iter().any(|&v| v <= 0.0) || a.tail == Tail::Zero {
            return Err(Error::InvalidArgument("a must be positive at every index".into()));
        }
        let total = nu.total()?;
        if (total - 1.0).abs() > 2f64.powi(-40) {
            return Err(Error::InvalidLaw(format!("nu sums to {total}, not 1")));
        }
        Ok(SequencePair { a, nu })
    }

    /// `max{ν_1, …, ν_{d+1}}`.
    pub fn nu_max(&self, d: usize) -> Result<f64> {
        let mut m = 0.0f64;
        for i in 1..=d + 1 {
            m = m.max(self.nu.get(i)?);
        }
        Ok(m)
    }

    /// Index up to which inequalities are checked term by term.
    pub fn check_limit(&self) -> usize {
        self.a.end().max(self.nu.end()) + CHECK_MARGIN
    }

    /// `max |a_{k+1}ν_{j+1} / (a_{j+1}ν_{k+1}) − 1|` over checked indices; zero for an invariant measure.
    pub fn measure_preserving_defect(&self) -> Result<f64> {
        let n = self.check_limit();
        let base = self.nu.get(1)? / self.a.get(1)?;
        let mut worst = 0.0f64;
        for k in 1..=n {
            let r = self.nu.get(k)? / self.a.get(k)?;
            worst = worst.max((base / r - 1.0).abs());
        }
        Ok(worst)
    }
}

/// Outcome of one family of inequalities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityVerdict {
    pub pass: bool,
    pub first_violation: Option<Vec<usize>>,
    pub min_margin: f64,
    pub checked: usize,
}

impl InequalityVerdict {
    fn new() -> Self {
        InequalityVerdict {
            pass: true,
            first_violation: None,
            min_margin: f64::INFINITY,
            checked: 0,
        }
    }

    /// Records `lhs ≤ rhs` (margin `rhs/lhs`) at `index`.
    fn le(&mut self, lhs: f64, rhs: f64, index: &[usize]) {
        self.checked += 1;
        let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
        self.min_margin = self.min_margin.min(margin);
        if lhs > rhs * (1.0 + REL_TOL) && self.first_violation.is_none() {
            self.pass = false;
            self.first_violation = Some(index.to_vec());
        }
    }

    fn asymptotic(&mut self, ok: bool) {
        if !ok {
            self.pass = false;
            if self.first_violation.is_none() {
                self.first_violation = Some(vec![usize::MAX]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingVerdict {
    pub tail_sum_ratio: InequalityVerdict,
    pub transition_lower: InequalityVerdict,
    pub transition_upper: InequalityVerdict,
    pub checked_up_to: usize,
}

impl ScalingVerdict {
    pub fn pass(&self) -> bool {
        self.tail_sum_ratio.pass && self.transition_lower.pass && self.transition_upper.pass
    }
}

fn tail_ratio(s: &Sequence) -> f64 {
    match s.tail {
        Tail::Geometric(q) => q,
        _ => 0.0,
    }
}

/// Checks the tail-sum ratio bounds for `0 ≤ j ≤ k`, the transition lower bound for
/// `k ≥ d` and the transition upper bound for `k ≥ 0`, term by term up to
/// [`SequencePair::check_limit`] and asymptotically through the tail ratios.
/// Tail-sum violations are reported in order of `k`, then of the gap `k − j`.
pub fn validate_scaling(pair: &SequencePair, consts: &ScalingConstants) -> Result<ScalingVerdict> {
    consts.validate()?;
    let n = pair.check_limit();
    let tails: Vec<f64> = (0..=n + 1).map(|j| pair.a.sum_from(j)).collect::<Result<_>>()?;
    let mut first = InequalityVerdict::new();
    for k in 0..=n {
        for gap in 0..=k {
            let j = k - gap;
            let ratio = tails[j] / tails[k];
            first.le(consts.rho_minus.powi(gap as i32), ratio, &[j, k]);
            first.le(ratio, consts.rho_plus.powi(gap as i32), &[j, k]);
        }
    }
    let qa = tail_ratio(&pair.a);
    if qa > 0.0 {
        first.asymptotic(consts.rho_minus * qa <= 1.0 + REL_TOL && 1.0 <= consts.rho_plus * qa * (1.0 + REL_TOL));
    }

    let nu_max = pair.nu_max(consts.d)?;
    let a0 = pair.a.get(0)?;
    let a1 = pair.a.get(1)?;
    let mut head = Vec::with_capacity(n + 2);
    let mut acc = 0.0;
    for i in 0..=n + 1 {
        acc += pair.a.get(i)?;
        head.push(acc);
    }
    let mut second = InequalityVerdict::new();
    let mut third = InequalityVerdict::new();
    for k in 0..=n {
        let ratio = pair.nu.get(k + 1)? / pair.a.get(k + 1)?;
        if k >= consts.d {
            let lower = consts.omega1 * (a0 / head[k]) * (nu_max / head[k + 1]);
            second.le(lower, ratio, &[k]);
        }
        third.le(ratio, consts.omega2 * nu_max / a1, &[k]);
    }
    let qn = tail_ratio(&pair.nu);
    if qa > 0.0 || qn > 0.0 {
        second.asymptotic(qn >= qa * (1.0 - REL_TOL));
        third.asymptotic(qn <= qa * (1.0 + REL_TOL));
    }
    Ok(ScalingVerdict {
        tail_sum_ratio: first,
        transition_lower: second,
        transition_upper: third,
        checked_up_to: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedBounds {
    pub k_plus: f64,
    /// `1 − ρ₋⁻¹ ≤ a_j / Σ_{i≥j} a_i ≤ 1 − ρ₊⁻¹`
    pub relative_term: InequalityVerdict,
    /// `ρ₋^{k−j}/K⁺ ≤ a_j/a_k ≤ K⁺ρ₊^{k−j}`
    pub term_ratio: InequalityVerdict,
    /// `ν_k ≤ Ω₂ ν_max K⁺ ρ₋^{−(k−1)}`
    pub transition_decay: InequalityVerdict,
}

impl DerivedBounds {
    pub fn pass(&self) -> bool {
        self.relative_term.pass && self.term_ratio.pass && self.transition_decay.pass
    }
}

pub fn derived_bounds(pair: &SequencePair, consts: &ScalingConstants) -> Result<DerivedBounds> {
    let verdict = validate_scaling(pair, consts)?;
    if !verdict.pass() {
        return Err(Error::Scaling(format!("{verdict:?}")));
    }
    let n = pair.check_limit();
    let kp = consts.k_plus();
    let mut li = InequalityVerdict::new();
    let mut lii = InequalityVerdict::new();
    let mut lvii = InequalityVerdict::new();
    for j in 0..=n {
        let r = pair.a.get(j)? / pair.a.sum_from(j)?;
        li.le(1.0 - 1.0 / consts.rho_minus, r, &[j]);
        li.le(r, 1.0 - 1.0 / consts.rho_plus, &[j]);
    }
    for k in 0..=n {
        for j in 0..=k {
            let r = pair.a.get(j)? / pair.a.get(k)?;
            let gap = (k - j) as i32;
            lii.le(consts.rho_minus.powi(gap) / kp, r, &[j, k]);
            lii.le(r, kp * consts.rho_plus.powi(gap), &[j, k]);
        }
    }
    let nu_max = pair.nu_max(consts.d)?;
    for k in 1..=n {
        let bound = consts.omega2 * nu_max * kp * consts.rho_minus.powi(-((k - 1) as i32));
        lvii.le(pair.nu.get(k)?, bound, &[k]);
    }
    Ok(DerivedBounds {
        k_plus: kp,
        relative_term: li,
        term_ratio: lii,
        transition_decay: lvii,
    })
}

/// `(Σ jν_j, Σ j²ν_j)`.
pub fn moments(pair: &SequencePair) -> Result<(f64, f64)> {
    pair.nu.moments()
}

/// Where the summation-by-parts comparison stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SumEnd {
    Finite(usize),
    /// `n = ∞`: the list must be long enough that `q` has converged to `limit`.
    Infinite {
        limit: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SumComparison {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `Σ_{j=d+1}^{n−1} j(q(j+1)−q(j))/(q(j)q(j+1)) ≥ Σ_{j=d+1}^{n−1} (q(n)−q(j))/(q(n)q(j))`
/// for `q(j) = q[j−1]`.
pub fn summation_by_parts_check(q: &[f64], d: usize, end: SumEnd) -> Result<SumComparison> {
    if q.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    if let Some(i) = q.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasing(format!("q({}) >= q({})", i + 1, i + 2)));
    }
    let at = |j: usize| q[j - 1];
    let (n, qn) = match end {
        SumEnd::Finite(n) => {
            if n > q.len() {
                return Err(Error::InvalidArgument(format!(
                    "n = {n} exceeds the {} given terms",
                    q.len()
                )));
            }
            (n, at(n))
        }
        SumEnd::Infinite { limit } => {
            if limit < *q.last().expect("non-empty") {
                return Err(Error::InvalidArgument("limit below the last term".into()));
            }
            (q.len(), limit)
        }
    };
    if n < d + 2 {
        return Err(Error::InvalidArgument(format!(
            "need n - 1 >= d + 1, got n = {n}, d = {d}"
        )));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for j in d + 1..n {
        lhs += j as f64 * (at(j + 1) - at(j)) / (at(j) * at(j + 1));
        rhs += (qn - at(j)) / (qn * at(j));
    }
    if let SumEnd::Infinite { .. } = end {
        // the remaining increase happens at indices ≥ n
        lhs += n as f64 * (qn - at(n)) / (qn * qn);
    }
    Ok(SumComparison {
        lhs,
        rhs,
        pass: lhs >= rhs * (1.0 - REL_TOL),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialSumBound {
    pub lhs_partial: f64,
    pub rhs: f64,
    pub k_star: Option<usize>,
}

/// First partial sum of `Σ_{k>d} 1/(ρ^k − 1)` exceeding `ln(1/(2(d+1)(ρ−1)))/ln ρ`.
pub fn log_partial_sum_bound(rho: f64, d: usize) -> Result<PartialSumBound> {
    let upper = if d == 0 { 2.0 } else { 2f64.powf(1.0 / d as f64) };
    if !(rho > 1.0 && rho < upper) {
        return Err(Error::Precondition(format!("need 1 < rho < {upper}, got {rho}")));
    }
    let rhs = (1.0 / (2.0 * (d + 1) as f64 * (rho - 1.0))).ln() / rho.ln();
    let mut sum = 0.0;
    let mut k = d + 1;
    loop {
        let term = 1.0 / (rho.powi(k as i32) - 1.0);
        sum += term;
        if sum > rhs {
            return Ok(PartialSumBound {
                lhs_partial: sum,
                rhs,
                k_star: Some(k),
            });
        }
        if term < 1e-18 * sum || k > 1_000_000 {
            return Ok(PartialSumBound {
                lhs_partial: sum,
                rhs,
                k_star: None,
            });
        }
        k += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentBounds {
    pub m1: f64,
    /// `None` when `ρ₊ ≥ 2^{1/d}`.
    pub first_moment_bound: Option<f64>,
    /// `(r, r(1 − Ω₂ν_max K⁺ r))` up to the first nonpositive value.
    pub moment_curve: Vec<(usize, f64)>,
    pub pass: bool,
}

pub fn moment_curve_bound(r: f64, nu_max: f64, consts: &ScalingConstants) -> f64 {
    r * (1.0 - consts.omega2 * nu_max * consts.k_plus() * r)
}

pub fn moment_lower_bounds(pair: &SequencePair, consts: &ScalingConstants) -> Result<MomentBounds> {
    let verdict = validate_scaling(pair, consts)?;
    if !verdict.pass() {
        return Err(Error::Scaling(format!("{verdict:?}")));
    }
    let (m1, _) = moments(pair)?;
    let nu_max = pair.nu_max(consts.d)?;
    let upper = if consts.d == 0 {
        2.0
    } else {
        2f64.powf(1.0 / consts.d as f64)
    };
    let first_moment_bound = (consts.rho_plus < upper).then(|| {
        nu_max / 2.0
            * consts.omega1
            * (1.0 / consts.k_plus())
            * (1.0 / (2.0 * (consts.d + 1) as f64 * (consts.rho_plus - 1.0))).ln()
    });
    let mut curve = Vec::new();
    for r in 1..=10_000usize {
        let b = moment_curve_bound(r as f64, nu_max, consts);
        curve.push((r, b));
        if b <= 0.0 {
            break;
        }
    }
    let best = curve
        .iter()
        .map(|&(_, b)| b)
        .chain(first_moment_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MomentBounds {
        m1,
        first_moment_bound,
        moment_curve: curve,
        pass: m1 >= best - 1e-9 * best.abs().max(1.0),
    })
}

/// `ρ = 1 + exp(−64(Ω₂/Ω₁)E²C) / (2(d+1))`, kept in high precision because it underflows `f64`.
pub fn choose_rho(e: f64, omega1: f64, omega2: f64, c: f64, d: usize) -> Result<Real> {
    if !(e > 0.0 && omega1 > 0.0 && omega2 > 0.0 && c >= 1.0) {
        return Err(Error::InvalidArgument(
            "E, Omega1, Omega2 must be positive and C >= 1".into(),
        ));
    }
    let exponent = -64.0 * (omega2 / omega1) * e * e * c;
    // enough bits to keep 1 + e^exponent distinguishable from 1
    let prec = 256 + (-exponent / std::f64::consts::LN_2).ceil().min(1e7) as u32;
    let small = Real::from_float(Float::with_val(prec, exponent), false).exp();
    let rho = &Real::one(prec) + &(&small / &Real::from_i64(2 * (d as i64 + 1), prec));
    Ok(rho)
}

/// A random pair satisfying the scaling condition, with constants fitted to it.
pub fn random_scaling_pair(seed: u64) -> Result<(SequencePair, ScalingConstants)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = rng.random_range(1.05..1.6);
    let hi = rng.random_range(lo..1.9f64);
    let len = rng.random_range(5..30usize);
    let mut a = vec![1.0f64];
    for _ in 1..len {
        let r = rng.random_range(lo..=hi);
        a.push(a.last().unwrap() / r);
    }
    let q = 1.0 / rng.random_range(lo..=hi);
    let a = Sequence::new(0, a, Tail::Geometric(q))?;
    let mut nu: Vec<f64> = (1..len).map(|i| a.values[i] * rng.random_range(1.0..3.0)).collect();
    let tail_head = a.get(len)? * rng.random_range(1.0..3.0);
    nu.push(tail_head);
    let mass = nu.iter().sum::<f64>() + tail_head * q / (1.0 - q);
    for v in nu.iter_mut() {
        *v /= mass;
    }
    let nu = Sequence::new(1, nu, Tail::Geometric(q))?;
    let pair = SequencePair::new(a, nu)?;

    let d = rng.random_range(0..=2usize);
    let consts = fit_constants(&pair, d, 2)?;
    Ok((pair, consts))
}

/// Tightest constants (up to a relative slack of 1e-9) for which `pair` satisfies the
/// scaling condition with the given `d` and `k₀`.
/// `Ω₁` is floored at the smallest positive `f64` when some `ν_{k+1}` with `k ≥ d` vanishes,
/// so that the lower transition bound then reports the violation.
pub fn fit_constants(pair: &SequencePair, d: usize, k0: usize) -> Result<ScalingConstants> {
    let n = pair.check_limit();
    let mut rmin = f64::INFINITY;
    let mut rmax = 0.0f64;
    for j in 0..=n {
        let r = pair.a.sum_from(j)? / pair.a.sum_from(j + 1)?;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let nu_max = pair.nu_max(d)?;
    let a0 = pair.a.get(0)?;
    let a1 = pair.a.get(1)?;
    let mut om1 = f64::INFINITY;
    let mut om2 = 0.0f64;
    let mut head = pair.a.get(0)?;
    for k in 0..=n {
        let next = head + pair.a.get(k + 1)?;
        let ratio = pair.nu.get(k + 1)? / pair.a.get(k + 1)?;
        if k >= d {
            om1 = om1.min(ratio / ((a0 / head) * (nu_max / next)));
        }
        om2 = om2.max(ratio * a1 / nu_max);
        head = next;
    }
    let rho_minus = rmin * (1.0 - 1e-9);
    let rho_plus = rmax * (1.0 + 1e-9);
    let kp = (rho_plus - 1.0) * rho_minus / ((rho_minus - 1.0) * rho_plus);
    let c = ((rho_plus - 1.0) / (rho_minus - 1.0)).max(kp) * (1.0 + 1e-9);
    ScalingConstants::new(
        rho_minus,
        rho_plus,
        (om1 * (1.0 - 1e-9)).max(f64::MIN_POSITIVE),
        om2 * (1.0 + 1e-9),
        c,
        d,
        k0,
    )
}
