//! Cutting times, closest returns and the parameter solver for Fibonacci combinatorics.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{FibMap, Side};
use crate::real::{PrecisionPolicy, Real};

/// Cutting times `S_0 = 1, S_1 = 2, S_{k+1} = S_k + S_{k−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CuttingTimes(pub Vec<usize>);

impl CuttingTimes {
    pub fn get(&self, k: usize) -> usize {
        self.0[k]
    }

    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("cutting times are never empty")
    }
}

pub fn fibonacci_times(k: usize) -> Result<CuttingTimes> {
    if k < 1 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let mut s = vec![1usize, 2];
    while s.len() <= k {
        let n = s.len();
        s.push(s[n - 1] + s[n - 2]);
    }
    Ok(CuttingTimes(s))
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosestReturnRecord {
    pub time: usize,
    pub point: Real,
    pub distance: Real,
    pub side: Side,
}

/// Times `1 ≤ n ≤ N` at which `|c_n − c|` beats every earlier positive time.
pub fn closest_returns(f: &FibMap, n: usize) -> Result<Vec<ClosestReturnRecord>> {
    if n < 1 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let c = f.critical_point().clone();
    let mut records: Vec<ClosestReturnRecord> = Vec::new();
    let mut x = c.clone();
    for time in 1..=n {
        x = f.eval(&x)?;
        let distance = (&x - &c).abs();
        let better = match records.last() {
            None => true,
            Some(best) => distance.cmp_checked(&best.distance)? == Ordering::Less,
        };
        if better {
            let side = f.side(&x)?;
            records.push(ClosestReturnRecord {
                time,
                point: x.clone(),
                distance,
                side,
            });
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SideVerdict {
    pub ok: bool,
    pub first_violation: Option<usize>,
}

/// Checks that `d_{n+2}` and `d_n` lie on opposite sides of `c` for every `n`.
pub fn side_pattern(sides: &[Side]) -> Result<SideVerdict> {
    if sides.len() < 4 {
        return Err(Error::InsufficientDepth(format!(
            "side pattern needs at least 4 levels, got {}",
            sides.len()
        )));
    }
    let first_violation = (0..sides.len() - 2).find(|&n| sides[n + 2] != sides[n].flip());
    Ok(SideVerdict {
        ok: first_violation.is_none(),
        first_violation,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub expected: usize,
    pub observed: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CombinatoricsVerdict {
    pub ok: bool,
    pub depth_reached: usize,
    pub first_violation: Option<Violation>,
    pub side_pattern_ok: Option<bool>,
}

/// Whether the closest returns up to `S_K` are exactly `S_0, …, S_K` with the alternating side pattern.
pub fn is_fibonacci_to_depth(f: &FibMap, k: usize) -> Result<CombinatoricsVerdict> {
    if k < 2 {
        return Err(Error::InvalidArgument("depth must be at least 2".into()));
    }
    let s = fibonacci_times(k)?;
    let records = closest_returns(f, s.last())?;
    let mut matched = 0usize;
    let mut first_violation = None;
    for (i, &expected) in s.0.iter().enumerate() {
        let observed = records.get(i).map(|r| r.time);
        if observed == Some(expected) {
            matched = i + 1;
        } else {
            first_violation = Some(Violation { expected, observed });
            break;
        }
    }
    if first_violation.is_none() && records.len() > s.0.len() {
        first_violation = Some(Violation {
            expected: s.last(),
            observed: Some(records[s.0.len()].time),
        });
    }
    let depth_reached = matched.saturating_sub(1);
    let side_pattern_ok = if first_violation.is_none() && records.len() >= 4 {
        let sides: Vec<Side> = records.iter().map(|r| r.side).collect();
        Some(side_pattern(&sides)?.ok)
    } else {
        None
    };
    let ok = first_violation.is_none() && side_pattern_ok != Some(false);
    Ok(CombinatoricsVerdict {
        ok,
        depth_reached: if ok { k } else { depth_reached },
        first_violation,
        side_pattern_ok,
    })
}

/// First `len` symbols of the itinerary of `c_1` for the Fibonacci map
/// (kneading map `Q(k) = max(k − 2, 0)`).
pub fn fibonacci_kneading(len: usize) -> Vec<Side> {
    let mut nu = vec![Side::Right];
    let mut k = 1usize;
    let mut s_prev = 1usize;
    let mut s_cur = 2usize;
    let times = |j: usize| -> usize {
        let (mut a, mut b) = (1usize, 2usize);
        for _ in 0..j {
            let c = a + b;
            a = b;
            b = c;
        }
        a
    };
    while nu.len() < len {
        let q = k.saturating_sub(2);
        let sq = times(q);
        for i in 0..sq {
            let sym = if i + 1 == sq { nu[i].flip() } else { nu[i] };
            nu.push(sym);
        }
        debug_assert_eq!(nu.len(), s_cur);
        k += 1;
        let next = s_prev + s_cur;
        s_prev = s_cur;
        s_cur = next;
    }
    nu.truncate(len);
    nu
}

/// Order of `c_1`'s itinerary against `target` in the unimodal (signed lexicographic) order.
pub fn itinerary_order(f: &FibMap, target: &[Side]) -> Result<Ordering> {
    let mut x = f.critical_point().clone();
    let mut odd = false;
    for &want in target {
        x = f.eval(&x)?;
        let got = f.side(&x)?;
        if got != want {
            let plain = if got == Side::Right {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            return Ok(if odd { plain.reverse() } else { plain });
        }
        if got == Side::Right {
            odd = !odd;
        }
    }
    Ok(Ordering::Equal)
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub ell: Real,
    #[serde(rename = "K")]
    pub depth: usize,
    pub lambda_star: Real,
    pub precision_bits: u32,
    pub bracket_width: Real,
    pub target_length: usize,
    pub verdict: CombinatoricsVerdict,
}

impl SolveResult {
    pub fn map(&self) -> FibMap {
        FibMap::new(self.lambda_star.clone(), self.ell.with_prec(self.precision_bits))
            .expect("solver returns a valid parameter")
    }
}

/// Bisection in `λ` on the kneading order until the Fibonacci itinerary of
/// length `S_{K+4}` is matched; ties go to the larger parameter.
pub fn solve_parameter(ell: &Real, k: usize, policy: &PrecisionPolicy) -> Result<SolveResult> {
    if k < 2 {
        return Err(Error::InvalidArgument("depth must be at least 2".into()));
    }
    if ell.cmp_raw(&Real::from_i64(2, 64)) == Ordering::Less {
        return Err(Error::InvalidArgument("critical order must be at least 2".into()));
    }
    let target_length = fibonacci_times(k + 4)?.last();
    let target = fibonacci_kneading(target_length);
    let mut bits = policy.start_bits;
    let order_at = |lambda: &Real, bits: &mut u32| -> Result<Ordering> {
        loop {
            let f = FibMap::new(lambda.with_prec(*bits), ell.with_prec(*bits))?;
            match itinerary_order(&f, &target) {
                Err(e) if e.is_precision() && *bits < policy.cap_bits => {
                    *bits = (*bits * 2).min(policy.cap_bits);
                }
                other => return other,
            }
        }
    };
    let mut lo = Real::from_f64(0.75, bits);
    let mut hi = Real::one(bits);
    if order_at(&lo, &mut bits)? != Ordering::Less || order_at(&hi, &mut bits)? != Ordering::Greater {
        return Err(Error::NotFound(
            "initial bracket [0.75, 1] does not straddle the target".into(),
        ));
    }
    let stop = Real::one(64).mul_pow2(-((policy.start_bits / 2) as i32));
    while (&hi - &lo).cmp_raw(&stop) == Ordering::Greater {
        let mid = (&lo.with_prec(bits) + &hi.with_prec(bits)).mul_pow2(-1);
        match order_at(&mid, &mut bits)? {
            Ordering::Greater => hi = mid,
            _ => lo = mid,
        }
    }
    let width = &hi - &lo;
    let f = FibMap::new(lo.with_prec(bits), ell.with_prec(bits))?;
    let verdict = policy.run(|b| is_fibonacci_to_depth(&f.with_precision(b.max(bits)), k))?;
    if !verdict.ok {
        return Err(Error::NotFound(format!(
            "bracket collapsed without Fibonacci combinatorics to depth {k}: {verdict:?}"
        )));
    }
    Ok(SolveResult {
        ell: ell.with_prec(bits),
        depth: k,
        lambda_star: lo.with_prec(bits),
        precision_bits: bits,
        bracket_width: width,
        target_length,
        verdict,
    })
}
