//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fibwalk_core::{FibMap, Real};

/// Fibonacci kneading word built from `W_k = W_{k−1} · W_{k−2}` with the last symbol of `W_{k−2}` flipped.
fn kneading_word(len: usize) -> Vec<bool> {
    let mut prev: Vec<bool> = vec![true];
    let mut cur: Vec<bool> = vec![true, false];
    while cur.len() < len {
        let mut next = cur.clone();
        next.extend_from_slice(&prev);
        let last = next.len() - 1;
        next[last] = !next[last];
        prev = cur;
        cur = next;
    }
    cur.truncate(len);
    cur
}

/// Number of leading symbols of c_1's itinerary that agree with the target (true = right of c).
fn prefix_score(lambda: &Real, ell: &Real, target: &[bool]) -> usize {
    let f = FibMap::new(lambda.clone(), ell.clone()).unwrap();
    let half = Real::half(lambda.prec());
    let mut x = half.clone();
    for (i, &want) in target.iter().enumerate() {
        x = f.eval(&x).unwrap();
        if (x > half) != want {
            return i;
        }
    }
    target.len()
}

/// Grid scan plus recursive refinement around the best-scoring grid points.
pub fn grid_oracle(ell: f64, len: usize, resolution: f64) -> Real {
    let prec = 256;
    let ell = Real::from_f64(ell, prec);
    let target = kneading_word(len);
    let mut lo = Real::from_f64(0.9, prec);
    let mut hi = Real::one(prec);
    let points = 40;
    while (&hi - &lo).to_f64() > resolution {
        let step = &(&hi - &lo) / &Real::from_i64(points, prec);
        let mut best = 0;
        let mut first = None;
        let mut last = None;
        for i in 0..=points {
            let x = &lo + &(&step * &Real::from_i64(i, prec));
            let s = prefix_score(&x, &ell, &target);
            if s > best {
                best = s;
                first = Some(x.clone());
                last = Some(x);
            } else if s == best {
                last = Some(x);
            }
        }
        let (a, b) = (first.unwrap(), last.unwrap());
        if best == len {
            return (&a + &b).mul_pow2(-1);
        }
        lo = &a - &step;
        hi = &b + &step;
    }
    (&lo + &hi).mul_pow2(-1)
}

/// Direct summation of both sides, independent of the library.
pub fn summation_oracle(q: &[f64], d: usize, n: usize) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for j in d + 1..n {
        let (a, b) = (q[j - 1], q[j]);
        lhs += j as f64 * (b - a) / (a * b);
        rhs += (q[n - 1] - a) / (q[n - 1] * a);
    }
    (lhs, rhs)
}
