use std::time::Instant;

use fibwalk_core::combinatorics::{closest_returns, fibonacci_times, is_fibonacci_to_depth, solve_parameter};
use fibwalk_core::{PrecisionPolicy, Real};

mod common;

use common::grid_oracle;

#[test]
fn solver_matches_grid_oracle_quadratic_depth_12() {
    let start = Instant::now();
    let sol = solve_parameter(&Real::from_f64(2.0, 256), 12, &PrecisionPolicy::default()).unwrap();
    let elapsed = start.elapsed();
    assert!(sol.verdict.ok);
    assert!(elapsed.as_secs() < 120, "solver took {elapsed:?}");
    let lam = sol.lambda_star.to_f64();
    assert!(lam > 0.9 && lam < 1.0);
    let oracle = grid_oracle(2.0, fibonacci_times(16).unwrap().last(), 1e-18);
    let gap = (&sol.lambda_star - &oracle).abs().to_f64();
    assert!(
        gap < 1e-15,
        "solver {} vs oracle {}: gap {gap:e}",
        sol.lambda_star,
        oracle
    );
}

#[test]
fn solved_map_has_fibonacci_closest_returns() {
    let sol = solve_parameter(&Real::from_f64(2.0, 256), 10, &PrecisionPolicy::default()).unwrap();
    let f = sol.map();
    let s = fibonacci_times(10).unwrap();
    let times: Vec<usize> = closest_returns(&f, s.last()).unwrap().iter().map(|r| r.time).collect();
    assert_eq!(times, s.0);
    assert!(is_fibonacci_to_depth(&f, 10).unwrap().ok);
    let rec = closest_returns(&f, s.last()).unwrap();
    for n in 0..rec.len() - 1 {
        let reflected = f.hat(&rec[n].point);
        let (a, b) = if reflected < rec[n].point {
            (reflected, rec[n].point.clone())
        } else {
            (rec[n].point.clone(), reflected)
        };
        assert!(rec[n + 1].point > a && rec[n + 1].point < b, "nesting at n={n}");
    }
}

#[test]
fn solver_handles_high_order() {
    let sol = solve_parameter(&Real::from_f64(16.0, 256), 10, &PrecisionPolicy::default()).unwrap();
    assert!(sol.verdict.ok);
}

#[test]
fn solver_is_stable_under_doubled_precision() {
    let ell = Real::from_f64(2.0, 512);
    let a = solve_parameter(&ell, 8, &PrecisionPolicy::new(256, 16384)).unwrap();
    let b = solve_parameter(&ell, 8, &PrecisionPolicy::new(512, 16384)).unwrap();
    let gap = (&a.lambda_star - &b.lambda_star).abs();
    assert!(gap <= a.bracket_width.max(&b.bracket_width), "gap {gap:?}");
}
