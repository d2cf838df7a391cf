use std::cmp::Ordering;

use fibwalk_core::combinatorics::solve_parameter;
use fibwalk_core::nest::{build_nest, lambda_check, ScalingReport};
use fibwalk_core::{FibMap, PrecisionPolicy, Real};

fn solved(ell: f64, k: usize) -> FibMap {
    solve_parameter(&Real::from_f64(ell, 256), k, &PrecisionPolicy::default())
        .unwrap()
        .map()
}

#[test]
fn levels_are_ordered_towards_the_critical_point() {
    let f = solved(2.0, 12);
    let nest = build_nest(&f, 12).unwrap();
    let c = f.critical_point();
    let dist = |x: &Real| (x - c).abs();
    for n in 1..12 {
        let l = &nest.levels[n];
        let z_prev = dist(&nest.levels[n - 1].z);
        assert_eq!(dist(&l.d).cmp_raw(&z_prev), Ordering::Greater, "d_{n} vs z_{}", n - 1);
        assert_eq!(z_prev.cmp_raw(&dist(&l.u)), Ordering::Greater, "z_{} vs u_{n}", n - 1);
        assert_eq!(
            dist(&l.u).cmp_raw(&dist(&nest.levels[n + 1].d)),
            Ordering::Greater,
            "u_{n} vs d_{}",
            n + 1
        );
    }
}

#[test]
fn precritical_points_map_back_to_the_critical_point() {
    let f = solved(2.0, 10);
    let nest = build_nest(&f, 10).unwrap();
    for l in &nest.levels {
        let image = f.iterate(&l.z, l.s_n).unwrap();
        assert!((&image - f.critical_point()).abs().to_f64() < 1e-30, "level {}", l.n);
        assert_eq!(f.eval(&l.z).unwrap().to_f64(), l.z_f.to_f64());
        assert_eq!(l.d.to_f64(), f.iterate(f.critical_point(), l.s_n).unwrap().to_f64());
    }
}

#[test]
fn distances_shrink_monotonically() {
    let f = solved(2.0, 12);
    let nest = build_nest(&f, 12).unwrap();
    for w in nest.levels.windows(2) {
        assert!(w[1].dist_d_f < w[0].dist_d_f);
    }
    // u_1 is the reflection of u_0, so the u-distances only shrink from level 1 on
    assert_eq!(nest.levels[0].dist_u_f.to_f64(), nest.levels[1].dist_u_f.to_f64());
    for w in nest.levels[1..].windows(2) {
        assert!(w[1].dist_u_f < w[0].dist_u_f);
    }
}

#[test]
fn quadratic_report_rows_hold() {
    let f = solved(2.0, 14);
    let nest = build_nest(&f, 14).unwrap();
    let report = ScalingReport::build(&f, &nest).unwrap();
    for row in report.deepest_rows(3) {
        println!("{} n={} margin={}", row.name, row.n, row.margin.to_decimal_digits(6));
        assert!(row.precondition, "{} at n={}", row.name, row.n);
        assert!(row.pass, "{} at n={} margin {}", row.name, row.n, row.margin);
    }
    assert!(lambda_check(&report.levels, 14).unwrap().pass);
    assert!(report.lambda_threshold.is_some_and(|n| n <= 11));
    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert!(csv.starts_with("n,S_n,side,"));
}
