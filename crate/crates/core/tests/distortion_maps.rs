use std::cmp::Ordering;

use fibwalk_core::combinatorics::{fibonacci_times, solve_parameter};
use fibwalk_core::distortion::{
    collared_configuration, cross_ratio, cross_ratio_distortion, image_scaling, koebe_check, koebe_check_sampled,
    monotone_branch, orbit_length_sum, random_trials, CrossConfig,
};
use fibwalk_core::nest::build_nest;
use fibwalk_core::{FibMap, IntervalR, PrecisionPolicy, Real};

fn solved(ell: f64, k: usize) -> FibMap {
    solve_parameter(&Real::from_f64(ell, 256), k, &PrecisionPolicy::default())
        .unwrap()
        .map()
}

#[test]
fn random_configurations_expand_cross_ratios() {
    for ell in [2.0, 8.0, 16.0] {
        let f = solved(ell, 10);
        let trials = random_trials(&f, 30, 1000, 7).unwrap();
        assert_eq!(trials.len(), 1000);
        for t in &trials {
            let b = t.record.b_value.to_f64();
            assert!(b >= 1.0 - 1e-12, "ell={ell} trial {} n={}: B={b}", t.trial, t.n);
            assert!(t.double.pass, "ell={ell} trial {}: {:?}", t.trial, t.double);
        }
    }
}

#[test]
fn trials_are_reproducible() {
    let f = solved(2.0, 8);
    let a = random_trials(&f, 20, 50, 99).unwrap();
    let b = random_trials(&f, 20, 50, 99).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.n, y.n);
        assert_eq!(x.record.b_value.to_decimal(), y.record.b_value.to_decimal());
    }
}

#[test]
fn distortion_is_multiplicative_along_the_orbit() {
    let f = solved(2.0, 10);
    let x = Real::from_f64(0.3141, 256);
    let n = 12;
    let branch = monotone_branch(&f, n, &x).unwrap();
    let at = |u: f64| &branch.lo + &(&branch.len() * &Real::from_f64(u, 256));
    let mut pts = [at(0.1), at(0.3), at(0.6), at(0.9)];
    let whole = CrossConfig::new(
        IntervalR::new(pts[0].clone(), pts[3].clone()).unwrap(),
        IntervalR::new(pts[1].clone(), pts[2].clone()).unwrap(),
    )
    .unwrap();
    let total = cross_ratio_distortion(&f, n, &whole).unwrap().b_value;
    let mut product = Real::one(256);
    for _ in 0..n {
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cfg = CrossConfig::new(
            IntervalR::new(sorted[0].clone(), sorted[3].clone()).unwrap(),
            IntervalR::new(sorted[1].clone(), sorted[2].clone()).unwrap(),
        )
        .unwrap();
        product = &product * &cross_ratio_distortion(&f, 1, &cfg).unwrap().b_value;
        for p in pts.iter_mut() {
            *p = f.eval(p).unwrap();
        }
    }
    assert!(total.rel_diff(&product) < 2f64.powi(-64), "{total} vs {product}");
    let _ = cross_ratio(&whole).unwrap();
}

fn koebe_configuration(f: &FibMap, n: usize, x: &Real, tau: f64) -> (IntervalR, IntervalR) {
    collared_configuration(f, n, x, tau).unwrap()
}

#[test]
fn koebe_bound_holds_for_several_scalings() {
    let f = solved(2.0, 10);
    let s = fibonacci_times(10).unwrap();
    let c1 = f.critical_value().clone();
    for k in [4, 6, 8] {
        for tau in [0.5, 1.0, 2.0] {
            let (j, t) = koebe_configuration(&f, s.get(k) - 1, &c1, tau);
            let r = koebe_check(&f, s.get(k) - 1, &j, &t, &Real::from_f64(tau, 256)).unwrap();
            assert!(r.pass, "k={k} tau={tau}: ratio {} bound {}", r.ratio, r.bound);
        }
    }
}

#[test]
fn koebe_sampling_is_stable_under_refinement() {
    let f = solved(2.0, 10);
    let s = fibonacci_times(10).unwrap();
    let n = s.get(7) - 1;
    let (j, t) = koebe_configuration(&f, n, f.critical_value(), 1.0);
    let tau = Real::one(256);
    let coarse = koebe_check(&f, n, &j, &t, &tau).unwrap();
    let fine = koebe_check_sampled(&f, n, &j, &t, &tau, 4096).unwrap();
    assert!(coarse.ratio.rel_diff(&fine.ratio) < 1e-6);
}

#[test]
fn koebe_rejects_missing_collar() {
    let f = solved(2.0, 8);
    let (j, t) = koebe_configuration(&f, 4, f.critical_value(), 0.5);
    let err = koebe_check(&f, 4, &j, &t, &Real::from_f64(4.0, 256)).unwrap_err();
    assert!(matches!(err, fibwalk_core::Error::Precondition(_)));
}

#[test]
fn koebe_on_nest_branches() {
    let f = solved(2.0, 12);
    let nest = build_nest(&f, 12).unwrap();
    for level in &nest.levels[4..] {
        let t_f = level.t_f.as_ref().unwrap();
        let t = IntervalR::spanning(&level.z_f, t_f).unwrap();
        let third = &t.len() / &Real::from_i64(3, 256);
        let j = IntervalR::new(&t.lo + &third, &t.hi - &third).unwrap();
        let n = level.s_n - 1;
        let tau = image_scaling(&f, n, &CrossConfig::new(t.clone(), j.clone()).unwrap()).unwrap();
        let r = koebe_check(&f, n, &j, &t, &tau).unwrap();
        assert!(r.pass, "level {}: ratio {} bound {}", level.n, r.ratio, r.bound);
    }
}

#[test]
fn branches_match_nest_boundaries() {
    let f = solved(2.0, 12);
    let nest = build_nest(&f, 12).unwrap();
    let mut previous_max: Option<Real> = None;
    for level in &nest.levels[4..] {
        let n = level.s_n - 1;
        let branch = monotone_branch(&f, n, f.critical_value()).unwrap();
        let t_f = level.t_f.as_ref().unwrap();
        let near = |p: &Real| (p - t_f).abs().to_f64() < 1e-40;
        assert!(near(&branch.lo) || near(&branch.hi), "level {}", level.n);
        assert!(branch.contains(&level.z_f));

        let (_, max) = orbit_length_sum(&f, n, &branch).unwrap();
        if let Some(p) = &previous_max {
            assert!(max.cmp_raw(p) != Ordering::Greater, "level {}", level.n);
        }
        previous_max = Some(max);
    }
}

#[test]
fn branch_interiors_avoid_precritical_points() {
    let f = solved(2.0, 10);
    let x = Real::from_f64(0.2718, 256);
    for n in [1, 5, 13, 40] {
        let branch = monotone_branch(&f, n, &x).unwrap();
        let reference: Vec<_> = f.orbit(&x, n).unwrap().iter().map(|y| f.side(y).unwrap()).collect();
        for k in 1..=64 {
            let u = Real::from_f64(k as f64 / 65.0, 256);
            let y = &branch.lo + &(&branch.len() * &u);
            let orbit = f.orbit(&y, n).unwrap();
            for i in 0..n {
                assert_eq!(f.side(&orbit[i]).unwrap(), reference[i], "n={n} sample {k} step {i}");
            }
        }
    }
}
