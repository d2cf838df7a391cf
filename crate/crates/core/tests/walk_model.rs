use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fibwalk_core::walk::sim::inverse_square_tail;

use fibwalk_core::walk::{
    derived_bounds, log_partial_sum_bound, moment_lower_bounds, random_scaling_pair, simulate_walk,
    summation_by_parts_check, validate_scaling, IncrementLaw, ScalingConstants, Sequence, SequencePair, SumEnd, Tail,
    WalkConfig,
};

mod common;

use common::summation_oracle;

#[test]
fn random_valid_pairs_satisfy_the_derived_bounds() {
    for seed in 0..1000 {
        let (pair, consts) = random_scaling_pair(seed).unwrap();
        assert!(validate_scaling(&pair, &consts).unwrap().pass(), "seed {seed}");
        let b = derived_bounds(&pair, &consts).unwrap();
        assert!(b.pass(), "seed {seed}: {b:?}");
        let m = moment_lower_bounds(&pair, &consts).unwrap();
        assert!(m.pass, "seed {seed}: {m:?}");
    }
}

#[test]
fn summation_by_parts_on_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let mut q = vec![rng.random_range(0.1..2.0)];
        for _ in 1..30 {
            let step: f64 = rng.random_range(1e-3..1.0);
            q.push(q.last().unwrap() + step);
        }
        let d = rng.random_range(0..=2);
        let r = summation_by_parts_check(&q, d, SumEnd::Finite(30)).unwrap();
        let (lhs, rhs) = summation_oracle(&q, d, 30);
        assert!((r.lhs - lhs).abs() <= 1e-12 * lhs.abs());
        assert!((r.rhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        // the two sides differ by d/q(d+1) − d/q(n), so d = 0 is an equality up to rounding
        assert!(r.pass && lhs >= rhs * (1.0 - 1e-12));
    }
}

#[test]
fn partial_sums_beat_the_logarithmic_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let d = rng.random_range(0..=4usize);
        let upper = if d == 0 { 2.0 } else { 2f64.powf(1.0 / d as f64) };
        let rho = rng.random_range(1.0005..upper);
        let b = log_partial_sum_bound(rho, d).unwrap();
        let k = b.k_star.expect("partial sum exceeds the bound");
        let oracle: f64 = (d + 1..=k).map(|i| 1.0 / (rho.powi(i as i32) - 1.0)).sum();
        assert!((oracle - b.lhs_partial).abs() < 1e-9 * oracle);
        assert!(oracle > b.rhs);
    }
}

#[test]
fn first_moment_beats_the_big_bound_on_extremal_pairs() {
    // geometric a and ν_{k+1}/a_{k+1} equal to the lower transition bound for k ≥ d
    let rho: f64 = 1.3;
    let len = 40;
    let a: Vec<f64> = (0..len).map(|i| rho.powi(-(i as i32))).collect();
    let a = Sequence::new(0, a, Tail::Geometric(1.0 / rho)).unwrap();
    let head = |k: usize| a.sum_to(k).unwrap();
    let raw: Vec<f64> = (0..len - 1)
        .map(|k| a.get(k + 1).unwrap() / (head(k) * head(k + 1)))
        .collect();
    let tail_first = a.get(len).unwrap() / (head(len - 1) * head(len));
    let q = 1.0 / rho;
    let mut w = raw.clone();
    w.push(tail_first);
    let total: f64 = w.iter().sum::<f64>() + tail_first * q / (1.0 - q);
    let nu: Vec<f64> = w.iter().map(|x| x / total).collect();
    let pair = SequencePair::new(a, Sequence::new(1, nu.clone(), Tail::Geometric(q)).unwrap()).unwrap();
    let nu_max = nu[0];
    let omega1 = total / (nu_max * total) * (1.0 - 1e-9);
    let consts = ScalingConstants::new(rho * (1.0 - 1e-9), rho * (1.0 + 1e-9), omega1, 10.0, 1.01, 0, 2).unwrap();
    let v = validate_scaling(&pair, &consts).unwrap();
    assert!(v.pass(), "{v:?}");
    let m = moment_lower_bounds(&pair, &consts).unwrap();
    assert!(m.m1 >= m.first_moment_bound.unwrap(), "{m:?}");
}

fn acceptance_law() -> IncrementLaw {
    IncrementLaw::from_weights(vec![0.0, 0.0, 0.1, 0.85, 0.025], Some(0.5)).unwrap()
}

#[test]
fn escape_with_unit_drift() {
    let law = acceptance_law();
    let cfg = WalkConfig {
        k0: 2,
        r0: 5,
        s: 45,
        horizon: 2000,
        n_walkers: 10_000,
        seed: 2024,
        keep_traces: 0,
    };
    assert!(law.m2() * inverse_square_tail(cfg.s - cfg.r0) < 0.5);
    let r = simulate_walk(&law, &cfg).unwrap();
    assert!(r.escape_fraction >= 0.5 - 3.0 * r.escape_sigma);
    assert!(r.slope_quantiles.as_ref().unwrap().min >= 0.9);
    assert_eq!(r.doob_violations, 0);
    assert!(r.min_predictable_increment.unwrap().to_f64() >= 1.0);
    assert!(r.mean_sq_martingale_increment <= law.m2() + 0.05);
    for (bin, stats) in &r.level_bins {
        if stats.count < 1000 {
            continue;
        }
        let se = (stats.mean_sq() / stats.count as f64).sqrt();
        assert!(stats.mean().abs() <= 4.0 * se, "bin {bin}: {} vs {se}", stats.mean());
    }
}

#[test]
fn simulations_are_reproducible() {
    let law = acceptance_law();
    let cfg = WalkConfig {
        k0: 2,
        r0: 0,
        s: 3,
        horizon: 200,
        n_walkers: 500,
        seed: 77,
        keep_traces: 3,
    };
    let a = serde_json::to_string(&simulate_walk(&law, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&simulate_walk(&law, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
