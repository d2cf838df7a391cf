//! Annuli of the principal nest, the induced maps `f^{S_k}` and Monte Carlo walks on levels.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distortion::monotone_branch;
use crate::error::{Error, Result};
use crate::map::{FibMap, IntervalR};
use crate::nest::NestLevel;
use crate::real::Real;
use crate::walk::scaling::ScalingVerdict;
use crate::walk::{fit_constants, validate_scaling, ScalingConstants, Sequence, SequencePair, Tail};

/// Levels may drop by at most this much under one induced step.
pub const K0: usize = 2;

#[derive(Clone, Debug, Serialize)]
pub struct Annulus {
    pub k: usize,
    #[serde(rename = "S_k")]
    pub s_k: usize,
    pub left: IntervalR,
    pub right: IntervalR,
    pub length: Real,
}

/// `A_k = (u_k, û_k) \ (u_{k+1}, û_{k+1})` for `1 ≤ k < K`; the core is `(u_K, û_K)`.
///
/// Level 0 means outside `(u_1, û_1)`; level `K` means the core.
#[derive(Clone, Debug, Serialize)]
pub struct AnnulusPartition {
    pub depth: usize,
    pub radii: Vec<Real>,
    pub levels: Vec<Annulus>,
    pub core_length: Real,
    #[serde(skip)]
    c: Real,
}

impl AnnulusPartition {
    pub fn annulus(&self, k: usize) -> Result<&Annulus> {
        if k == 0 || k >= self.depth {
            return Err(Error::OutOfDepth(format!("annulus {k} outside 1..{}", self.depth)));
        }
        Ok(&self.levels[k - 1])
    }

    /// Level of `x`: `k` with `r_{k+1} < |x − c| < r_k`, `0` outside, `K` in the core.
    /// `None` when `x` sits on a boundary.
    pub fn level_of(&self, x: &Real) -> Option<usize> {
        let dist = (x - &self.c).abs();
        // radii[k] = r_k, strictly decreasing for k ≥ 1
        let (mut lo, mut hi) = (1usize, self.depth);
        match dist.cmp_raw(&self.radii[1]) {
            Ordering::Greater => return Some(0),
            Ordering::Equal => return None,
            Ordering::Less => {}
        }
        match dist.cmp_raw(&self.radii[self.depth]) {
            Ordering::Less => return Some(self.depth),
            Ordering::Equal => return None,
            Ordering::Greater => {}
        }
        // invariant: r_hi < dist < r_lo
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            match dist.cmp_raw(&self.radii[mid]) {
                Ordering::Less => lo = mid,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return None,
            }
        }
        Some(lo)
    }

    /// `|A_k|` for `k = first..K−1`.
    pub fn lengths(&self) -> Vec<Real> {
        self.levels.iter().map(|a| a.length.clone()).collect()
    }
}

/// Builds the annuli from the nest radii `r_k = |u_k − c|`, starting at `k = 1`
/// because `u_1` is the reflection of `u_0`.
pub fn build_annuli(f: &FibMap, nest: &[NestLevel]) -> Result<AnnulusPartition> {
    if nest.len() < 5 {
        return Err(Error::InsufficientDepth(format!(
            "need nest depth >= 4, got {}",
            nest.len().saturating_sub(1)
        )));
    }
    let depth = nest.len() - 1;
    let c = f.critical_point().clone();
    let radii: Vec<Real> = nest.iter().map(|l| (&l.u - &c).abs()).collect();
    for k in 1..depth {
        if radii[k + 1].cmp_raw(&radii[k]) != Ordering::Less {
            return Err(Error::NestingViolation(format!(
                "(u_{}, û_{}) is not inside (u_{k}, û_{k})",
                k + 1,
                k + 1
            )));
        }
    }
    let mut levels = Vec::with_capacity(depth - 1);
    for k in 1..depth {
        let left = IntervalR::open(&c - &radii[k], &c - &radii[k + 1])?;
        let right = IntervalR::open(&c + &radii[k + 1], &c + &radii[k])?;
        let length = (&radii[k] - &radii[k + 1]).mul_pow2(1);
        levels.push(Annulus {
            k,
            s_k: nest[k].s_n,
            left,
            right,
            length,
        });
    }
    Ok(AnnulusPartition {
        depth,
        core_length: radii[depth].mul_pow2(1),
        radii,
        levels,
        c,
    })
}

/// Checks that `f^{S_k}` is monotone on both components of every annulus.
pub fn verify_branches(f: &FibMap, partition: &AnnulusPartition) -> Result<()> {
    for a in &partition.levels {
        for comp in [&a.left, &a.right] {
            let branch = monotone_branch(f, a.s_k, &comp.midpoint())?;
            if branch.lo.cmp_raw(&comp.lo) == Ordering::Greater || comp.hi.cmp_raw(&branch.hi) == Ordering::Greater {
                return Err(Error::NonMonotone(format!("f^S_{} folds inside annulus {}", a.k, a.k)));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct InducedStep {
    pub x_next: Real,
    pub k_from: usize,
    pub k_to: usize,
    pub iterate_used: usize,
    pub absorbed: bool,
}

/// One step `x ↦ f^{S_k}(x)` for `x ∈ A_k`.
pub fn induced_step(f: &FibMap, partition: &AnnulusPartition, x: &Real) -> Result<InducedStep> {
    let k_from = partition
        .level_of(x)
        .ok_or_else(|| Error::OutsidePartition("point on an annulus boundary".into()))?;
    if k_from == 0 || k_from == partition.depth {
        return Err(Error::OutsidePartition(format!(
            "level {k_from} is not an annulus (outside the nest or in the core)"
        )));
    }
    let n = partition.levels[k_from - 1].s_k;
    let x_next = f.iterate(x, n)?;
    let k_to = partition
        .level_of(&x_next)
        .ok_or_else(|| Error::OutsidePartition("image on an annulus boundary".into()))?;
    if k_to + K0 < k_from {
        return Err(Error::Ordering(format!(
            "induced image dropped from level {k_from} to {k_to}, more than {K0} levels"
        )));
    }
    Ok(InducedStep {
        x_next,
        k_from,
        k_to,
        iterate_used: n,
        absorbed: k_to == partition.depth,
    })
}

fn rng_for(seed: u64, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Lebesgue-uniform point of `A_k`.
pub fn sample_annulus<R: Rng>(partition: &AnnulusPartition, k: usize, rng: &mut R) -> Result<Real> {
    let a = partition.annulus(k)?;
    let comp = if rng.random::<bool>() { &a.left } else { &a.right };
    let u: f64 = rng.random();
    Ok(&comp.lo + &(&comp.len() * &Real::from_f64(u, comp.lo.prec())))
}

/// Draws a sample of `A_k`, redrawing points whose image hits a boundary.
fn sampled_step<R: Rng>(
    f: &FibMap,
    partition: &AnnulusPartition,
    k: usize,
    rng: &mut R,
    resampled: &mut usize,
) -> Result<InducedStep> {
    loop {
        let x = sample_annulus(partition, k, rng)?;
        match induced_step(f, partition, &x) {
            Err(Error::OutsidePartition(_)) => *resampled += 1,
            other => return other,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalTransitions {
    pub r: usize,
    pub k0: usize,
    pub samples: usize,
    pub seed: u64,
    /// Target level → count; the core is counted at level `K`.
    pub counts: BTreeMap<usize, usize>,
    pub absorbed: usize,
    pub resampled: usize,
    /// `ν̂_i` for `i = target − r + k₀ + 1`, starting at `i = 1`; absorbed images excluded.
    pub nu_hat: Vec<f64>,
    pub mean_level_change: f64,
    pub level_change_sd: f64,
}

impl EmpiricalTransitions {
    pub fn m1(&self) -> f64 {
        self.nu_hat.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
    }
}

/// Tallies the levels hit by `f^{S_r}` from Lebesgue-uniform points of `A_r`.
pub fn estimate_transitions(
    f: &FibMap,
    partition: &AnnulusPartition,
    r: usize,
    samples: usize,
    seed: u64,
) -> Result<EmpiricalTransitions> {
    if r == 0 || r + 3 > partition.depth {
        return Err(Error::OutOfDepth(format!(
            "source level {r} must lie in 1..={} (the deepest two annuli are censored)",
            partition.depth.saturating_sub(3)
        )));
    }
    if samples < 1000 {
        return Err(Error::InvalidArgument("at least 1000 samples are needed".into()));
    }
    let chunk = 256;
    let parts: Vec<Result<(Vec<usize>, usize)>> = (0..samples.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut rng = rng_for(seed, ci);
            let mut resampled = 0;
            let count = chunk.min(samples - ci * chunk);
            let mut targets = Vec::with_capacity(count);
            for _ in 0..count {
                targets.push(sampled_step(f, partition, r, &mut rng, &mut resampled)?.k_to);
            }
            Ok((targets, resampled))
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut resampled = 0;
    let mut changes = Vec::with_capacity(samples);
    let mut absorbed = 0;
    for part in parts {
        let (targets, res) = part?;
        resampled += res;
        for t in targets {
            *counts.entry(t).or_insert(0) += 1;
            if t == partition.depth {
                absorbed += 1;
            } else {
                changes.push(t as f64 - r as f64);
            }
        }
    }
    let kept = changes.len();
    let top = counts
        .keys()
        .filter(|&&t| t < partition.depth)
        .max()
        .copied()
        .unwrap_or(r);
    let mut nu_hat = vec![0.0; top + K0 + 1 - r];
    for (&t, &n) in &counts {
        if t < partition.depth {
            nu_hat[t + K0 - r] = n as f64 / kept as f64;
        }
    }
    let mean = changes.iter().sum::<f64>() / kept as f64;
    let var = changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (kept.max(2) - 1) as f64;
    Ok(EmpiricalTransitions {
        r,
        k0: K0,
        samples,
        seed,
        counts,
        absorbed,
        resampled,
        nu_hat,
        mean_level_change: mean,
        level_change_sd: var.sqrt(),
    })
}

/// Measured `(a_i, ν_i)` with `a_i = |A_{r+i−k₀−1}|` and `a_0 = |A_{r−k₀−1}|`,
/// both continued geometrically from their last two terms.
pub fn measured_pair(partition: &AnnulusPartition, transitions: &EmpiricalTransitions) -> Result<SequencePair> {
    let r = transitions.r;
    if r < K0 + 2 {
        return Err(Error::OutOfDepth(format!("source level {r} leaves no annulus for a_0")));
    }
    let mut a = Vec::new();
    for level in r - K0 - 1..partition.depth {
        a.push(partition.annulus(level)?.length.to_f64());
    }
    let n = a.len();
    let qa = (a[n - 1] / a[n - 2]).min(0.999);
    let a = Sequence::new(0, a, Tail::Geometric(qa))?;
    let nu = Sequence::new(1, transitions.nu_hat.clone(), Tail::Zero)?;
    SequencePair::new(a, nu)
}

#[derive(Clone, Debug, Serialize)]
pub struct BasinConfig {
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
    pub r0: usize,
    pub start_level: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkerPath {
    pub levels: Vec<usize>,
    pub absorbed: bool,
    pub returned: bool,
    pub left_nest: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasinReport {
    pub ell: Real,
    #[serde(rename = "K")]
    pub depth: usize,
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
    pub r0: usize,
    pub start_level: usize,
    pub steps: usize,
    pub drift_mean: f64,
    pub drift_se: f64,
    pub escape_fraction: f64,
    pub recurrence_fraction: f64,
    pub absorbed_fraction: f64,
    pub left_nest_fraction: f64,
    pub median_initial_level: f64,
    pub median_terminal_level: f64,
    pub max_level_drop: i64,
    pub resampled: usize,
    #[serde(skip)]
    pub paths: Vec<WalkerPath>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Walkers start Lebesgue-uniformly in `A_start` and follow the induced map until the
/// horizon, absorption into the core, or leaving the nest.
/// A walker has returned once its level is at most `r₀` after at least one step.
pub fn montecarlo_basin(f: &FibMap, partition: &AnnulusPartition, cfg: &BasinConfig) -> Result<BasinReport> {
    if cfg.start_level <= cfg.r0 || cfg.start_level >= partition.depth {
        return Err(Error::InvalidArgument(format!(
            "start level {} must lie in ({}, {})",
            cfg.start_level, cfg.r0, partition.depth
        )));
    }
    if partition.depth < 10 {
        return Err(Error::InsufficientDepth("basin experiments need depth >= 10".into()));
    }
    let results: Vec<Result<(WalkerPath, usize)>> = (0..cfg.samples)
        .into_par_iter()
        .map(|w| {
            let mut rng = rng_for(cfg.seed, w);
            let mut resampled = 0;
            let first = sampled_step(f, partition, cfg.start_level, &mut rng, &mut resampled)?;
            let mut levels = vec![first.k_from, first.k_to];
            let mut x = first.x_next;
            let mut k = first.k_to;
            while levels.len() <= cfg.horizon && k != 0 && k != partition.depth {
                let step = induced_step(f, partition, &x)?;
                x = step.x_next;
                k = step.k_to;
                levels.push(k);
            }
            let returned = levels[1..].iter().any(|&l| l <= cfg.r0);
            Ok((
                WalkerPath {
                    absorbed: k == partition.depth,
                    left_nest: k == 0,
                    returned,
                    levels,
                },
                resampled,
            ))
        })
        .collect();
    let mut paths = Vec::with_capacity(cfg.samples);
    let mut resampled = 0;
    for r in results {
        let (p, n) = r?;
        resampled += n;
        paths.push(p);
    }
    let changes: Vec<f64> = paths
        .iter()
        .flat_map(|p| p.levels.windows(2).map(|w| w[1] as f64 - w[0] as f64))
        .collect();
    let steps = changes.len();
    let mean = changes.iter().sum::<f64>() / steps as f64;
    let var = changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (steps.max(2) - 1) as f64;
    let n = paths.len() as f64;
    let frac = |pred: &dyn Fn(&WalkerPath) -> bool| paths.iter().filter(|p| pred(p)).count() as f64 / n;
    let recurrence = frac(&|p| p.returned);
    let max_drop = paths
        .iter()
        .flat_map(|p| p.levels.windows(2).map(|w| w[0] as i64 - w[1] as i64))
        .max()
        .unwrap_or(0);
    Ok(BasinReport {
        ell: f.ell().clone(),
        depth: partition.depth,
        samples: cfg.samples,
        horizon: cfg.horizon,
        seed: cfg.seed,
        r0: cfg.r0,
        start_level: cfg.start_level,
        steps,
        drift_mean: mean,
        drift_se: (var / steps as f64).sqrt(),
        escape_fraction: 1.0 - recurrence,
        recurrence_fraction: recurrence,
        absorbed_fraction: frac(&|p| p.absorbed),
        left_nest_fraction: frac(&|p| p.left_nest),
        median_initial_level: median(paths.iter().map(|p| p.levels[0] as f64).collect()),
        median_terminal_level: median(paths.iter().map(|p| *p.levels.last().unwrap() as f64).collect()),
        max_level_drop: max_drop,
        resampled,
        paths,
    })
}

/// Measured pair with constants fitted to it and the resulting scaling verdict.
#[derive(Clone, Debug, Serialize)]
pub struct MeasuredScaling {
    pub pair: SequencePair,
    pub constants: Option<ScalingConstants>,
    pub contracting_range: Option<bool>,
    pub verdict: Option<ScalingVerdict>,
    pub fit_error: Option<String>,
}

pub fn measured_scaling(
    partition: &AnnulusPartition,
    transitions: &EmpiricalTransitions,
    d: usize,
) -> Result<MeasuredScaling> {
    let pair = measured_pair(partition, transitions)?;
    match fit_constants(&pair, d, K0) {
        Ok(consts) => {
            let verdict = validate_scaling(&pair, &consts)?;
            Ok(MeasuredScaling {
                contracting_range: Some(consts.in_contracting_range()),
                constants: Some(consts),
                verdict: Some(verdict),
                fit_error: None,
                pair,
            })
        }
        Err(e) => Ok(MeasuredScaling {
            pair,
            constants: None,
            contracting_range: None,
            verdict: None,
            fit_error: Some(e.to_string()),
        }),
    }
}
