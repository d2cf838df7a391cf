use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::sequence::{Sequence, Tail};
use crate::error::{Error, Result};

/// Fixed point with 64 fractional bits; sums and differences are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Dyadic(pub i128);

const FRAC_BITS: u32 = 64;

impl Dyadic {
    pub fn from_int(n: i64) -> Dyadic {
        Dyadic((n as i128) << FRAC_BITS)
    }

    /// Nearest representable value; exact for every `f64` of magnitude at least `2^-11`.
    pub fn from_f64(x: f64) -> Dyadic {
        Dyadic((x * 2f64.powi(FRAC_BITS as i32)).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2f64.powi(FRAC_BITS as i32)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0 + o.0)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0 - o.0)
    }
}

impl fmt::Display for Dyadic {
    /// Exact decimal expansion.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.0 < 0;
        let mag = self.0.unsigned_abs();
        let int = mag >> FRAC_BITS;
        let mut frac = mag & ((1u128 << FRAC_BITS) - 1);
        if neg {
            write!(f, "-")?;
        }
        write!(f, "{int}")?;
        if frac != 0 {
            write!(f, ".")?;
            while frac != 0 {
                frac *= 10;
                write!(f, "{}", frac >> FRAC_BITS)?;
                frac &= (1u128 << FRAC_BITS) - 1;
            }
        }
        Ok(())
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// A probability law on `j ≥ 1`; the walk moves by `j − k₀ − 1`.
#[derive(Clone, Debug)]
pub struct IncrementLaw {
    nu: Sequence,
    cumulative: Vec<f64>,
    m1: f64,
    m2: f64,
}

impl IncrementLaw {
    pub fn new(nu: Sequence) -> Result<IncrementLaw> {
        if nu.first != 1 {
            return Err(Error::InvalidLaw("weights are indexed from 1".into()));
        }
        let total = nu.total().map_err(|e| match e {
            Error::TailUndeclared(m) => Error::InvalidLaw(m),
            other => other,
        })?;
        if (total - 1.0).abs() > 2f64.powi(-40) {
            return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
        }
        let (m1, m2) = nu.moments()?;
        let mut acc = 0.0;
        let cumulative = nu
            .values
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Ok(IncrementLaw { nu, cumulative, m1, m2 })
    }

    /// Weights `ν_1, …, ν_L`, continued geometrically by `tail_ratio` when given.
    pub fn from_weights(weights: Vec<f64>, tail_ratio: Option<f64>) -> Result<IncrementLaw> {
        let tail = match tail_ratio {
            Some(q) => Tail::Geometric(q),
            None => Tail::Zero,
        };
        IncrementLaw::new(Sequence::new(1, weights, tail).map_err(|e| Error::InvalidLaw(e.to_string()))?)
    }

    pub fn point_mass(j: usize) -> Result<IncrementLaw> {
        if j == 0 {
            return Err(Error::InvalidLaw("support starts at 1".into()));
        }
        let mut w = vec![0.0; j];
        w[j - 1] = 1.0;
        IncrementLaw::from_weights(w, None)
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn weights(&self) -> &Sequence {
        &self.nu
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if let Some(i) = self.cumulative.iter().position(|&c| u < c) {
            return i + 1;
        }
        match self.nu.tail {
            Tail::Geometric(q) => {
                let v: f64 = rng.random();
                let g = ((1.0 - v).ln() / q.ln()).floor() as usize;
                self.nu.end() + g
            }
            _ => self.nu.values.iter().rposition(|&w| w > 0.0).unwrap_or(0) + 1,
        }
    }
}

/// Increment law as a function of the current state.
pub trait LawSource: Sync {
    fn law(&self, state: i64) -> &IncrementLaw;
    /// The law whose moments are reported.
    fn reference(&self) -> &IncrementLaw;
}

impl LawSource for IncrementLaw {
    fn law(&self, _state: i64) -> &IncrementLaw {
        self
    }

    fn reference(&self) -> &IncrementLaw {
        self
    }
}

/// Per-state laws with a fallback for states without one.
#[derive(Clone, Debug)]
pub struct StateLaws {
    pub by_state: BTreeMap<i64, IncrementLaw>,
    pub fallback: IncrementLaw,
}

impl LawSource for StateLaws {
    fn law(&self, state: i64) -> &IncrementLaw {
        self.by_state.get(&state).unwrap_or(&self.fallback)
    }

    fn reference(&self) -> &IncrementLaw {
        &self.fallback
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub k0: usize,
    pub r0: i64,
    pub s: i64,
    pub horizon: usize,
    pub n_walkers: usize,
    pub seed: u64,
    /// Full traces are stored for this many walkers.
    #[serde(default)]
    pub keep_traces: usize,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s <= self.r0 || self.r0 < 0 {
            return Err(Error::InvalidArgument(format!(
                "need s > r0 >= 0, got s = {}, r0 = {}",
                self.s, self.r0
            )));
        }
        if self.k0 < 1 {
            return Err(Error::InvalidArgument("k0 must be at least 1".into()));
        }
        if self.n_walkers == 0 {
            return Err(Error::InvalidArgument("at least one walker is needed".into()));
        }
        Ok(())
    }
}

/// Levels and Doob decomposition `Z = W + M` of one walker, stopped at `τ`.
#[derive(Clone, Debug, Serialize)]
pub struct WalkTrace {
    pub phi: Vec<i64>,
    #[serde(rename = "Z")]
    pub z: Vec<Dyadic>,
    #[serde(rename = "W")]
    pub w: Vec<Dyadic>,
    #[serde(rename = "M")]
    pub m: Vec<Dyadic>,
    pub tau: Option<usize>,
    pub escaped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkerOutcome {
    pub walker: usize,
    pub tau: Option<usize>,
    pub escaped: bool,
    pub final_phi: i64,
    pub terminal_slope: Option<f64>,
    pub late_min_slope: Option<f64>,
    pub hr_statistic: f64,
    pub doob_violations: usize,
    pub min_drift_before_tau: Option<Dyadic>,
    #[serde(skip)]
    bins: BTreeMap<i64, BinStats>,
    #[serde(skip)]
    trace: Option<WalkTrace>,
}

/// Martingale increments tallied by the level they start from.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct BinStats {
    pub count: u64,
    pub sum: Dyadic,
    pub sum_sq: f64,
}

impl BinStats {
    pub fn mean(&self) -> f64 {
        self.sum.to_f64() / self.count as f64
    }

    pub fn mean_sq(&self) -> f64 {
        self.sum_sq / self.count as f64
    }
}

pub const LEVEL_BIN: i64 = 10;

#[derive(Clone, Debug, Default, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Some(Quantiles {
            min: v[0],
            q05: at(0.05),
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
            q95: at(0.95),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HrSummary {
    pub mean: f64,
    pub max: f64,
    pub fraction_at_least_one: f64,
    /// `m2 · Σ_{j > s − r₀} j⁻²`
    pub chow_sum: f64,
    pub chow_threshold_met: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub config: WalkConfig,
    pub m1: f64,
    pub m2: f64,
    pub drift: f64,
    pub drift_warning: bool,
    pub escape_fraction: f64,
    pub escape_sigma: f64,
    pub escapers: usize,
    pub slope_quantiles: Option<Quantiles>,
    pub late_min_slope_quantiles: Option<Quantiles>,
    pub tau_quantiles: Option<Quantiles>,
    pub hr_statistic: HrSummary,
    pub doob_violations: usize,
    pub min_predictable_increment: Option<Dyadic>,
    pub mean_sq_martingale_increment: f64,
    pub level_bins: BTreeMap<i64, BinStats>,
    #[serde(skip)]
    pub outcomes: Vec<WalkerOutcome>,
    pub traces: Vec<WalkTrace>,
}

/// `Σ_{j > n} 1/j²`.
pub fn inverse_square_tail(n: i64) -> f64 {
    let n = n.max(0) as f64;
    let cut = 100_000.0;
    let mut s = 0.0;
    let mut j = n + 1.0;
    while j <= n + cut {
        s += 1.0 / (j * j);
        j += 1.0;
    }
    s + 1.0 / (n + cut + 0.5)
}

fn walker_rng(seed: u64, walker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker as u64);
    rng
}

fn run_walker<S: LawSource>(source: &S, cfg: &WalkConfig, walker: usize) -> WalkerOutcome {
    let mut rng = walker_rng(cfg.seed, walker);
    let keep = walker < cfg.keep_traces;
    let shift = cfg.k0 as i64 + 1;
    let mut phi = cfg.s;
    let mut z = Dyadic::from_int(cfg.s);
    let mut w = z;
    let mut m = Dyadic::default();
    let mut trace = keep.then(|| WalkTrace {
        phi: vec![phi],
        z: vec![z],
        w: vec![w],
        m: vec![m],
        tau: None,
        escaped: false,
    });
    let mut tau = None;
    let mut hr: f64 = 0.0;
    let mut violations = 0;
    let mut min_drift: Option<Dyadic> = None;
    let mut late_min = f64::INFINITY;
    let mut bins: BTreeMap<i64, BinStats> = BTreeMap::new();
    for t in 0..cfg.horizon {
        let law = source.law(phi);
        let j = law.sample(&mut rng) as i64;
        let drift = Dyadic::from_f64(law.m1()) - Dyadic::from_int(shift);
        let from = phi;
        phi += j - shift;
        let z_next = Dyadic::from_int(phi);
        let dm = (z_next - z) - drift;
        w = w + drift;
        m = m + dm;
        z = z_next;
        if z != w + m {
            violations += 1;
        }
        min_drift = Some(min_drift.map_or(drift, |d| d.min(drift)));
        let bin = bins.entry(from.div_euclid(LEVEL_BIN)).or_default();
        bin.count += 1;
        bin.sum = bin.sum + dm;
        bin.sum_sq += dm.to_f64().powi(2);
        let step = t + 1;
        hr = hr.max(m.to_f64().abs() / (cfg.s - cfg.r0 + step as i64) as f64);
        if 2 * step >= cfg.horizon {
            late_min = late_min.min(phi as f64 / step as f64);
        }
        if let Some(tr) = trace.as_mut() {
            tr.phi.push(phi);
            tr.z.push(z);
            tr.w.push(w);
            tr.m.push(m);
        }
        if phi <= cfg.r0 {
            tau = Some(step);
            break;
        }
    }
    let escaped = tau.is_none();
    if let Some(tr) = trace.as_mut() {
        tr.tau = tau;
        tr.escaped = escaped;
    }
    WalkerOutcome {
        walker,
        tau,
        escaped,
        final_phi: phi,
        terminal_slope: (escaped && cfg.horizon > 0).then(|| phi as f64 / cfg.horizon as f64),
        late_min_slope: (escaped && cfg.horizon > 0).then_some(late_min),
        hr_statistic: hr,
        doob_violations: violations,
        min_drift_before_tau: min_drift,
        bins,
        trace,
    }
}

pub fn simulate_walk(law: &IncrementLaw, cfg: &WalkConfig) -> Result<EnsembleReport> {
    simulate_walk_with(law, cfg)
}

/// Runs `n_walkers` independent walks; walker `i` draws from stream `i` of the seeded generator.
pub fn simulate_walk_with<S: LawSource>(source: &S, cfg: &WalkConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    let outcomes: Vec<WalkerOutcome> = (0..cfg.n_walkers)
        .into_par_iter()
        .map(|i| run_walker(source, cfg, i))
        .collect();
    let reference = source.reference();
    let (m1, m2) = (reference.m1(), reference.m2());
    let n = outcomes.len() as f64;
    let escapers = outcomes.iter().filter(|o| o.escaped).count();
    let p = escapers as f64 / n;
    let slopes: Vec<f64> = outcomes.iter().filter_map(|o| o.terminal_slope).collect();
    let late: Vec<f64> = outcomes.iter().filter_map(|o| o.late_min_slope).collect();
    let taus: Vec<f64> = outcomes.iter().filter_map(|o| o.tau.map(|t| t as f64)).collect();
    let hrs: Vec<f64> = outcomes.iter().map(|o| o.hr_statistic).collect();
    let mut level_bins: BTreeMap<i64, BinStats> = BTreeMap::new();
    for o in &outcomes {
        for (k, b) in &o.bins {
            let e = level_bins.entry(*k).or_default();
            e.count += b.count;
            e.sum = e.sum + b.sum;
            e.sum_sq += b.sum_sq;
        }
    }
    let (count, sq) = level_bins
        .values()
        .fold((0u64, 0.0), |(c, s), b| (c + b.count, s + b.sum_sq));
    let chow_sum = m2 * inverse_square_tail(cfg.s - cfg.r0);
    let drift = m1 - cfg.k0 as f64 - 1.0;
    Ok(EnsembleReport {
        config: cfg.clone(),
        m1,
        m2,
        drift,
        drift_warning: m1 < cfg.k0 as f64 + 2.0,
        escape_fraction: p,
        escape_sigma: (p * (1.0 - p) / n).sqrt(),
        escapers,
        slope_quantiles: Quantiles::of(&slopes),
        late_min_slope_quantiles: Quantiles::of(&late),
        tau_quantiles: Quantiles::of(&taus),
        hr_statistic: HrSummary {
            mean: hrs.iter().sum::<f64>() / n,
            max: hrs.iter().cloned().fold(0.0, f64::max),
            fraction_at_least_one: hrs.iter().filter(|&&h| h >= 1.0).count() as f64 / n,
            chow_sum,
            chow_threshold_met: chow_sum < 0.5,
        },
        doob_violations: outcomes.iter().map(|o| o.doob_violations).sum(),
        min_predictable_increment: outcomes.iter().filter_map(|o| o.min_drift_before_tau).min(),
        mean_sq_martingale_increment: if count > 0 { sq / count as f64 } else { 0.0 },
        level_bins,
        traces: outcomes.iter().filter_map(|o| o.trace.clone()).collect(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, horizon: usize) -> WalkConfig {
        WalkConfig {
            k0: 2,
            r0: 0,
            s: 10,
            horizon,
            n_walkers: n,
            seed: 1,
            keep_traces: 2,
        }
    }

    #[test]
    fn dyadic_decimal_is_exact() {
        assert_eq!(Dyadic::from_f64(0.375).to_string(), "0.375");
        assert_eq!(Dyadic::from_int(-3).to_string(), "-3");
        assert_eq!((Dyadic::from_f64(0.1) - Dyadic::from_f64(0.1)).0, 0);
    }

    #[test]
    fn unit_drift_is_deterministic() {
        let law = IncrementLaw::point_mass(4).unwrap();
        let r = simulate_walk(&law, &cfg(20, 50)).unwrap();
        assert_eq!(r.escape_fraction, 1.0);
        let q = r.slope_quantiles.unwrap();
        assert_eq!((q.min, q.max), (60.0 / 50.0, 60.0 / 50.0));
        for t in &r.traces {
            assert!(t.m.iter().all(|m| m.0 == 0));
            assert_eq!(t.w.last().unwrap().to_string(), "60");
        }
    }

    #[test]
    fn unit_descent_stops_at_the_threshold() {
        let law = IncrementLaw::point_mass(2).unwrap();
        let r = simulate_walk(&law, &cfg(20, 50)).unwrap();
        assert_eq!(r.escape_fraction, 0.0);
        assert!(r.outcomes.iter().all(|o| o.tau == Some(10)));
        assert_eq!(r.doob_violations, 0);
    }

    #[test]
    fn unnormalised_law_is_rejected() {
        assert!(matches!(
            IncrementLaw::from_weights(vec![0.5, 0.4], None),
            Err(Error::InvalidLaw(_))
        ));
    }

    #[test]
    fn geometric_tail_sampling_matches_moments() {
        let law = IncrementLaw::from_weights(vec![0.0, 0.0, 0.1, 0.85, 0.025], Some(0.5)).unwrap();
        assert!((law.m1() - 4.0).abs() < 1e-12);
        assert!((law.m2() - 16.4).abs() < 1e-12);
        let mut rng = walker_rng(5, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| law.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn chow_tail() {
        let exact = std::f64::consts::PI.powi(2) / 6.0 - (1..=40).map(|j| 1.0 / (j * j) as f64).sum::<f64>();
        assert!((inverse_square_tail(40) - exact).abs() < 1e-12);
    }
}
