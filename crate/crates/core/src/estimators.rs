//! From click counts to correlation functions, theta ratios and the
//! witness report.
//!
//! `g(k)` over a bin subset `S` is estimated as `N_c(S) n^(k-1) / prod N_i`,
//! which approaches the normalized correlation function when every bin
//! clicks in a small fraction of pulses. `theta(k)` uses the empirical
//! no-click frequencies directly.
//!
//! Symmetrized estimates pool all size-k subsets:
//! `sum_S P(S) / sum_S prod_{i in S} P(i)`, a weighted mean of the
//! per-subset ratios that reduces to the plain mean for uniform chains.
//!
//! Propagated errors use the delta method on the multinomial pattern
//! counts, so the correlation between a coincidence count and the singles
//! containing it is accounted for.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, DiscreteCDF, Normal, Poisson};

use crate::detection::ClickPattern;
use crate::error::{Error, Result};
use crate::simulator::CountsAccumulator;
use crate::witnesses::{self, CorrelationSet, WitnessEntry, WitnessReport};

/// Per-pulse click probability above which the coincidence estimator is
/// outside its small-probability regime.
pub const REGIME_LIMIT: f64 = 0.1;

/// Poisson mean whose zero-count probability is 0.32: the one-sided 68%
/// upper bound on a count when none was observed.
pub const ZERO_COUNT_UPPER: f64 = 1.139_434_283_188_365_7;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMethod {
    PoissonPropagation,
    BlockBootstrap,
}

impl ErrorMethod {
    pub fn name(self) -> &'static str {
        match self {
            ErrorMethod::PoissonPropagation => "poisson-propagation",
            ErrorMethod::BlockBootstrap => "block-bootstrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub method: ErrorMethod,
    pub n_effective: u64,
    /// Zero events were observed; `value` is 0 and `std_error` is a one-sided 68% upper bound.
    pub upper_bound: bool,
}

#[derive(Clone, Copy)]
enum Kind {
    /// all bins click / bin clicks
    Click,
    /// no bin clicks / bin does not click
    NoClick,
}

impl Kind {
    #[inline]
    fn joint(self, pattern: u32, subset: u32) -> bool {
        match self {
            Kind::Click => pattern & subset == subset,
            Kind::NoClick => pattern & subset == 0,
        }
    }

    #[inline]
    fn single(self, pattern: u32, bin: usize) -> bool {
        match self {
            Kind::Click => pattern & (1 << bin) != 0,
            Kind::NoClick => pattern & (1 << bin) == 0,
        }
    }
}

fn bins_of(subset: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| subset & (1 << i) != 0)
}

/// All subsets of `bins` bins with exactly `k` members, in increasing mask order.
pub fn subsets_of_size(bins: usize, k: usize) -> Vec<u32> {
    (1u32..(1 << bins)).filter(|m| m.count_ones() as usize == k).collect()
}

/// Pooled ratio `sum_S P_joint(S) / sum_S prod_i P_single(i)` with its
/// delta-method standard error.
fn pooled_ratio(acc: &CountsAccumulator, subsets: &[u32], kind: Kind) -> Result<EstimateWithError> {
    let n = acc.pulses();
    if n == 0 {
        return Err(Error::InsufficientData("no pulses recorded".into()));
    }
    if subsets.is_empty() || subsets.iter().any(|s| s.count_ones() < 2 || *s & !acc.full_mask() != 0) {
        return Err(Error::Domain("subsets must contain at least two valid bins".into()));
    }
    let nf = n as f64;
    let hist = acc.histogram();
    let bins = acc.bins();
    let mut single = vec![0.0; bins];
    for (i, p) in single.iter_mut().enumerate() {
        let count: u64 = hist.iter().enumerate().filter(|(m, _)| kind.single(*m as u32, i)).map(|(_, c)| c).sum();
        *p = count as f64 / nf;
    }
    let used: u32 = subsets.iter().fold(0, |a, s| a | s);
    for i in bins_of(used) {
        if single[i] == 0.0 {
            return Err(Error::InsufficientData(match kind {
                Kind::Click => format!("bin {i} never clicked"),
                Kind::NoClick => format!("bin {i} clicked in every pulse"),
            }));
        }
        if matches!(kind, Kind::Click) && single[i] > REGIME_LIMIT {
            log::warn!("bin {i} clicks in {:.3} of pulses; coincidence estimator is biased", single[i]);
        }
    }
    let joint: Vec<f64> = subsets
        .iter()
        .map(|&s| {
            hist.iter().enumerate().filter(|(m, _)| kind.joint(*m as u32, s)).map(|(_, c)| *c).sum::<u64>() as f64 / nf
        })
        .collect();
    let numer: f64 = joint.iter().sum();
    let denom: f64 = subsets.iter().map(|&s| bins_of(s).map(|i| single[i]).product::<f64>()).sum();
    let method = ErrorMethod::PoissonPropagation;

    if numer == 0.0 {
        return Ok(EstimateWithError {
            value: 0.0,
            std_error: ZERO_COUNT_UPPER / nf / denom,
            method,
            n_effective: n,
            upper_bound: true,
        });
    }
    let value = numer / denom;

    // d denom / d P_single(i)
    let mut grad = vec![0.0; bins];
    for &s in subsets {
        for i in bins_of(s) {
            grad[i] += bins_of(s).filter(|j| *j != i).map(|j| single[j]).product::<f64>();
        }
    }
    let mut var = 0.0;
    for (m, &count) in hist.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let m = m as u32;
        let a: f64 = subsets.iter().zip(&joint).map(|(&s, p)| f64::from(u8::from(kind.joint(m, s))) - p).sum();
        let b: f64 = bins_of(used)
            .map(|i| grad[i] * (f64::from(u8::from(kind.single(m, i))) - single[i]))
            .sum();
        let psi = a / numer - b / denom;
        var += count as f64 / nf * psi * psi;
    }
    Ok(EstimateWithError {
        value,
        std_error: value * (var / nf).sqrt(),
        method,
        n_effective: n,
        upper_bound: false,
    })
}

/// `g(k)` on one subset of `k` bins.
pub fn g_from_counts(acc: &CountsAccumulator, subset: u32) -> Result<EstimateWithError> {
    pooled_ratio(acc, &[subset], Kind::Click)
}

/// `g(k)` pooled over every subset of `k` bins.
pub fn g_symmetrized(acc: &CountsAccumulator, k: usize) -> Result<EstimateWithError> {
    pooled_ratio(acc, &subsets_of_size(acc.bins(), k), Kind::Click)
}

/// `theta(k)` on one subset of `k` bins.
pub fn theta_from_counts(acc: &CountsAccumulator, subset: u32) -> Result<EstimateWithError> {
    pooled_ratio(acc, &[subset], Kind::NoClick)
}

/// `theta(k)` pooled over every subset of `k` bins.
pub fn theta_symmetrized(acc: &CountsAccumulator, k: usize) -> Result<EstimateWithError> {
    pooled_ratio(acc, &subsets_of_size(acc.bins(), k), Kind::NoClick)
}

/// Multinomial resample of a pattern histogram, by successive binomials.
fn resample_histogram<R: Rng>(acc: &CountsAccumulator, rng: &mut R) -> CountsAccumulator {
    let n = acc.pulses();
    let nf = n as f64;
    let hist = acc.histogram();
    let mut out = vec![0u64; hist.len()];
    let mut remaining = n;
    let mut mass = 1.0;
    for (slot, &count) in out.iter_mut().zip(hist) {
        if remaining == 0 {
            break;
        }
        let p = count as f64 / nf;
        if p == 0.0 {
            continue;
        }
        let draw = if p >= mass {
            remaining
        } else {
            Binomial::new(remaining, (p / mass).min(1.0)).expect("valid binomial").sample(rng)
        };
        *slot = draw;
        remaining -= draw;
        mass -= p;
    }
    CountsAccumulator::from_histogram(acc.bins(), out).expect("same shape")
}

fn summarize(point: f64, draws: Vec<f64>, n_effective: u64, resamples: usize) -> Result<EstimateWithError> {
    let valid: Vec<f64> = draws.into_iter().filter(|v| v.is_finite()).collect();
    if valid.len() < MIN_RESAMPLES.min(resamples) || valid.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} of {resamples} resamples gave a defined estimate",
            valid.len()
        )));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let var = valid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (valid.len() - 1) as f64;
    Ok(EstimateWithError {
        value: point,
        std_error: var.sqrt(),
        method: ErrorMethod::BlockBootstrap,
        n_effective,
        upper_bound: false,
    })
}

fn resample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b007_57a9_0000);
    rng.set_stream(index);
    rng
}

/// Bootstrap standard error of `estimator` by multinomial resampling of the
/// pattern histogram (blocks of one pulse).
pub fn bootstrap<F>(acc: &CountsAccumulator, estimator: F, resamples: usize, seed: u64) -> Result<EstimateWithError>
where
    F: Fn(&CountsAccumulator) -> Result<f64> + Sync,
{
    if resamples < MIN_RESAMPLES {
        return Err(Error::Config(format!("at least {MIN_RESAMPLES} resamples required, got {resamples}")));
    }
    let point = estimator(acc)?;
    let draws: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let sample = resample_histogram(acc, &mut resample_rng(seed, r));
            estimator(&sample).unwrap_or(f64::NAN)
        })
        .collect();
    summarize(point, draws, acc.pulses(), resamples)
}

/// Block bootstrap: resamples whole blocks of consecutive pulses with replacement.
pub fn bootstrap_blocks<F>(
    blocks: &[CountsAccumulator],
    estimator: F,
    resamples: usize,
    seed: u64,
) -> Result<EstimateWithError>
where
    F: Fn(&CountsAccumulator) -> Result<f64> + Sync,
{
    if resamples < MIN_RESAMPLES {
        return Err(Error::Config(format!("at least {MIN_RESAMPLES} resamples required, got {resamples}")));
    }
    let first = blocks.first().ok_or_else(|| Error::InsufficientData("no blocks".into()))?;
    let mut total = CountsAccumulator::new(first.bins())?;
    for b in blocks {
        total.merge_from(b)?;
    }
    let point = estimator(&total)?;
    let draws: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = resample_rng(seed, r);
            let mut sample = CountsAccumulator::new(first.bins()).expect("valid");
            for _ in 0..blocks.len() {
                sample.merge_from(&blocks[rng.random_range(0..blocks.len())]).expect("same shape");
            }
            estimator(&sample).unwrap_or(f64::NAN)
        })
        .collect();
    summarize(point, draws, total.pulses(), resamples)
}

/// Exact Poisson comparison of the pooled `k`-fold coincidence count with
/// the count a model `g(k)` predicts from the observed singles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountConsistency {
    pub observed: u64,
    pub expected: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl CountConsistency {
    /// Consistent at the two-sided level of a `sigma` normal deviation.
    pub fn consistent_at(&self, sigma: f64) -> bool {
        self.p_value >= 2.0 * Normal::standard().sf(sigma)
    }
}

pub fn coincidence_consistency(acc: &CountsAccumulator, k: usize, g_model: f64) -> Result<CountConsistency> {
    let n = acc.pulses();
    if n == 0 {
        return Err(Error::InsufficientData("no pulses recorded".into()));
    }
    let subsets = subsets_of_size(acc.bins(), k);
    if k < 2 || subsets.is_empty() {
        return Err(Error::Domain(format!("no subsets of {k} bins")));
    }
    let singles = acc.singles();
    let nf = n as f64;
    let observed: u64 = subsets.iter().map(|&s| acc.coincidence(s)).sum();
    let expected = g_model
        * nf
        * subsets.iter().map(|&s| bins_of(s).map(|i| singles[i] as f64 / nf).product::<f64>()).sum::<f64>();
    let p_value = if expected <= 0.0 {
        if observed == 0 { 1.0 } else { 0.0 }
    } else {
        let pois = Poisson::new(expected).map_err(|e| Error::Domain(e.to_string()))?;
        let lower = pois.cdf(observed);
        let upper = if observed == 0 { 1.0 } else { pois.sf(observed - 1) };
        (2.0 * lower.min(upper)).min(1.0)
    };
    Ok(CountConsistency { observed, expected, p_value })
}

/// Settings for [`full_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub sigma: f64,
    pub method: ErrorMethod,
    pub resamples: usize,
    pub seed: u64,
    pub max_order: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            sigma: witnesses::DEFAULT_SIGMA,
            method: ErrorMethod::PoissonPropagation,
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            max_order: 4,
        }
    }
}

fn g_entry(acc: &CountsAccumulator, k: usize, opts: &ReportOptions) -> WitnessEntry {
    let Ok(est) = g_symmetrized(acc, k) else {
        return WitnessEntry::inconclusive(k, 1.0);
    };
    let std_error = match opts.method {
        ErrorMethod::BlockBootstrap if !est.upper_bound => {
            bootstrap(acc, |a| g_symmetrized(a, k).map(|e| e.value), opts.resamples, opts.seed)
                .map(|b| b.std_error)
                .unwrap_or(f64::NAN)
        }
        _ => est.std_error,
    };
    WitnessEntry::judged(k, est.value, std_error, est.upper_bound, 1.0, opts.sigma)
}

fn theta_entry(acc: &CountsAccumulator, k: usize, opts: &ReportOptions) -> WitnessEntry {
    let Ok(est) = theta_symmetrized(acc, k) else {
        return WitnessEntry::inconclusive(k, 1.0);
    };
    let std_error = match opts.method {
        ErrorMethod::BlockBootstrap if !est.upper_bound => {
            bootstrap(acc, |a| theta_symmetrized(a, k).map(|e| e.value), opts.resamples, opts.seed)
                .map(|b| b.std_error)
                .unwrap_or(f64::NAN)
        }
        _ => est.std_error,
    };
    WitnessEntry::judged(k, est.value, std_error, est.upper_bound, 1.0, opts.sigma)
}

fn np_entry(acc: &CountsAccumulator, order: usize, g: &[WitnessEntry], opts: &ReportOptions) -> WitnessEntry {
    // a zero-coincidence g enters with value 0 and its bound as error; the
    // result is then flagged and never judged nonclassical
    let needed = order.saturating_sub(2).max(2)..=order;
    let mut set = CorrelationSet::new();
    let mut bounded = false;
    for e in g {
        if let (Some(v), Some(s)) = (e.value, e.std_error) {
            if set.insert(e.order, v, Some(s)).is_err() {
                return WitnessEntry::inconclusive(order, 0.0);
            }
            bounded |= e.upper_bound && needed.contains(&e.order);
        }
    }
    let Ok(value) = witnesses::np(&set, order) else {
        return WitnessEntry::inconclusive(order, 0.0);
    };
    let std_error = match opts.method {
        ErrorMethod::BlockBootstrap if !bounded => {
            let np_of = |a: &CountsAccumulator| -> Result<f64> {
                let mut s = CorrelationSet::new();
                for k in 2..=order {
                    let e = g_symmetrized(a, k)?;
                    if e.upper_bound {
                        return Err(Error::InsufficientData("no coincidences".into()));
                    }
                    s.insert(k, e.value, None)?;
                }
                witnesses::np(&s, order)
            };
            bootstrap(acc, np_of, opts.resamples, opts.seed).map(|b| b.std_error).unwrap_or(f64::NAN)
        }
        _ => witnesses::np_error(&set, order).unwrap_or(f64::NAN),
    };
    WitnessEntry::judged(order, value, std_error, bounded, 0.0, opts.sigma)
}

/// Every witness the data allow, up to `max_order`, with errors and verdicts.
pub fn full_report(acc: &CountsAccumulator, opts: &ReportOptions) -> WitnessReport {
    let top = opts.max_order.min(acc.bins());
    let g: Vec<WitnessEntry> = (2..=top).map(|k| g_entry(acc, k, opts)).collect();
    let np = (2..=top).map(|k| np_entry(acc, k, &g, opts)).collect();
    let theta = (2..=top).map(|k| theta_entry(acc, k, opts)).collect();
    WitnessReport {
        sigma_multiplier: opts.sigma,
        error_method: opts.method.name().to_string(),
        pulses: acc.pulses(),
        g,
        np,
        theta,
    }
}

/// Per-subset `g(k)` and `theta(k)`, for diagnosing an unbalanced chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEstimate {
    pub subset: String,
    pub g: Option<EstimateWithError>,
    pub theta: Option<EstimateWithError>,
}

pub fn per_subset(acc: &CountsAccumulator, max_order: usize) -> Vec<SubsetEstimate> {
    (2..=max_order.min(acc.bins()))
        .flat_map(|k| subsets_of_size(acc.bins(), k))
        .map(|s| SubsetEstimate {
            subset: ClickPattern(s).to_bits(acc.bins()),
            g: g_from_counts(acc, s).ok(),
            theta: theta_from_counts(acc, s).ok(),
        })
        .collect()
}
