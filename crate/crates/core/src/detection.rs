//! The measurement chain: loss, routing onto effective detectors, and
//! on-off detection with Poissonian background.
//!
//! The default network has four bins, two detectors times two time slots.
//! Each photon lands in at most one bin; a bin clicks if at least one
//! detected photon or one background count lands in it.
//!
//! Everything here is exact, and serves as the reference that the Monte
//! Carlo engine and the estimators are checked against.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::PhotonDistribution;

/// Largest bin count handled by exact enumeration and by the accumulators.
pub const MAX_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    route: Vec<f64>,
    eta: Vec<f64>,
    #[serde(default = "one")]
    collection: f64,
    #[serde(default)]
    dark: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

/// Routing probabilities, per-bin efficiencies, collection efficiency and
/// per-bin background means of a click-detector network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct DetectionChain {
    route: Vec<f64>,
    eta: Vec<f64>,
    collection: f64,
    dark: Vec<f64>,
}

impl TryFrom<RawChain> for DetectionChain {
    type Error = Error;

    fn try_from(raw: RawChain) -> Result<Self> {
        let bins = raw.route.len();
        let dark = raw.dark.unwrap_or_else(|| vec![0.0; bins]);
        Self::new(raw.route, raw.eta, raw.collection, dark)
    }
}

impl From<DetectionChain> for RawChain {
    fn from(c: DetectionChain) -> Self {
        RawChain { route: c.route, eta: c.eta, collection: c.collection, dark: Some(c.dark) }
    }
}

impl DetectionChain {
    pub fn new(route: Vec<f64>, eta: Vec<f64>, collection: f64, dark: Vec<f64>) -> Result<Self> {
        let bins = route.len();
        if bins == 0 {
            return Err(Error::Config("detection chain needs at least one bin".into()));
        }
        if bins > MAX_BINS {
            return Err(Error::Capacity { what: "bins".into(), value: bins, max: MAX_BINS });
        }
        if eta.len() != bins || dark.len() != bins {
            return Err(Error::Config(format!(
                "route, eta and dark must have the same length (got {}, {}, {})",
                bins,
                eta.len(),
                dark.len()
            )));
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if !route.iter().all(unit) {
            return Err(Error::Config("routing probabilities must lie in [0, 1]".into()));
        }
        if route.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Config("routing probabilities sum to more than 1".into()));
        }
        if !eta.iter().all(unit) || !unit(&collection) {
            return Err(Error::Config("efficiencies must lie in [0, 1]".into()));
        }
        if !dark.iter().all(|d| *d >= 0.0 && d.is_finite()) {
            return Err(Error::Config("background means must be finite and >= 0".into()));
        }
        Ok(Self { route, eta, collection, dark })
    }

    /// Uniform routing over `bins`, equal efficiencies and no background.
    pub fn uniform(bins: usize, collection: f64, eta: f64) -> Result<Self> {
        Self::new(vec![1.0 / bins as f64; bins], vec![eta; bins], collection, vec![0.0; bins])
    }

    /// Two detectors times two time slots, each bin receiving a quarter.
    pub fn quarters(collection: f64, eta: f64, dark: f64) -> Result<Self> {
        Self::new(vec![0.25; 4], vec![eta; 4], collection, vec![dark; 4])
    }

    pub fn with_dark(mut self, dark: Vec<f64>) -> Result<Self> {
        self.dark = dark;
        Self::new(self.route, self.eta, self.collection, self.dark)
    }

    /// Same chain with every bin efficiency multiplied by `factor`.
    pub fn scale_efficiency(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.route.clone(),
            self.eta.iter().map(|e| e * factor).collect(),
            self.collection,
            self.dark.clone(),
        )
    }

    pub fn bins(&self) -> usize {
        self.route.len()
    }

    pub fn route(&self) -> &[f64] {
        &self.route
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn collection(&self) -> f64 {
        self.collection
    }

    pub fn dark(&self) -> &[f64] {
        &self.dark
    }

    /// Probability that one emitted photon is detected in bin `i`: `collection * r_i * eta_i`.
    pub fn trigger_probs(&self) -> Vec<f64> {
        self.route.iter().zip(&self.eta).map(|(r, e)| self.collection * r * e).collect()
    }

    /// Mask with every bin set.
    pub fn full_mask(&self) -> u32 {
        full_mask(self.bins())
    }
}

pub(crate) fn full_mask(bins: usize) -> u32 {
    if bins >= 32 {
        u32::MAX
    } else {
        (1u32 << bins) - 1
    }
}

/// Set of bins that clicked in one pulse; bin `i` is bit `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct ClickPattern(pub u32);

impl ClickPattern {
    pub fn contains(self, bin: usize) -> bool {
        self.0 & (1 << bin) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// `bins` characters of `0`/`1`, first character for bin 0.
    pub fn to_bits(self, bins: usize) -> String {
        (0..bins).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }

    pub fn from_bits(s: &str) -> Option<Self> {
        if s.len() > 32 {
            return None;
        }
        let mut mask = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => mask |= 1 << i,
                '0' => {}
                _ => return None,
            }
        }
        Some(Self(mask))
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Probability of each of the `2^bins` click patterns, indexed by mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickDistribution {
    pub bins: usize,
    pub probs: Vec<f64>,
}

impl ClickDistribution {
    pub fn prob(&self, pattern: ClickPattern) -> f64 {
        self.probs[pattern.0 as usize]
    }

    /// Marginal click probability of one bin.
    pub fn click_prob(&self, bin: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m & (1 << bin) != 0)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Binomial loss: every photon survives independently with probability `eta`.
pub fn thin(dist: &PhotonDistribution, eta: f64) -> Result<PhotonDistribution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("efficiency {eta} outside [0, 1]")));
    }
    let probs = dist.probs();
    let mut out = vec![0.0; probs.len()];
    for (n, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        // binomial(n, eta) pmf by the multiplicative recurrence
        let mut coeff = 1.0;
        for (j, slot) in out.iter_mut().enumerate().take(n + 1) {
            if j > 0 {
                coeff *= (n - j + 1) as f64 / j as f64;
            }
            *slot += p * coeff * eta.powi(j as i32) * (1.0 - eta).powi((n - j) as i32);
        }
    }
    Ok(PhotonDistribution::from_normalized(out))
}

/// Probability that no bin in `subset` clicks.
pub fn exact_no_click(dist: &PhotonDistribution, chain: &DetectionChain, subset: u32) -> f64 {
    let q = chain.trigger_probs();
    let mut s = 0.0;
    let mut background = 0.0;
    for i in (0..chain.bins()).filter(|i| subset & (1 << i) != 0) {
        s += q[i];
        background += chain.dark[i];
    }
    dist.pgf(1.0 - s) * (-background).exp()
}

/// Exact probabilities of all click patterns, by Moebius inversion of the
/// no-click probabilities of every bin subset.
pub fn exact_click_distribution(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<ClickDistribution> {
    let bins = chain.bins();
    if bins > MAX_BINS {
        return Err(Error::Capacity { what: "bins".into(), value: bins, max: MAX_BINS });
    }
    let full = chain.full_mask();
    // A(T) = P(click set is within T) = P(no click outside T)
    let mut probs: Vec<f64> = (0..=full).map(|t| exact_no_click(dist, chain, full & !t)).collect();
    for i in 0..bins {
        let bit = 1usize << i;
        for t in 0..probs.len() {
            if t & bit != 0 {
                probs[t] -= probs[t ^ bit];
            }
        }
    }
    if let Some(p) = probs.iter().find(|p| **p < -1e-12) {
        return Err(Error::Domain(format!("click-pattern probability {p:e} below zero")));
    }
    for p in probs.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(ClickDistribution { bins, probs })
}

/// Exact per-pulse rates: singles per bin, and for every subset the
/// probability that all of its bins clicked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    pub bins: usize,
    /// Indexed by subset mask; `coincidence[0] = 1`.
    pub coincidence: Vec<f64>,
}

impl ExpectedRates {
    pub fn single(&self, bin: usize) -> f64 {
        self.coincidence[1 << bin]
    }

    pub fn of(&self, subset: u32) -> f64 {
        self.coincidence[subset as usize]
    }

    /// `g(k)` per the coincidence-over-singles estimator applied to exact rates.
    pub fn g(&self, subset: u32) -> f64 {
        let product: f64 = (0..self.bins).filter(|i| subset & (1 << i) != 0).map(|i| self.single(i)).product();
        self.of(subset) / product
    }
}

pub fn expected_counts(cd: &ClickDistribution) -> ExpectedRates {
    let mut coincidence = cd.probs.clone();
    superset_sum(&mut coincidence, cd.bins);
    ExpectedRates { bins: cd.bins, coincidence }
}

/// In place: `v[S] <- sum over T containing S of v[T]`.
pub(crate) fn superset_sum<T: Copy + std::ops::AddAssign>(v: &mut [T], bins: usize) {
    for i in 0..bins {
        let bit = 1usize << i;
        for s in 0..v.len() {
            if s & bit == 0 {
                let add = v[s | bit];
                v[s] += add;
            }
        }
    }
}
