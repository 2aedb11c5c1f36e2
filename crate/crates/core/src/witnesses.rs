//! Nonclassicality witnesses.
//!
//! Three hierarchies are evaluated here, all from already-estimated inputs:
//!
//! * antibunching of order k, `g(k) - 1 < 0`;
//! * the Klyshko parameters `NP(k+1) = g(k-1) g(k+1) - g(k)^2 < 0`;
//! * the click-statistics ratio `theta(k) = P0(S) / prod_i P0(i) < 1`, where
//!   `P0(S)` is the probability that none of the k detectors in `S` clicks.
//!
//! `g(0) = g(1) = 1` always, so `NP(2) = g(2) - 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default significance multiplier for verdicts.
pub const DEFAULT_SIGMA: f64 = 3.0;

/// Normalized correlation functions `g(k)` for `k >= 2`, with optional standard errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    g: BTreeMap<usize, f64>,
    errors: BTreeMap<usize, f64>,
}

impl CorrelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from `(k, g(k))` pairs.
    pub fn from_values<I: IntoIterator<Item = (usize, f64)>>(values: I) -> Result<Self> {
        let mut set = Self::new();
        for (k, g) in values {
            set.insert(k, g, None)?;
        }
        Ok(set)
    }

    /// Inserts `g(k)`. Orders 0 and 1 are fixed at one and cannot be set.
    pub fn insert(&mut self, k: usize, g: f64, std_error: Option<f64>) -> Result<()> {
        if k < 2 {
            return Err(Error::Domain(format!("g({k}) is identically 1")));
        }
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::Domain(format!("g({k}) = {g} must be finite and >= 0")));
        }
        self.g.insert(k, g);
        match std_error {
            Some(e) => {
                self.errors.insert(k, e.max(0.0));
            }
            None => {
                self.errors.remove(&k);
            }
        }
        Ok(())
    }

    pub fn with(mut self, k: usize, g: f64, std_error: f64) -> Result<Self> {
        self.insert(k, g, Some(std_error))?;
        Ok(self)
    }

    /// `g(k)`; orders 0 and 1 are always 1.
    pub fn get(&self, k: usize) -> Option<f64> {
        if k < 2 {
            Some(1.0)
        } else {
            self.g.get(&k).copied()
        }
    }

    /// Standard error of `g(k)`; zero for orders 0 and 1.
    pub fn error(&self, k: usize) -> Option<f64> {
        if k < 2 {
            Some(0.0)
        } else {
            self.errors.get(&k).copied()
        }
    }

    fn require(&self, k: usize) -> Result<f64> {
        self.get(k).ok_or_else(|| Error::AbsentData(format!("g({k}) not available")))
    }
}

/// `g(k) - 1`; negative values signal antibunching of order k.
pub fn antibunching(c: &CorrelationSet, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("antibunching needs order >= 2, got {k}")));
    }
    Ok(c.require(k)? - 1.0)
}

/// Klyshko parameter `NP(order) = g(order-2) g(order) - g(order-1)^2`.
pub fn np(c: &CorrelationSet, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::Domain(format!("NP needs order >= 2, got {order}")));
    }
    let k = order - 1;
    Ok(c.require(k - 1)? * c.require(k + 1)? - c.require(k)?.powi(2))
}

/// First-order propagated standard error of [`np`], neglecting covariance
/// between the different `g(k)` estimates.
pub fn np_error(c: &CorrelationSet, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::Domain(format!("NP needs order >= 2, got {order}")));
    }
    let k = order - 1;
    let (lo, mid, hi) = (c.require(k - 1)?, c.require(k)?, c.require(k + 1)?);
    let err = |j: usize| {
        c.error(j).ok_or_else(|| Error::AbsentData(format!("standard error of g({j}) not available")))
    };
    // at k = 1 the low and middle orders are both the constant g(1)
    let terms = [(hi, err(k - 1)?), (-2.0 * mid, err(k)?), (lo, err(k + 1)?)];
    Ok(terms.iter().map(|(d, s)| (d * s).powi(2)).sum::<f64>().sqrt())
}

/// No-click probabilities of a detector network.
///
/// Detector subsets are bit masks; detector `i` is bit `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilitySet {
    pub p0_single: Vec<f64>,
    pub p0_joint: BTreeMap<u32, f64>,
}

impl ClickProbabilitySet {
    /// Builds a set from a function giving the joint no-click probability of any subset.
    pub fn from_fn<F: FnMut(u32) -> f64>(bins: usize, mut p0: F) -> Result<Self> {
        if bins > 16 {
            return Err(Error::Capacity { what: "bins".into(), value: bins, max: 16 });
        }
        let p0_single = (0..bins).map(|i| p0(1 << i)).collect();
        let p0_joint = (1..(1u32 << bins)).filter(|m| m.count_ones() >= 2).map(|m| (m, p0(m))).collect();
        let set = Self { p0_single, p0_joint };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.p0_single.iter().chain(self.p0_joint.values());
        if all.into_iter().any(|p| !(-1e-12..=1.0 + 1e-12).contains(p)) {
            return Err(Error::Domain("no-click probabilities must lie in [0, 1]".into()));
        }
        for (&mask, &p) in &self.p0_joint {
            for i in 0..self.p0_single.len() {
                if mask & (1 << i) != 0 && p > self.p0_single[i] + 1e-12 {
                    return Err(Error::Domain(format!(
                        "joint no-click probability of {mask:#b} exceeds that of detector {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn joint(&self, mask: u32) -> Option<f64> {
        if mask.count_ones() == 1 {
            self.p0_single.get(mask.trailing_zeros() as usize).copied()
        } else {
            self.p0_joint.get(&mask).copied()
        }
    }
}

/// `theta(k) = P0(S) / prod_{i in S} P0(i)` for a detector subset `S` of size `k >= 2`.
pub fn theta(p: &ClickProbabilitySet, subset: u32) -> Result<f64> {
    if subset.count_ones() < 2 {
        return Err(Error::Domain("theta needs at least two detectors".into()));
    }
    let joint = p
        .joint(subset)
        .ok_or_else(|| Error::AbsentData(format!("joint no-click probability of {subset:#b}")))?;
    let mut product = 1.0;
    for i in (0..32).filter(|i| subset & (1 << i) != 0) {
        let single = *p
            .p0_single
            .get(i)
            .ok_or_else(|| Error::AbsentData(format!("no-click probability of detector {i}")))?;
        if single <= 0.0 {
            return Err(Error::Degenerate(format!("detector {i} always clicks")));
        }
        product *= single;
    }
    Ok(joint / product)
}

/// Outcome of checking that `g(2) < 1` and `NP(3) < 0` together imply `g(3) < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicationCheck {
    pub premise: bool,
    pub conclusion: bool,
}

impl ImplicationCheck {
    pub fn holds(&self) -> bool {
        !self.premise || self.conclusion
    }
}

pub fn check_implication(c: &CorrelationSet) -> Result<ImplicationCheck> {
    let g2 = c.require(2)?;
    let g3 = c.require(3)?;
    let np3 = np(c, 3)?;
    Ok(ImplicationCheck { premise: g2 < 1.0 && np3 < 0.0, conclusion: g3 < 1.0 })
}

/// Witness verdict against a classical boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Nonclassical,
    ClassicalConsistent,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Nonclassical => "nonclassical",
            Verdict::ClassicalConsistent => "classical-consistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Verdict for a witness whose nonclassical side lies below `boundary`.
///
/// Nonclassical only if `boundary - value > multiplier * error`; a value on
/// the classical side is classical-consistent; anything else is inconclusive.
pub fn verdict(value: f64, error: f64, boundary: f64, multiplier: f64) -> Verdict {
    if !value.is_finite() || !error.is_finite() {
        Verdict::Inconclusive
    } else if boundary - value > multiplier * error {
        Verdict::Nonclassical
    } else if value >= boundary {
        Verdict::ClassicalConsistent
    } else {
        Verdict::Inconclusive
    }
}

/// One witness value in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub order: usize,
    /// `None` when the data do not define the quantity.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    /// True when `value` rests on a zero coincidence count, whose error is a
    /// one-sided upper bound.
    pub upper_bound: bool,
    pub boundary: f64,
    pub verdict: Verdict,
}

impl WitnessEntry {
    pub fn inconclusive(order: usize, boundary: f64) -> Self {
        Self { order, value: None, std_error: None, upper_bound: false, boundary, verdict: Verdict::Inconclusive }
    }

    /// Builds an entry and its verdict. Upper-bound estimates are always inconclusive.
    pub fn judged(order: usize, value: f64, std_error: f64, upper_bound: bool, boundary: f64, multiplier: f64) -> Self {
        let verdict = if upper_bound {
            Verdict::Inconclusive
        } else {
            verdict(value, std_error, boundary, multiplier)
        };
        Self { order, value: Some(value), std_error: Some(std_error), upper_bound, boundary, verdict }
    }

    /// Distance below the classical boundary in units of the standard error.
    pub fn significance(&self) -> Option<f64> {
        match (self.value, self.std_error) {
            (Some(v), Some(e)) if e > 0.0 => Some((self.boundary - v) / e),
            _ => None,
        }
    }
}

/// All witnesses estimated from one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub sigma_multiplier: f64,
    pub error_method: String,
    pub pulses: u64,
    /// `g(k)`, boundary 1.
    pub g: Vec<WitnessEntry>,
    /// `NP(k)`, boundary 0.
    pub np: Vec<WitnessEntry>,
    /// `theta(k)`, boundary 1.
    pub theta: Vec<WitnessEntry>,
}

impl WitnessReport {
    pub fn g(&self, order: usize) -> Option<&WitnessEntry> {
        self.g.iter().find(|e| e.order == order)
    }

    pub fn np(&self, order: usize) -> Option<&WitnessEntry> {
        self.np.iter().find(|e| e.order == order)
    }

    pub fn theta(&self, order: usize) -> Option<&WitnessEntry> {
        self.theta.iter().find(|e| e.order == order)
    }

    /// Plain-text rendering.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "pulses: {}", self.pulses);
        let _ = writeln!(out, "error method: {}", self.error_method);
        let _ = writeln!(out, "significance multiplier: {}", self.sigma_multiplier);
        for (title, entries) in [
            ("[antibunching] g(k), classical boundary 1", &self.g),
            ("[klyshko] NP(k), classical boundary 0", &self.np),
            ("[click statistics] theta(k), classical boundary 1", &self.theta),
        ] {
            let _ = writeln!(out, "\n{title}");
            for e in entries {
                let value = match (e.value, e.std_error) {
                    (Some(v), Some(s)) if e.upper_bound => format!("{v:.6e} (upper bound {s:.3e})"),
                    (Some(v), Some(s)) => format!("{v:.6e} +/- {s:.3e}"),
                    (Some(v), None) => format!("{v:.6e}"),
                    _ => "n/a".to_string(),
                };
                let _ = writeln!(out, "  k={}: {value}  [{}]", e.order, e.verdict);
            }
        }
        out
    }
}
