//! Self-checks of the simulator and the analytic formulas against exact
//! enumeration.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::cluster::{blinking_adjusted_emitter, g2_cluster, g3_cluster, EmitterSpec};
use crate::detection::{exact_click_distribution, exact_no_click, thin, DetectionChain};
use crate::error::{Error, Result};
use crate::simulator::{block_rng, simulate_with_rng, ClusterSource, CountsAccumulator, SimulationConfig};
use crate::stats::{cluster_distribution, g_exact, PhotonDistribution};

pub const MAX_ORACLE_BINS: usize = 4;
pub const MAX_ORACLE_PHOTONS: usize = 24;
/// Per-pattern deviation limit, in standard deviations.
pub const PATTERN_Z_LIMIT: f64 = 5.0;
/// Expected count below which patterns are pooled for the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;
pub const CLUSTER_SIZES: [usize; 3] = [2, 5, 12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn below(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self { name: name.into(), statistic, threshold, passed: statistic <= threshold }
    }

    fn above(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self { name: name.into(), statistic, threshold, passed: statistic >= threshold }
    }
}

impl std::fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<34} {:>12.4e} {:>12.4e}  {}",
            self.name,
            self.statistic,
            self.threshold,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// p-value of a 5 sigma one-sided normal excursion.
pub fn five_sigma_p() -> f64 {
    let normal = Normal::standard();
    1.0 - normal.cdf(PATTERN_Z_LIMIT)
}

fn check_capacity(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<()> {
    if chain.bins() > MAX_ORACLE_BINS {
        return Err(Error::Capacity { what: "bins".into(), value: chain.bins(), max: MAX_ORACLE_BINS });
    }
    let n_max = dist.clone().trimmed().n_max();
    if n_max > MAX_ORACLE_PHOTONS {
        return Err(Error::Capacity { what: "n_max".into(), value: n_max, max: MAX_ORACLE_PHOTONS });
    }
    Ok(())
}

fn visit_compositions(n: usize, cells: usize, current: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if cells == 1 {
        current.push(n);
        visit(current);
        current.pop();
        return;
    }
    for first in 0..=n {
        current.push(first);
        visit_compositions(n - first, cells - 1, current, visit);
        current.pop();
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Click-pattern probabilities by direct summation over photon number and
/// every multinomial split of the photons over bins and loss, with
/// independent background clicks OR-ed in.
pub fn enumerate_click_probs(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<Vec<f64>> {
    check_capacity(dist, chain)?;
    let bins = chain.bins();
    let mut cells = chain.trigger_probs();
    cells.push((1.0 - cells.iter().sum::<f64>()).max(0.0));
    let mut signal = vec![0.0; 1 << bins];
    let mut buf = Vec::with_capacity(cells.len());
    for (n, &pn) in dist.probs().iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        let ln_n = ln_factorial(n);
        visit_compositions(n, cells.len(), &mut buf, &mut |split| {
            let mut ln_w = ln_n;
            let mut mask = 0usize;
            for (i, (&count, &q)) in split.iter().zip(&cells).enumerate() {
                if count > 0 {
                    if q == 0.0 {
                        return;
                    }
                    ln_w += count as f64 * q.ln() - ln_factorial(count);
                    if i < bins {
                        mask |= 1 << i;
                    }
                }
            }
            signal[mask] += pn * ln_w.exp();
        });
    }
    let mut out = signal;
    for (i, &nu) in chain.dark().iter().enumerate() {
        let p = 1.0 - (-nu).exp();
        if p == 0.0 {
            continue;
        }
        let bit = 1 << i;
        for m in 0..out.len() {
            if m & bit == 0 {
                let moved = out[m] * p;
                out[m] -= moved;
                out[m | bit] += moved;
            }
        }
    }
    Ok(out)
}

/// Largest per-pattern difference between the inclusion-exclusion oracle and direct enumeration.
pub fn enumeration_mismatch(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<f64> {
    let exact = exact_click_distribution(dist, chain)?;
    let direct = enumerate_click_probs(dist, chain)?;
    Ok(exact.probs.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Goodness of fit of a simulated pattern histogram to exact probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Largest `|observed - expected| / sd` over patterns with enough expected counts.
    pub max_abs_z: f64,
    pub worst_pattern: u32,
}

impl ChiSquareResult {
    pub fn passed(&self) -> bool {
        self.max_abs_z <= PATTERN_Z_LIMIT && self.p_value >= five_sigma_p()
    }
}

pub fn chi_square(acc: &CountsAccumulator, probs: &[f64]) -> Result<ChiSquareResult> {
    if probs.len() != acc.histogram().len() {
        return Err(Error::ShapeMismatch(format!("{} probabilities for {} patterns", probs.len(), acc.histogram().len())));
    }
    let n = acc.pulses() as f64;
    if n == 0.0 {
        return Err(Error::InsufficientData("no pulses".into()));
    }
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut max_abs_z = 0.0;
    let mut worst_pattern = 0;
    for (m, (&obs, &p)) in acc.histogram().iter().zip(probs).enumerate() {
        let obs = obs as f64;
        let exp = n * p;
        if exp < MIN_EXPECTED {
            pooled_obs += obs;
            pooled_exp += exp;
            continue;
        }
        let z = (obs - exp) / (exp * (1.0 - p)).sqrt().max(f64::MIN_POSITIVE);
        if z.abs() > max_abs_z {
            max_abs_z = z.abs();
            worst_pattern = m as u32;
        }
        chi2 += (obs - exp).powi(2) / exp;
        cells += 1;
    }
    if pooled_exp >= MIN_EXPECTED {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    } else if pooled_obs > pooled_exp + PATTERN_Z_LIMIT * pooled_exp.sqrt().max(1.0) + 1.0 {
        // patterns that should essentially never occur did
        max_abs_z = f64::INFINITY;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(chi2);
    Ok(ChiSquareResult { chi2, dof, p_value, max_abs_z, worst_pattern })
}

/// Simulates `config` with the given streams and compares against the exact oracle.
pub fn mc_vs_exact_with_rng<R, F>(config: &SimulationConfig, make_rng: F) -> Result<ChiSquareResult>
where
    R: RngCore,
    F: Fn(u64, u64) -> R + Sync,
{
    let dist = config.cluster.distribution()?;
    check_capacity(&dist, &config.chain)?;
    let exact = exact_click_distribution(&dist, &config.chain)?;
    let acc = simulate_with_rng(config, make_rng, None)?;
    chi_square(&acc, &exact.probs)
}

pub fn mc_vs_exact(config: &SimulationConfig) -> Result<ChiSquareResult> {
    mc_vs_exact_with_rng(config, block_rng)
}

/// Largest gap between the closed-form cluster `g(2)`, `g(3)` and the
/// convolution of `m` emitters.
pub fn cluster_formula_mismatch(emitter: &EmitterSpec, sizes: &[usize]) -> Result<f64> {
    let single = blinking_adjusted_emitter(emitter)?;
    let (g2_1, g3_1) = (emitter.effective_g2(), emitter.effective_g3());
    let mut worst: f64 = 0.0;
    for &m in sizes {
        let dist = cluster_distribution(&single, m)?;
        worst = worst
            .max((g2_cluster(m as f64, g2_1)? - g_exact(&dist, 2)?).abs())
            .max((g3_cluster(m as f64, g2_1, g3_1)? - g_exact(&dist, 3)?).abs());
    }
    Ok(worst)
}

fn exact_theta(dist: &PhotonDistribution, chain: &DetectionChain, subset: u32) -> f64 {
    let product: f64 = (0..chain.bins())
        .filter(|i| subset & (1 << i) != 0)
        .map(|i| exact_no_click(dist, chain, 1 << i))
        .product();
    exact_no_click(dist, chain, subset) / product
}

/// Largest change of any exact `theta` when background clicks are switched on.
pub fn theta_background_shift(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<f64> {
    let quiet = chain.clone().with_dark(vec![0.0; chain.bins()])?;
    let noisy = if chain.dark().iter().any(|d| *d > 0.0) { chain.clone() } else { chain.clone().with_dark(vec![0.05; chain.bins()])? };
    Ok((1u32..=chain.full_mask())
        .filter(|s| s.count_ones() >= 2)
        .map(|s| (exact_theta(dist, &quiet, s) - exact_theta(dist, &noisy, s)).abs())
        .fold(0.0, f64::max))
}

/// Largest change of `g(2)`, `g(3)` under the chain's overall loss.
pub fn loss_shift(dist: &PhotonDistribution, chain: &DetectionChain) -> Result<f64> {
    let eta: f64 = chain.trigger_probs().iter().sum();
    let lossy = thin(dist, eta.min(1.0))?;
    let mut worst: f64 = 0.0;
    for k in 2..=3 {
        match (g_exact(dist, k), g_exact(&lossy, k)) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs()),
            (Err(Error::Degenerate(_)), _) | (_, Err(Error::Degenerate(_))) => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(worst)
}

fn common_emitter(source: &ClusterSource) -> Option<EmitterSpec> {
    match source {
        ClusterSource::Homogeneous(c) => Some(c.emitter),
        ClusterSource::Emitters(list) if !list.is_empty() && list.iter().all(|e| e == &list[0]) => Some(list[0]),
        _ => None,
    }
}

/// The full suite on one configuration.
pub fn run_checks(config: &SimulationConfig) -> Result<Vec<OracleCheck>> {
    let dist = config.cluster.distribution()?;
    check_capacity(&dist, &config.chain)?;
    let chain = &config.chain;
    let mut checks = vec![
        OracleCheck::below("exact vs direct enumeration", enumeration_mismatch(&dist, chain)?, 1e-12),
        OracleCheck::below("theta background invariance", theta_background_shift(&dist, chain)?, 1e-12),
        OracleCheck::below("g loss invariance", loss_shift(&dist, chain)?, 1e-10),
    ];
    if let Some(e) = common_emitter(&config.cluster) {
        let mut sizes = CLUSTER_SIZES.to_vec();
        sizes.push(config.cluster.emitter_count()?);
        checks.push(OracleCheck::below("cluster g2/g3 vs convolution", cluster_formula_mismatch(&e, &sizes)?, 1e-10));
    }
    let mc = mc_vs_exact(config)?;
    checks.push(OracleCheck::below("MC pattern max |z|", mc.max_abs_z, PATTERN_Z_LIMIT));
    checks.push(OracleCheck::above(format!("MC chi-square p (dof {})", mc.dof), mc.p_value, five_sigma_p()));
    Ok(checks)
}
