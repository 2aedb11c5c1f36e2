//! Analytic laws for clusters of `m` independent identical emitters, and
//! the inverse problem of inferring `m` from a measured `g(2)`.
//!
//! `m` may be fractional in the analytic formulas (an effective cluster
//! size); simulations require an integer emitter count.

use serde::{Deserialize, Serialize};

use crate::detection::DetectionChain;
use crate::error::{Error, Result};
use crate::stats::{cluster_distribution, solve_distribution, PhotonDistribution};

/// Per-bin single-emitter detected mean above which the low-efficiency
/// expansion of theta is not trusted.
pub const LOW_EFFICIENCY_LIMIT: f64 = 0.05;

fn default_beta() -> f64 {
    1.0
}

/// A single emitter. `g2` and `g3` describe the ON state; `beta` is the
/// per-pulse probability of being on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub mean: f64,
    pub g2: f64,
    pub g3: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl EmitterSpec {
    pub fn new(mean: f64, g2: f64, g3: f64, beta: f64) -> Result<Self> {
        let spec = Self { mean, g2, g3, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("blinking on-probability {} outside (0, 1]", self.beta)));
        }
        self.on_state().map(|_| ())
    }

    /// Photon statistics while the emitter is on.
    pub fn on_state(&self) -> Result<PhotonDistribution> {
        solve_distribution(self.mean, self.g2, self.g3)
    }

    /// `g(2)` of the blinking emitter.
    pub fn effective_g2(&self) -> f64 {
        self.g2 / self.beta
    }

    /// `g(3)` of the blinking emitter.
    pub fn effective_g3(&self) -> f64 {
        self.g3 / (self.beta * self.beta)
    }

    /// Mean photon number per pulse including off pulses.
    pub fn effective_mean(&self) -> f64 {
        self.mean * self.beta
    }
}

/// A homogeneous cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub m: f64,
    pub emitter: EmitterSpec,
}

impl ClusterSpec {
    pub fn new(m: f64, emitter: EmitterSpec) -> Result<Self> {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(Error::Domain(format!("cluster size {m} must be >= 1")));
        }
        emitter.validate()?;
        Ok(Self { m, emitter })
    }

    /// Emitter count for simulation; fails for fractional sizes.
    pub fn emitter_count(&self) -> Result<usize> {
        if self.m.fract() != 0.0 || self.m < 1.0 {
            return Err(Error::Domain(format!(
                "cluster size {} is not an integer emitter count",
                self.m
            )));
        }
        Ok(self.m as usize)
    }

    /// Exact photon statistics of the cluster (integer `m` only).
    pub fn distribution(&self) -> Result<PhotonDistribution> {
        cluster_distribution(&blinking_adjusted_emitter(&self.emitter)?, self.emitter_count()?)
    }

    pub fn g2(&self) -> Result<f64> {
        g2_cluster(self.m, self.emitter.effective_g2())
    }

    pub fn g3(&self) -> Result<f64> {
        g3_cluster(self.m, self.emitter.effective_g2(), self.emitter.effective_g3())
    }
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::Domain(format!("cluster size {m} must be >= 1")));
    }
    Ok(())
}

/// `g(2)` of `m` independent emitters: `1 + (g2_1 - 1) / m`.
pub fn g2_cluster(m: f64, g2_1: f64) -> Result<f64> {
    check_m(m)?;
    Ok(1.0 + (g2_1 - 1.0) / m)
}

/// `g(3)` of `m` independent emitters: `1 + (g3_1 + 3 (m-1) g2_1 - 3 m + 2) / m^2`.
pub fn g3_cluster(m: f64, g2_1: f64, g3_1: f64) -> Result<f64> {
    check_m(m)?;
    Ok(1.0 + (g3_1 + 3.0 * (m - 1.0) * g2_1 - 3.0 * m + 2.0) / (m * m))
}

/// Low-efficiency `theta(2) - 1 = C m (g2_1 - 1)`.
pub fn theta2_approx(c: f64, m: f64, g2_1: f64) -> f64 {
    c * m * (g2_1 - 1.0)
}

/// Low-efficiency `theta(k) - 1 = C k (k-1) / 2 m (g2_1 - 1)`.
pub fn theta_k_approx(c: f64, k: usize, m: f64, g2_1: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("theta needs order >= 2, got {k}")));
    }
    let pairs = (k * (k - 1)) as f64 / 2.0;
    Ok(pairs * theta2_approx(c, m, g2_1))
}

/// Prefactor `C` of the low-efficiency theta expansion.
///
/// Expanding the no-click probabilities to second order in the trigger
/// probabilities gives `theta(2) - 1 = mu_i mu_j m (g2_1 - 1)` for bins `i, j`,
/// where `mu_i` is the mean number of photons one emitter delivers to bin `i`.
/// `C` is `mu_i mu_j` averaged over bin pairs; the order-k formula assumes
/// uniform bins.
pub fn derive_c(chain: &DetectionChain, emitter: &EmitterSpec) -> f64 {
    let mu: Vec<f64> = chain.trigger_probs().iter().map(|q| q * emitter.effective_mean()).collect();
    if let Some(worst) = mu.iter().copied().find(|m| *m >= LOW_EFFICIENCY_LIMIT) {
        log::warn!("per-bin detected mean {worst:.3e} outside the low-efficiency regime (< {LOW_EFFICIENCY_LIMIT})");
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..mu.len() {
        for j in (i + 1)..mu.len() {
            sum += mu[i] * mu[j];
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Cluster size from a measured `g(2)`: `m = (g2_1 - 1) / (g2 - 1)`.
pub fn estimate_m_from_g2(g2_measured: f64, g2_1: f64) -> Result<f64> {
    if !(g2_measured < 1.0) || g2_measured < g2_1 {
        return Err(Error::NotInvertible(g2_measured));
    }
    Ok((g2_1 - 1.0) / (g2_measured - 1.0))
}

/// Per-pulse photon statistics of a blinking emitter: the ON-state
/// distribution mixed with vacuum, `beta D_on + (1 - beta) |0><0|`.
pub fn blinking_adjusted_emitter(spec: &EmitterSpec) -> Result<PhotonDistribution> {
    spec.validate()?;
    let on = spec.on_state()?;
    if spec.beta == 1.0 {
        return Ok(on);
    }
    PhotonDistribution::mixture(&[(spec.beta, &on), (1.0 - spec.beta, &PhotonDistribution::vacuum())])
}
