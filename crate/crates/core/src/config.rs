//! Run configuration file.
//!
//! A TOML document; every table rejects unknown keys.
//!
//! ```toml
//! seed = 7
//! n_pulses = 10_000_000
//! block_size = 1_000_000        # optional
//!
//! [cluster]                     # exactly one of: m + emitter, emitters, distributions
//! m = 12
//! emitter = { mean = 0.1, g2 = 0.01, g3 = 0.0, beta = 1.0 }
//!
//! [chain]
//! route = [0.25, 0.25, 0.25, 0.25]
//! eta = [0.14, 0.14, 0.14, 0.14]
//! collection = 1.0              # optional
//! dark = [0.0, 0.0, 0.0, 0.0]   # optional
//!
//! [analysis]                    # optional
//! error_method = "poisson"      # or "bootstrap"
//! sigma = 3.0
//! bootstrap_resamples = 1000
//! max_order = 4
//!
//! [sweep]                       # required by `sweep`
//! m = [1, 2, 3, 5, 8, 12, 14]
//! eta_scale = [1.0]             # optional
//! pulses = [10_000_000]         # optional, defaults to n_pulses
//!
//! [output]                      # optional
//! dir = "out"
//! progress_interval_secs = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSpec, EmitterSpec};
use crate::detection::DetectionChain;
use crate::error::{Error, Result};
use crate::estimators::{ErrorMethod, ReportOptions, DEFAULT_RESAMPLES, MIN_RESAMPLES};
use crate::simulator::{ClusterSource, SimulationConfig};
use crate::stats::PhotonDistribution;
use crate::witnesses::DEFAULT_SIGMA;

pub const DEFAULT_BLOCK_SIZE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter: Option<EmitterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitters: Option<Vec<EmitterSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<PhotonDistribution>>,
}

impl ClusterConfig {
    pub fn homogeneous(m: f64, emitter: EmitterSpec) -> Self {
        Self { m: Some(m), emitter: Some(emitter), emitters: None, distributions: None }
    }

    pub fn source(&self) -> Result<ClusterSource> {
        match (self.m, self.emitter, &self.emitters, &self.distributions) {
            (Some(m), Some(e), None, None) => Ok(ClusterSource::Homogeneous(ClusterSpec::new(m, e)?)),
            (None, None, Some(list), None) => {
                for e in list {
                    e.validate()?;
                }
                Ok(ClusterSource::Emitters(list.clone()))
            }
            (None, None, None, Some(list)) => Ok(ClusterSource::Distributions(list.clone())),
            _ => Err(Error::Config(
                "[cluster] needs exactly one of: `m` with `emitter`, `emitters`, `distributions`".into(),
            )),
        }
    }

    /// Single-emitter `g(2)` when all emitters share one spec.
    pub fn common_emitter(&self) -> Option<EmitterSpec> {
        match (&self.emitter, &self.emitters) {
            (Some(e), _) => Some(*e),
            (None, Some(list)) if !list.is_empty() && list.iter().all(|e| e == &list[0]) => Some(list[0]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Poisson,
    Bootstrap,
}

impl From<MethodChoice> for ErrorMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Poisson => ErrorMethod::PoissonPropagation,
            MethodChoice::Bootstrap => ErrorMethod::BlockBootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_method")]
    pub error_method: MethodChoice,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_order")]
    pub max_order: usize,
}

fn default_method() -> MethodChoice {
    MethodChoice::Poisson
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}
fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn default_order() -> usize {
    4
}
fn default_block() -> u64 {
    DEFAULT_BLOCK_SIZE
}
fn default_interval() -> f64 {
    1.0
}
fn default_dir() -> PathBuf {
    PathBuf::from("multiphoton-out")
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            error_method: default_method(),
            sigma: default_sigma(),
            bootstrap_resamples: default_resamples(),
            max_order: default_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub m: Vec<f64>,
    #[serde(default = "unit_scale")]
    pub eta_scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulses: Option<Vec<u64>>,
}

fn unit_scale() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_interval")]
    pub progress_interval_secs: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), progress_interval_secs: default_interval() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_pulses: u64,
    #[serde(default = "default_block")]
    pub block_size: u64,
    pub cluster: ClusterConfig,
    pub chain: DetectionChain,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub m: f64,
    pub eta_scale: f64,
    pub pulses: u64,
    pub config: RunConfig,
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML file, or the `config` object embedded in a JSON result file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display()))))?;
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            let cfg: RunConfig =
                serde_json::from_value(inner).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.cluster.source()?;
        if self.analysis.bootstrap_resamples < MIN_RESAMPLES {
            return Err(Error::Config(format!(
                "analysis.bootstrap_resamples must be >= {MIN_RESAMPLES}, got {}",
                self.analysis.bootstrap_resamples
            )));
        }
        if !(self.analysis.sigma > 0.0) || !self.analysis.sigma.is_finite() {
            return Err(Error::Config(format!("analysis.sigma must be positive, got {}", self.analysis.sigma)));
        }
        if self.analysis.max_order < 2 {
            return Err(Error::Config("analysis.max_order must be >= 2".into()));
        }
        if !(self.output.progress_interval_secs >= 0.0) {
            return Err(Error::Config("output.progress_interval_secs must be >= 0".into()));
        }
        if let Some(s) = &self.sweep {
            if s.m.is_empty() || s.eta_scale.is_empty() || s.pulses.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::Config("sweep lists must not be empty".into()));
            }
            if self.cluster.common_emitter().is_none() || self.cluster.emitter.is_none() {
                return Err(Error::Config("sweep over m needs `cluster.m` with `cluster.emitter`".into()));
            }
            for &m in &s.m {
                ClusterSpec::new(m, self.cluster.emitter.expect("checked"))?.emitter_count()?;
            }
            for &f in &s.eta_scale {
                self.chain.scale_efficiency(f)?;
            }
        }
        self.simulation()?.validate()
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        Ok(SimulationConfig {
            cluster: self.cluster.source()?,
            chain: self.chain.clone(),
            n_pulses: self.n_pulses,
            seed: self.seed,
            block_size: self.block_size,
        })
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            sigma: self.analysis.sigma,
            method: self.analysis.error_method.into(),
            resamples: self.analysis.bootstrap_resamples,
            seed: self.seed,
            max_order: self.analysis.max_order,
        }
    }

    /// Every sweep point, `m` outermost, then efficiency scale, then pulses.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let sweep = self.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] table".into()))?;
        let pulses = sweep.pulses.clone().unwrap_or_else(|| vec![self.n_pulses]);
        let mut out = Vec::new();
        for &m in &sweep.m {
            for &scale in &sweep.eta_scale {
                for &n in &pulses {
                    let mut config = self.clone();
                    config.sweep = None;
                    config.cluster.m = Some(m);
                    config.chain = self.chain.scale_efficiency(scale)?;
                    config.n_pulses = n;
                    out.push(SweepPoint { m, eta_scale: scale, pulses: n, config });
                }
            }
        }
        Ok(out)
    }
}
