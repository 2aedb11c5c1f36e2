//! Monte Carlo pulse engine.
//!
//! Each pulse: every emitter is on with probability `beta` and then emits a
//! photon number drawn from its on-state distribution; every photon is
//! routed to one bin (or lost) with the chain's trigger probabilities; every
//! bin additionally clicks from background with probability `1 - exp(-nu)`.
//!
//! Pulses are grouped into blocks. Block `b` draws from its own ChaCha8
//! stream `(seed, b)`, so the result does not depend on how blocks are
//! scheduled over threads.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{blinking_adjusted_emitter, ClusterSpec, EmitterSpec};
use crate::detection::{full_mask, superset_sum, ClickPattern, DetectionChain, MAX_BINS};
use crate::error::{Error, Result};
use crate::stats::{convolve_all, PhotonDistribution};

/// Emitters of a simulated cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSource {
    /// `m` identical emitters.
    Homogeneous(ClusterSpec),
    /// One spec per emitter.
    Emitters(Vec<EmitterSpec>),
    /// One per-pulse photon-number distribution per emitter, no blinking.
    Distributions(Vec<PhotonDistribution>),
}

impl ClusterSource {
    /// Per-pulse photon statistics of each emitter, blinking included.
    pub fn emitter_distributions(&self) -> Result<Vec<PhotonDistribution>> {
        match self {
            ClusterSource::Homogeneous(c) => {
                let d = blinking_adjusted_emitter(&c.emitter)?;
                Ok(vec![d; c.emitter_count()?])
            }
            ClusterSource::Emitters(list) => list.iter().map(blinking_adjusted_emitter).collect(),
            ClusterSource::Distributions(list) => Ok(list.clone()),
        }
    }

    /// Exact photon statistics of the whole cluster.
    pub fn distribution(&self) -> Result<PhotonDistribution> {
        match self {
            ClusterSource::Homogeneous(c) => c.distribution(),
            _ => Ok(convolve_all(&self.emitter_distributions()?)),
        }
    }

    pub fn emitter_count(&self) -> Result<usize> {
        match self {
            ClusterSource::Homogeneous(c) => c.emitter_count(),
            ClusterSource::Emitters(l) => Ok(l.len()),
            ClusterSource::Distributions(l) => Ok(l.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub cluster: ClusterSource,
    pub chain: DetectionChain,
    pub n_pulses: u64,
    pub seed: u64,
    pub block_size: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be >= 1".into()));
        }
        if self.n_pulses.checked_add(self.block_size - 1).is_none() {
            return Err(Error::Config("n_pulses overflows the block arithmetic".into()));
        }
        if self.cluster.emitter_count()? == 0 {
            return Err(Error::Config("cluster has no emitters".into()));
        }
        Ok(())
    }

    pub fn blocks(&self) -> u64 {
        self.n_pulses.div_ceil(self.block_size)
    }

    fn block_range(&self, block: u64) -> (u64, u64) {
        let start = block * self.block_size;
        (start, (start + self.block_size).min(self.n_pulses))
    }
}

/// Pulse and click totals for a bin network. The pattern histogram is the
/// primary record; singles and coincidences are derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AccumulatorRecord", into = "AccumulatorRecord")]
pub struct CountsAccumulator {
    bins: usize,
    pulses: u64,
    histogram: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AccumulatorRecord {
    bins: usize,
    pulses: u64,
    singles: Vec<u64>,
    /// Subset (as a bin string) to the number of pulses in which all its bins clicked.
    coincidences: std::collections::BTreeMap<String, u64>,
    /// Pattern (as a bin string) to the number of pulses with exactly that pattern.
    pattern_histogram: std::collections::BTreeMap<String, u64>,
}

impl From<CountsAccumulator> for AccumulatorRecord {
    fn from(acc: CountsAccumulator) -> Self {
        let table = acc.coincidence_table();
        let coincidences = (0..table.len() as u32)
            .filter(|m| m.count_ones() >= 2)
            .map(|m| (ClickPattern(m).to_bits(acc.bins), table[m as usize]))
            .collect();
        let pattern_histogram = acc
            .histogram
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(m, c)| (ClickPattern(m as u32).to_bits(acc.bins), *c))
            .collect();
        Self { bins: acc.bins, pulses: acc.pulses, singles: acc.singles(), coincidences, pattern_histogram }
    }
}

impl TryFrom<AccumulatorRecord> for CountsAccumulator {
    type Error = Error;

    fn try_from(rec: AccumulatorRecord) -> Result<Self> {
        let mut acc = CountsAccumulator::new(rec.bins)?;
        for (bits, count) in &rec.pattern_histogram {
            let p = ClickPattern::from_bits(bits)
                .filter(|_| bits.len() == rec.bins)
                .ok_or_else(|| Error::DataMismatch(format!("bad pattern key {bits:?}")))?;
            acc.histogram[p.0 as usize] += count;
        }
        acc.pulses = acc.histogram.iter().sum();
        if acc.pulses != rec.pulses || acc.singles() != rec.singles {
            return Err(Error::DataMismatch("accumulator totals disagree with its pattern histogram".into()));
        }
        let table = acc.coincidence_table();
        for (bits, count) in &rec.coincidences {
            let p = ClickPattern::from_bits(bits)
                .ok_or_else(|| Error::DataMismatch(format!("bad subset key {bits:?}")))?;
            if table.get(p.0 as usize) != Some(count) {
                return Err(Error::DataMismatch(format!("coincidence total for {bits} disagrees")));
            }
        }
        Ok(acc)
    }
}

impl CountsAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 || bins > MAX_BINS {
            return Err(Error::Capacity { what: "bins".into(), value: bins, max: MAX_BINS });
        }
        Ok(Self { bins, pulses: 0, histogram: vec![0; 1 << bins] })
    }

    /// Builds an accumulator from a full pattern histogram.
    pub fn from_histogram(bins: usize, histogram: Vec<u64>) -> Result<Self> {
        if histogram.len() != 1 << bins {
            return Err(Error::ShapeMismatch(format!(
                "histogram of length {} for {bins} bins",
                histogram.len()
            )));
        }
        let mut acc = Self::new(bins)?;
        acc.pulses = histogram.iter().sum();
        acc.histogram = histogram;
        Ok(acc)
    }

    #[inline]
    pub fn record(&mut self, pattern: ClickPattern) {
        self.histogram[pattern.0 as usize] += 1;
        self.pulses += 1;
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn pulses(&self) -> u64 {
        self.pulses
    }

    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }

    pub fn full_mask(&self) -> u32 {
        full_mask(self.bins)
    }

    /// Click totals per bin.
    pub fn singles(&self) -> Vec<u64> {
        let table = self.coincidence_table();
        (0..self.bins).map(|i| table[1 << i]).collect()
    }

    /// For every subset mask, the number of pulses in which all its bins clicked.
    pub fn coincidence_table(&self) -> Vec<u64> {
        let mut t = self.histogram.clone();
        superset_sum(&mut t, self.bins);
        t
    }

    pub fn coincidence(&self, subset: u32) -> u64 {
        self.histogram
            .iter()
            .enumerate()
            .filter(|(m, _)| (*m as u32) & subset == subset)
            .map(|(_, c)| c)
            .sum()
    }

    /// Number of pulses in which no bin of `subset` clicked.
    pub fn no_click(&self, subset: u32) -> u64 {
        self.histogram
            .iter()
            .enumerate()
            .filter(|(m, _)| (*m as u32) & subset == 0)
            .map(|(_, c)| c)
            .sum()
    }

    /// Field-wise sum.
    pub fn merge(&self, other: &CountsAccumulator) -> Result<CountsAccumulator> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &CountsAccumulator) -> Result<()> {
        if self.bins != other.bins {
            return Err(Error::ShapeMismatch(format!(
                "cannot merge {}-bin and {}-bin accumulators",
                self.bins, other.bins
            )));
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.pulses += other.pulses;
        Ok(())
    }
}

/// Free-function form of [`CountsAccumulator::merge`].
pub fn merge(a: &CountsAccumulator, b: &CountsAccumulator) -> Result<CountsAccumulator> {
    a.merge(b)
}

#[inline]
fn threshold(p: f64) -> u64 {
    // u < threshold(p) has probability p for u uniform on u64
    if p >= 1.0 {
        u64::MAX
    } else if p <= 0.0 {
        0
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Cumulative thresholds of one emitter's photon number: `n` is the number
/// of thresholds the uniform draw reaches.
#[derive(Debug, Clone)]
struct EmitterSampler {
    cumulative: Vec<u64>,
}

impl EmitterSampler {
    fn new(dist: &PhotonDistribution) -> Self {
        let probs = dist.probs();
        let mut acc = 0.0;
        let cumulative = probs[..probs.len() - 1]
            .iter()
            .map(|p| {
                acc += p;
                threshold(acc)
            })
            .collect();
        Self { cumulative }
    }

    #[inline]
    fn sample(&self, u: u64) -> usize {
        // most pulses emit nothing
        match self.cumulative.first() {
            None => 0,
            Some(&t0) if u < t0 => 0,
            Some(_) => self.cumulative.iter().take_while(|&&t| u >= t).count(),
        }
    }
}

/// Pre-computed sampling tables for a configuration.
#[derive(Debug, Clone)]
pub struct PulseEngine {
    emitters: Vec<EmitterSampler>,
    /// Cumulative per-photon bin thresholds; draws past the last are lost photons.
    route: Vec<u64>,
    dark: Vec<(u32, u64)>,
    bins: usize,
}

impl PulseEngine {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let emitters = config.cluster.emitter_distributions()?.iter().map(EmitterSampler::new).collect();
        let mut acc = 0.0;
        let route = config
            .chain
            .trigger_probs()
            .iter()
            .map(|q| {
                acc += q;
                threshold(acc.min(1.0))
            })
            .collect();
        let dark = config
            .chain
            .dark()
            .iter()
            .enumerate()
            .filter(|(_, nu)| **nu > 0.0)
            .map(|(i, nu)| (1u32 << i, threshold(1.0 - (-nu).exp())))
            .collect();
        Ok(Self { emitters, route, dark, bins: config.chain.bins() })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Click pattern of one pulse.
    #[inline]
    pub fn pulse<R: RngCore>(&self, rng: &mut R) -> ClickPattern {
        let mut mask = 0u32;
        for e in &self.emitters {
            let n = e.sample(rng.next_u64());
            for _ in 0..n {
                let u = rng.next_u64();
                if let Some(bin) = self.route.iter().position(|&t| u < t) {
                    mask |= 1 << bin;
                }
            }
        }
        for &(bit, t) in &self.dark {
            if rng.next_u64() < t {
                mask |= bit;
            }
        }
        ClickPattern(mask)
    }
}

/// Stream for block `block` of a run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn run_block<R, F, S>(engine: &PulseEngine, config: &SimulationConfig, block: u64, make_rng: &F, mut sink: S)
where
    R: RngCore,
    F: Fn(u64, u64) -> R,
    S: FnMut(ClickPattern),
{
    let (start, end) = config.block_range(block);
    let mut rng = make_rng(config.seed, block);
    for _ in start..end {
        sink(engine.pulse(&mut rng));
    }
}

/// Progress callback: `(pulses done, pulses total)`.
pub type Progress<'a> = &'a (dyn Fn(u64, u64) + Sync);

/// Runs the configured number of pulses on the current rayon pool.
pub fn simulate(config: &SimulationConfig) -> Result<CountsAccumulator> {
    simulate_with_rng(config, block_rng, None)
}

pub fn simulate_with_progress(config: &SimulationConfig, progress: Progress<'_>) -> Result<CountsAccumulator> {
    simulate_with_rng(config, block_rng, Some(progress))
}

/// [`simulate`] with a caller-supplied stream factory `(seed, block) -> rng`.
pub fn simulate_with_rng<R, F>(
    config: &SimulationConfig,
    make_rng: F,
    progress: Option<Progress<'_>>,
) -> Result<CountsAccumulator>
where
    R: RngCore,
    F: Fn(u64, u64) -> R + Sync,
{
    let engine = PulseEngine::new(config)?;
    let bins = engine.bins();
    let done = AtomicU64::new(0);
    let blocks: Vec<CountsAccumulator> = (0..config.blocks())
        .into_par_iter()
        .map(|b| {
            let mut acc = CountsAccumulator::new(bins).expect("validated bin count");
            run_block(&engine, config, b, &make_rng, |p| acc.record(p));
            if let Some(report) = progress {
                let total = done.fetch_add(acc.pulses(), Ordering::Relaxed) + acc.pulses();
                report(total, config.n_pulses);
            }
            acc
        })
        .collect();
    let mut out = CountsAccumulator::new(bins)?;
    for b in &blocks {
        out.merge_from(b)?;
    }
    Ok(out)
}

/// Runs on a dedicated pool of `workers` threads.
pub fn simulate_with_workers(
    config: &SimulationConfig,
    workers: usize,
    progress: Option<Progress<'_>>,
) -> Result<CountsAccumulator> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| simulate_with_rng(config, block_rng, progress))
}

/// Per-pulse click patterns of the same run [`simulate`] performs, in pulse order.
pub fn synthesize_records(config: &SimulationConfig) -> Result<RecordStream> {
    Ok(RecordStream { engine: PulseEngine::new(config)?, config: config.clone(), block: 0, buffer: Vec::new(), pos: 0 })
}

pub struct RecordStream {
    engine: PulseEngine,
    config: SimulationConfig,
    block: u64,
    buffer: Vec<ClickPattern>,
    pos: usize,
}

impl Iterator for RecordStream {
    type Item = ClickPattern;

    fn next(&mut self) -> Option<ClickPattern> {
        while self.pos == self.buffer.len() {
            if self.block >= self.config.blocks() {
                return None;
            }
            self.buffer.clear();
            self.pos = 0;
            let buffer = &mut self.buffer;
            run_block(&self.engine, &self.config, self.block, &block_rng, |p| buffer.push(p));
            self.block += 1;
        }
        self.pos += 1;
        Some(self.buffer[self.pos - 1])
    }
}
