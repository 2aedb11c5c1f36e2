//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cluster::{derive_c, estimate_m_from_g2, g2_cluster, g3_cluster, theta_k_approx};
use crate::config::{MethodChoice, RunConfig};
use crate::detection::{exact_no_click, DetectionChain};
use crate::error::{Error, Result};
use crate::estimators::{full_report, g_symmetrized, per_subset, SubsetEstimate};
use crate::oracle;
use crate::records;
use crate::simulator::{simulate_with_workers, CountsAccumulator};
use crate::stats::{g_exact, PhotonDistribution};
use crate::witnesses::{WitnessEntry, WitnessReport};

#[derive(Debug, Parser)]
#[command(name = "multiphoton", version, about = "Simulate and analyze multiphoton statistics of emitter clusters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Override the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub error_method: Option<MethodArg>,
    /// Significance multiplier for verdicts.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// No progress or report on the terminal.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Poisson,
    Bootstrap,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and report every witness.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write the per-pulse click records (gzip if the name ends in .gz).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Simulate every point of the [sweep] table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Analyze a click-record file; the config supplies the chain and analysis settings.
    Analyze {
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare simulation, closed forms and exact enumeration on a small configuration.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Infeasible { .. } | Error::Domain(_) | Error::Degenerate(_) | Error::NotInvertible(_) => 3,
        Error::Parse { .. }
        | Error::DataMismatch(_)
        | Error::ShapeMismatch(_)
        | Error::InsufficientData(_)
        | Error::AbsentData(_) => 4,
        Error::Capacity { .. } => 5,
        Error::Io(_) => 1,
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { config, records } => cmd_run(&load(config, &cli.common)?, &cli.common, records.as_deref()),
        Command::Sweep { config } => cmd_sweep(&load(config, &cli.common)?, &cli.common),
        Command::Analyze { records, config } => cmd_analyze(records, load(config, &cli.common)?, &cli.common),
        Command::OracleCheck { config } => cmd_oracle_check(&load(config, &cli.common)?, &cli.common),
    }
}

/// Loads a config and applies command-line overrides.
pub fn load(path: &Path, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.error_method {
        cfg.analysis.error_method = match m {
            MethodArg::Poisson => MethodChoice::Poisson,
            MethodArg::Bootstrap => MethodChoice::Bootstrap,
        };
    }
    if let Some(s) = args.sigma {
        cfg.analysis.sigma = s;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(args: &CommonArgs) -> usize {
    args.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

struct ProgressPrinter {
    label: String,
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl ProgressPrinter {
    fn new(label: String, cfg: &RunConfig) -> Self {
        Self { label, interval: Duration::from_secs_f64(cfg.output.progress_interval_secs), last: Mutex::new(None) }
    }

    fn report(&self, done: u64, total: u64) {
        let mut last = self.last.lock().expect("progress lock");
        let now = Instant::now();
        if done < total && last.is_some_and(|t| now - t < self.interval) {
            return;
        }
        *last = Some(now);
        eprintln!("{}{:5.1}% ({done}/{total} pulses)", self.label, 100.0 * done as f64 / total.max(1) as f64);
    }
}

fn simulate_config(cfg: &RunConfig, args: &CommonArgs, label: String) -> Result<CountsAccumulator> {
    let sim = cfg.simulation()?;
    if args.quiet {
        return simulate_with_workers(&sim, workers(args), None);
    }
    let printer = ProgressPrinter::new(label, cfg);
    let report = |d: u64, t: u64| printer.report(d, t);
    simulate_with_workers(&sim, workers(args), Some(&report))
}

/// Cluster size implied by the measured `g(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub single_emitter_g2: f64,
    pub m: f64,
    pub std_error: f64,
}

/// Model predictions for a homogeneous cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelValues {
    /// `g(2..4)`.
    pub g: Vec<f64>,
    /// `NP(2..4)`.
    pub np: Vec<f64>,
    /// Low-efficiency `theta(2..4) - 1`.
    pub theta_minus_1_approx: Vec<f64>,
    /// Exact `theta(2..4) - 1` on the first `k` bins.
    pub theta_minus_1_exact: Vec<f64>,
}

/// Machine-readable result of `run` and `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub counts: CountsAccumulator,
    pub report: WitnessReport,
    pub subsets: Vec<SubsetEstimate>,
    pub cluster_size: Option<SizeEstimate>,
    pub model: Option<ModelValues>,
}

fn exact_theta_minus_1(dist: &PhotonDistribution, chain: &DetectionChain, k: usize) -> f64 {
    if chain.bins() < k {
        return f64::NAN;
    }
    let subset = (1u32 << k) - 1;
    let product: f64 = (0..k).map(|i| exact_no_click(dist, chain, 1 << i)).product();
    exact_no_click(dist, chain, subset) / product - 1.0
}

/// Model values when the configured cluster is homogeneous with integer size.
pub fn model_values(cfg: &RunConfig) -> Result<Option<ModelValues>> {
    let (Some(m), Some(e)) = (cfg.cluster.m, cfg.cluster.emitter) else {
        return Ok(None);
    };
    let dist = cfg.simulation()?.cluster.distribution()?;
    let (g2_1, g3_1) = (e.effective_g2(), e.effective_g3());
    let g2 = g2_cluster(m, g2_1)?;
    let g3 = g3_cluster(m, g2_1, g3_1)?;
    let g4 = g_exact(&dist, 4)?;
    let c = derive_c(&cfg.chain, &e);
    Ok(Some(ModelValues {
        g: vec![g2, g3, g4],
        np: vec![g2 - 1.0, g3 - g2 * g2, g2 * g4 - g3 * g3],
        theta_minus_1_approx: (2..=4).map(|k| theta_k_approx(c, k, m, g2_1)).collect::<Result<_>>()?,
        theta_minus_1_exact: (2..=4).map(|k| exact_theta_minus_1(&dist, &cfg.chain, k)).collect(),
    }))
}

fn size_estimate(cfg: &RunConfig, acc: &CountsAccumulator) -> Option<SizeEstimate> {
    let e = cfg.cluster.common_emitter()?;
    let g2 = g_symmetrized(acc, 2).ok().filter(|g| !g.upper_bound)?;
    let g2_1 = e.effective_g2();
    let m = estimate_m_from_g2(g2.value, g2_1).ok()?;
    let dm = (1.0 - g2_1) / (1.0 - g2.value).powi(2);
    Some(SizeEstimate { single_emitter_g2: g2_1, m, std_error: dm * g2.std_error })
}

/// Everything reported about one accumulator under one config.
pub fn analyze_counts(cfg: &RunConfig, acc: CountsAccumulator) -> Result<RunResult> {
    let opts = cfg.report_options();
    Ok(RunResult {
        config: cfg.clone(),
        report: full_report(&acc, &opts),
        subsets: per_subset(&acc, opts.max_order),
        cluster_size: size_estimate(cfg, &acc),
        model: model_values(cfg)?,
        counts: acc,
    })
}

fn fmt_model(values: &[f64]) -> String {
    values.iter().enumerate().map(|(i, v)| format!("k={}: {v:.6e}", i + 2)).collect::<Vec<_>>().join("  ")
}

pub fn report_text(result: &RunResult) -> String {
    let mut out = result.report.to_text();
    if let Some(s) = &result.cluster_size {
        let _ = writeln!(
            out,
            "\n[cluster size] m = {:.4} +/- {:.4} (single-emitter g2 {})",
            s.m, s.std_error, s.single_emitter_g2
        );
    }
    if let Some(model) = &result.model {
        let _ = writeln!(out, "\n[model]");
        let _ = writeln!(out, "  g(k):              {}", fmt_model(&model.g));
        let _ = writeln!(out, "  NP(k):             {}", fmt_model(&model.np));
        let _ = writeln!(out, "  theta(k)-1 approx: {}", fmt_model(&model.theta_minus_1_approx));
        let _ = writeln!(out, "  theta(k)-1 exact:  {}", fmt_model(&model.theta_minus_1_exact));
    }
    out
}

fn write_outputs(result: &RunResult, args: &CommonArgs) -> Result<()> {
    let dir = &result.config.output.dir;
    std::fs::create_dir_all(dir)?;
    let text = report_text(result);
    std::fs::write(dir.join("report.txt"), &text)?;
    let json = serde_json::to_string_pretty(result).expect("result serializes");
    std::fs::write(dir.join("result.json"), json + "\n")?;
    if !args.quiet {
        print!("{text}");
    }
    Ok(())
}

pub fn cmd_run(cfg: &RunConfig, args: &CommonArgs, records_path: Option<&Path>) -> Result<i32> {
    let acc = simulate_config(cfg, args, String::new())?;
    if let Some(path) = records_path {
        let gzip = path.extension().is_some_and(|e| e == "gz");
        records::write_simulated_records(path, &cfg.simulation()?, gzip)?;
    }
    write_outputs(&analyze_counts(cfg, acc)?, args)?;
    Ok(0)
}

pub fn cmd_analyze(path: &Path, mut cfg: RunConfig, args: &CommonArgs) -> Result<i32> {
    let (header, acc) = records::read_records(path)?;
    if header.bins != cfg.chain.bins() {
        return Err(Error::DataMismatch(format!(
            "record file has {} bins, config chain has {}",
            header.bins,
            cfg.chain.bins()
        )));
    }
    cfg.n_pulses = header.pulses;
    cfg.seed = header.seed;
    write_outputs(&analyze_counts(&cfg, acc)?, args)?;
    Ok(0)
}

fn entry_cells(entry: Option<&WitnessEntry>, offset: f64) -> [String; 2] {
    match entry.and_then(|e| e.value.zip(e.std_error)) {
        Some((v, s)) => [format!("{}", v - offset), format!("{s}")],
        None => ["nan".into(), "nan".into()],
    }
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "m", "eta_scale", "pulses", "detected_mean",
    "g2", "g2_err", "g2_model", "g3", "g3_err", "g3_model", "g4", "g4_err", "g4_model",
    "np2", "np2_err", "np2_model", "np3", "np3_err", "np3_model", "np4", "np4_err", "np4_model",
    "theta2_minus_1", "theta2_minus_1_err", "theta2_minus_1_approx", "theta2_minus_1_exact",
    "theta3_minus_1", "theta3_minus_1_err", "theta3_minus_1_approx", "theta3_minus_1_exact",
    "theta4_minus_1", "theta4_minus_1_err", "theta4_minus_1_approx", "theta4_minus_1_exact",
];

/// One sweep row, in [`SWEEP_COLUMNS`] order.
pub fn sweep_row(m: f64, eta_scale: f64, result: &RunResult) -> Vec<String> {
    let acc = &result.counts;
    let detected = acc.singles().iter().sum::<u64>() as f64 / acc.pulses().max(1) as f64;
    let mut row = vec![format!("{m}"), format!("{eta_scale}"), acc.pulses().to_string(), format!("{detected}")];
    let model = result.model.as_ref();
    let pick = |v: Option<&Vec<f64>>, i: usize| v.and_then(|v| v.get(i)).map_or("nan".to_string(), |x| format!("{x}"));
    for k in 2..=4 {
        row.extend(entry_cells(result.report.g(k), 0.0));
        row.push(pick(model.map(|m| &m.g), k - 2));
    }
    for k in 2..=4 {
        row.extend(entry_cells(result.report.np(k), 0.0));
        row.push(pick(model.map(|m| &m.np), k - 2));
    }
    for k in 2..=4 {
        row.extend(entry_cells(result.report.theta(k), 1.0));
        row.push(pick(model.map(|m| &m.theta_minus_1_approx), k - 2));
        row.push(pick(model.map(|m| &m.theta_minus_1_exact), k - 2));
    }
    row
}

pub fn cmd_sweep(cfg: &RunConfig, args: &CommonArgs) -> Result<i32> {
    let points = cfg.sweep_points()?;
    let mut tsv = String::new();
    for line in cfg.to_toml().lines() {
        let _ = writeln!(tsv, "# {line}");
    }
    let _ = writeln!(tsv, "{}", SWEEP_COLUMNS.join("\t"));
    let total = points.len();
    for (i, p) in points.iter().enumerate() {
        let label = format!("[{}/{total}] m={} eta_scale={} ", i + 1, p.m, p.eta_scale);
        let acc = simulate_config(&p.config, args, label)?;
        let result = analyze_counts(&p.config, acc)?;
        let _ = writeln!(tsv, "{}", sweep_row(p.m, p.eta_scale, &result).join("\t"));
    }
    std::fs::create_dir_all(&cfg.output.dir)?;
    std::fs::write(cfg.output.dir.join("sweep.tsv"), &tsv)?;
    if !args.quiet {
        print!("{}", tsv.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    }
    Ok(0)
}

pub fn cmd_oracle_check(cfg: &RunConfig, args: &CommonArgs) -> Result<i32> {
    let checks = oracle::run_checks(&cfg.simulation()?)?;
    let mut text = format!("{:<34} {:>12} {:>12}  result\n", "check", "statistic", "threshold");
    for c in &checks {
        let _ = writeln!(text, "{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(text, "{} of {} checks passed", checks.len() - failed, checks.len());
    std::fs::create_dir_all(&cfg.output.dir)?;
    std::fs::write(cfg.output.dir.join("oracle.txt"), &text)?;
    if !args.quiet {
        print!("{text}");
    }
    Ok(if failed == 0 { 0 } else { 1 })
}
