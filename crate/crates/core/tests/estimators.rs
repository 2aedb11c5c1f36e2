use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multiphoton::cluster::{estimate_m_from_g2, ClusterSpec, EmitterSpec};
use multiphoton::config::RunConfig;
use multiphoton::detection::{exact_click_distribution, expected_counts, DetectionChain};
use multiphoton::estimators::{
    bootstrap, full_report, g_from_counts, g_symmetrized, per_subset, subsets_of_size, theta_from_counts,
    theta_symmetrized, ErrorMethod, ReportOptions,
};
use multiphoton::simulator::{simulate, ClusterSource, CountsAccumulator, SimulationConfig};
use multiphoton::stats::{cluster_distribution, g_exact, solve_distribution, PhotonDistribution};
use multiphoton::witnesses::Verdict;
use multiphoton::Error;

fn cluster(m: f64, chain: DetectionChain, n_pulses: u64, seed: u64) -> SimulationConfig {
    let e = EmitterSpec::new(0.1, 0.01, 0.0, 1.0).unwrap();
    SimulationConfig {
        cluster: ClusterSource::Homogeneous(ClusterSpec::new(m, e).unwrap()),
        chain,
        n_pulses,
        seed,
        block_size: 1 << 18,
    }
}

fn coherent(q: f64, n_pulses: u64, seed: u64) -> SimulationConfig {
    // per-bin click probability q through a lossless balanced chain
    let mean = -4.0 * (1.0 - q).ln();
    SimulationConfig {
        cluster: ClusterSource::Distributions(vec![PhotonDistribution::poisson(mean).unwrap()]),
        chain: DetectionChain::quarters(1.0, 1.0, 0.0).unwrap(),
        n_pulses,
        seed,
        block_size: 1 << 18,
    }
}

fn within(value: f64, target: f64, err: f64, sigmas: f64) -> bool {
    (value - target).abs() <= sigmas * err
}

#[test]
fn coincidence_ratio_arithmetic() {
    let n = 1_000_000u64;
    // patterns 00, 10, 01, 11 (bit i is bin i)
    let acc = CountsAccumulator::from_histogram(2, vec![n - 19_950, 9_950, 9_950, 50]).unwrap();
    let g = g_from_counts(&acc, 0b11).unwrap();
    assert!((g.value - 0.5).abs() < 1e-12);
    assert_eq!(g.n_effective, n);
    assert_eq!(g.method, ErrorMethod::PoissonPropagation);
    assert!(g.std_error > 0.0 && !g.upper_bound);
}

#[test]
fn zero_singles_and_zero_coincidences() {
    let acc = CountsAccumulator::from_histogram(2, vec![100, 5, 0, 0]).unwrap();
    assert!(matches!(g_from_counts(&acc, 0b11), Err(Error::InsufficientData(_))));
    let acc = CountsAccumulator::from_histogram(2, vec![100, 5, 5, 0]).unwrap();
    let g = g_from_counts(&acc, 0b11).unwrap();
    assert_eq!(g.value, 0.0);
    assert!(g.upper_bound && g.std_error > 0.0);
}

#[test]
fn silent_detector_gives_theta_one() {
    let acc = CountsAccumulator::from_histogram(4, {
        let mut h = vec![0; 16];
        h[0] = 1000;
        h
    })
    .unwrap();
    for s in (1u32..16).filter(|s| s.count_ones() >= 2) {
        let t = theta_from_counts(&acc, s).unwrap();
        assert_eq!(t.value, 1.0);
        assert_eq!(t.std_error, 0.0);
    }
    let b = bootstrap(&acc, |a| theta_symmetrized(a, 2).map(|e| e.value), 50, 1).unwrap();
    assert_eq!(b.std_error, 0.0);
    assert_eq!(b.method, ErrorMethod::BlockBootstrap);
}

#[test]
fn bootstrap_rejects_few_resamples() {
    let acc = simulate(&coherent(0.01, 10_000, 1)).unwrap();
    assert!(bootstrap(&acc, |a| theta_symmetrized(a, 2).map(|e| e.value), 9, 1).is_err());
}

#[test]
fn coherent_light_sits_on_the_boundary() {
    let acc = simulate(&coherent(1e-2, 10_000_000, 21)).unwrap();
    for k in 2..=3 {
        let g = g_symmetrized(&acc, k).unwrap();
        assert!(within(g.value, 1.0, g.std_error, 3.0), "g{k} = {} +/- {}", g.value, g.std_error);
        let t = theta_symmetrized(&acc, k).unwrap();
        assert!(within(t.value, 1.0, t.std_error, 3.0), "theta{k} = {} +/- {}", t.value, t.std_error);
    }
}

#[test]
fn bootstrap_agrees_with_propagation() {
    let acc = simulate(&coherent(1e-2, 1_000_000, 5)).unwrap();
    let prop = g_symmetrized(&acc, 2).unwrap();
    let boot = bootstrap(&acc, |a| g_symmetrized(a, 2).map(|e| e.value), 1000, 9).unwrap();
    let ratio = boot.std_error / prop.std_error;
    assert!((1.0 / 1.5..=1.5).contains(&ratio), "bootstrap/propagation = {ratio}");
    assert_eq!(boot.value, prop.value);
}

#[test]
fn bootstrap_is_seed_deterministic() {
    let acc = simulate(&coherent(2e-2, 200_000, 5)).unwrap();
    let f = |a: &CountsAccumulator| g_symmetrized(a, 2).map(|e| e.value);
    assert_eq!(bootstrap(&acc, f, 200, 3).unwrap(), bootstrap(&acc, f, 200, 3).unwrap());
    assert_ne!(bootstrap(&acc, f, 200, 3).unwrap().std_error, bootstrap(&acc, f, 200, 4).unwrap().std_error);
}

#[test]
fn errors_scale_as_inverse_root_pulses() {
    let chain = DetectionChain::quarters(0.7, 0.2, 0.0).unwrap();
    let small = simulate(&cluster(5.0, chain.clone(), 100_000, 2)).unwrap();
    let large = simulate(&cluster(5.0, chain, 10_000_000, 3)).unwrap();
    for (name, a, b) in [
        ("g2", g_symmetrized(&small, 2).unwrap().std_error, g_symmetrized(&large, 2).unwrap().std_error),
        ("theta2", theta_symmetrized(&small, 2).unwrap().std_error, theta_symmetrized(&large, 2).unwrap().std_error),
    ] {
        let ratio = a / b;
        assert!((ratio / 10.0 - 1.0).abs() <= 0.2, "{name}: error ratio over 100x pulses = {ratio}");
    }
    let f = |a: &CountsAccumulator| g_symmetrized(a, 2).map(|e| e.value);
    let ratio = bootstrap(&small, f, 300, 1).unwrap().std_error / bootstrap(&large, f, 300, 1).unwrap().std_error;
    assert!((ratio / 10.0 - 1.0).abs() <= 0.2, "bootstrap error ratio = {ratio}");
}

#[test]
fn efficiency_invariance() {
    let full = DetectionChain::quarters(0.7, 0.4, 0.0).unwrap();
    let half = full.scale_efficiency(0.5).unwrap();
    let a = simulate(&cluster(5.0, full, 4_000_000, 31)).unwrap();
    let b = simulate(&cluster(5.0, half, 4_000_000, 32)).unwrap();
    for k in 2..=3 {
        let (x, y) = (g_symmetrized(&a, k).unwrap(), g_symmetrized(&b, k).unwrap());
        let combined = x.std_error.hypot(y.std_error);
        assert!(within(x.value, y.value, combined, 3.0), "g{k}: {} vs {} (+/- {combined})", x.value, y.value);
    }
}

#[test]
fn subsets_agree_on_a_uniform_chain() {
    let acc = simulate(&cluster(8.0, DetectionChain::quarters(0.7, 0.2, 0.0).unwrap(), 5_000_000, 41)).unwrap();
    for k in 2..=3 {
        let sym = g_symmetrized(&acc, k).unwrap();
        let subsets = subsets_of_size(4, k);
        assert_eq!(subsets.len(), if k == 2 { 6 } else { 4 });
        for s in subsets {
            let g = g_from_counts(&acc, s).unwrap();
            assert!(within(g.value, sym.value, g.std_error, 3.0), "subset {s:#b}: {} vs {}", g.value, sym.value);
        }
    }
    let rows = per_subset(&acc, 4);
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.g.is_some() && r.theta.is_some()));
}

#[test]
fn estimator_bias_is_small_at_low_click_probability() {
    let single = solve_distribution(0.1, 0.01, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for m in 1..=14 {
        let d = cluster_distribution(&single, m).unwrap();
        // per-bin click probability at most 0.05
        let eta = (0.05 / (d.mean() / 4.0)).min(1.0);
        let chain = DetectionChain::quarters(1.0, eta, 0.0).unwrap();
        let rates = expected_counts(&exact_click_distribution(&d, &chain).unwrap());
        assert!(rates.single(0) <= 0.05 + 1e-12);
        for (k, subset) in [(2, 0b11u32), (3, 0b111)] {
            let truth = g_exact(&d, k).unwrap();
            worst = worst.max((rates.g(subset) - truth).abs());
        }
    }
    assert!(worst < 0.02, "largest estimator bias {worst}");
}

#[test]
fn classical_inputs_never_flag_theta() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let opts = ReportOptions::default();
    for i in 0..100 {
        let parts: Vec<(f64, PhotonDistribution)> = (0..rng.random_range(1..4))
            .map(|_| (rng.random_range(0.1..1.0), PhotonDistribution::poisson(rng.random_range(0.0..0.3)).unwrap()))
            .collect();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let weighted: Vec<(f64, &PhotonDistribution)> = parts.iter().map(|(w, d)| (w / total, d)).collect();
        let cfg = SimulationConfig {
            cluster: ClusterSource::Distributions(vec![PhotonDistribution::mixture(&weighted).unwrap()]),
            chain: DetectionChain::quarters(rng.random_range(0.3..=1.0), rng.random_range(0.3..=1.0), 0.0).unwrap(),
            n_pulses: 200_000,
            seed: i,
            block_size: 1 << 16,
        };
        let report = full_report(&simulate(&cfg).unwrap(), &opts);
        for e in &report.theta {
            assert_ne!(e.verdict, Verdict::Nonclassical, "config {i}: theta({}) = {:?} +/- {:?}", e.order, e.value, e.std_error);
        }
    }
}

#[test]
fn theta_order_ratios_at_m12() {
    let cfg = RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/cluster_m12.toml")).unwrap();
    let mut sim = cfg.simulation().unwrap();
    sim.n_pulses = 20_000_000;
    let acc = simulate(&sim).unwrap();
    let t: Vec<f64> = (2..=4).map(|k| theta_symmetrized(&acc, k).unwrap().value - 1.0).collect();
    assert!(t.iter().all(|v| *v < 0.0));
    assert!((t[1] / t[0] / 3.0 - 1.0).abs() <= 0.1, "theta3 ratio {}", t[1] / t[0]);
    assert!((t[2] / t[0] / 6.0 - 1.0).abs() <= 0.1, "theta4 ratio {}", t[2] / t[0]);
}

fn expected_histogram(cfg: &RunConfig, pulses: f64) -> CountsAccumulator {
    let sim = cfg.simulation().unwrap();
    let probs = exact_click_distribution(&sim.cluster.distribution().unwrap(), &sim.chain).unwrap().probs;
    CountsAccumulator::from_histogram(4, probs.iter().map(|p| (p * pulses).round() as u64).collect()).unwrap()
}

#[test]
fn np4_needs_more_pulses() {
    let cfg = RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/cluster_m12.toml")).unwrap();
    let opts = ReportOptions::default();
    let matched = full_report(&expected_histogram(&cfg, 1e8), &opts);
    let np4 = matched.np(4).unwrap();
    assert!(np4.value.unwrap() < 0.0);
    assert_eq!(np4.verdict, Verdict::Inconclusive);
    let longer = full_report(&expected_histogram(&cfg, 1e10), &opts);
    let np4 = longer.np(4).unwrap();
    assert_eq!(np4.verdict, Verdict::Nonclassical, "{np4:?}");
    assert!(np4.significance().unwrap() >= 3.0);
}

#[test]
fn empty_report_is_inconclusive() {
    let report = full_report(&CountsAccumulator::new(4).unwrap(), &ReportOptions::default());
    assert_eq!(report.g.len(), 3);
    for e in report.g.iter().chain(&report.np).chain(&report.theta) {
        assert_eq!(e.verdict, Verdict::Inconclusive);
    }
}

#[test]
fn bootstrap_report_names_its_method() {
    let acc = simulate(&cluster(5.0, DetectionChain::quarters(0.7, 0.2, 0.0).unwrap(), 500_000, 8)).unwrap();
    let opts = ReportOptions { method: ErrorMethod::BlockBootstrap, resamples: 200, ..Default::default() };
    let boot = full_report(&acc, &opts);
    let prop = full_report(&acc, &ReportOptions::default());
    assert_eq!(boot.error_method, "block-bootstrap");
    let (b, p) = (boot.g(2).unwrap(), prop.g(2).unwrap());
    assert_eq!(b.value, p.value);
    let ratio = b.std_error.unwrap() / p.std_error.unwrap();
    assert!((1.0 / 1.5..=1.5).contains(&ratio), "{ratio}");
}

#[test]
fn paired_emitters_give_fractional_size() {
    let cfg = RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/pair_unequal.toml")).unwrap();
    let acc = simulate(&cfg.simulation().unwrap()).unwrap();
    let g = g_symmetrized(&acc, 2).unwrap();
    let m = estimate_m_from_g2(g.value, 0.01).unwrap();
    let m_err = m * g.std_error / (1.0 - g.value);
    assert!(within(m, 1.7, m_err.hypot(0.2), 3.0), "m = {m} +/- {m_err}");
}
