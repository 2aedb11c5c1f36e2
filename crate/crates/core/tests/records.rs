use std::fs;

use multiphoton::cluster::{g2_cluster, ClusterSpec, EmitterSpec};
use multiphoton::detection::DetectionChain;
use multiphoton::estimators::{bootstrap_blocks, g_symmetrized};
use multiphoton::records::{read_record_blocks, read_records, write_simulated_records, RecordHeader};
use multiphoton::simulator::{simulate, simulate_with_workers, synthesize_records, ClusterSource, SimulationConfig};
use multiphoton::Error;

fn config(m: f64, n_pulses: u64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        cluster: ClusterSource::Homogeneous(ClusterSpec::new(m, EmitterSpec::new(0.1, 0.01, 0.0, 1.0).unwrap()).unwrap()),
        chain: DetectionChain::quarters(0.7, 0.2, 0.0).unwrap(),
        n_pulses,
        seed,
        block_size: 100_000,
    }
}

#[test]
fn plain_and_gzip_files_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(3.0, 250_000, 4);
    let direct = simulate(&cfg).unwrap();
    for (name, gzip) in [("r.txt", false), ("r.txt.gz", true)] {
        let path = tmp.path().join(name);
        write_simulated_records(&path, &cfg, gzip).unwrap();
        let (header, acc) = read_records(&path).unwrap();
        assert_eq!(header, RecordHeader { pulses: 250_000, bins: 4, seed: 4 });
        assert_eq!(acc, direct);
    }
    let plain = fs::metadata(tmp.path().join("r.txt")).unwrap().len();
    assert_eq!(plain, "pulses=250000 bins=4 seed=4\n".len() as u64 + 250_000 * 5);
    assert!(fs::metadata(tmp.path().join("r.txt.gz")).unwrap().len() < plain / 4);
}

#[test]
fn stream_matches_accumulator_pulse_by_pulse() {
    let cfg = config(5.0, 123_457, 9);
    let patterns: Vec<_> = synthesize_records(&cfg).unwrap().collect();
    assert_eq!(patterns.len(), 123_457);
    let mut acc = multiphoton::simulator::CountsAccumulator::new(4).unwrap();
    patterns.iter().for_each(|p| acc.record(*p));
    assert_eq!(acc, simulate(&cfg).unwrap());
}

#[test]
fn worker_count_does_not_change_counts() {
    let cfg = config(8.0, 1_000_003, 77);
    let one = simulate_with_workers(&cfg, 1, None).unwrap();
    for workers in [2, 3, 8] {
        assert_eq!(simulate_with_workers(&cfg, workers, None).unwrap(), one, "{workers} workers");
    }
}

#[test]
fn synthesized_cluster_file_follows_cluster_law() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m12.txt.gz");
    let cfg = config(12.0, 10_000_000, 120);
    write_simulated_records(&path, &cfg, true).unwrap();
    let (_, acc) = read_records(&path).unwrap();
    let g = g_symmetrized(&acc, 2).unwrap();
    let model = g2_cluster(12.0, 0.01).unwrap();
    assert!((g.value - model).abs() <= 3.0 * g.std_error, "g2 = {} +/- {}, model {model}", g.value, g.std_error);
}

#[test]
fn record_blocks_feed_block_bootstrap() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("r.txt");
    let cfg = config(5.0, 1_000_000, 6);
    write_simulated_records(&path, &cfg, false).unwrap();
    let (_, blocks) = read_record_blocks(&path, 30_000).unwrap();
    assert_eq!(blocks.len(), 34);
    assert_eq!(blocks.iter().map(|b| b.pulses()).sum::<u64>(), 1_000_000);
    let (_, whole) = read_records(&path).unwrap();
    let prop = g_symmetrized(&whole, 2).unwrap();
    let boot = bootstrap_blocks(&blocks, |a| g_symmetrized(a, 2).map(|e| e.value), 400, 2).unwrap();
    assert!((boot.value - prop.value).abs() < 1e-12);
    let ratio = boot.std_error / prop.std_error;
    assert!((1.0 / 1.5..=1.5).contains(&ratio), "{ratio}");
    assert!(matches!(read_record_blocks(&path, 0), Err(Error::Config(_))));
}

#[test]
fn malformed_records_report_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("pulses=3 bins=4 seed=0\n0000\n01x0\n0000\n", 3),
        ("pulses=2 bins=4 seed=0\n0000\n000\n", 3),
        ("pulses=1 bins=4 seed=0\n0000\n1111\n", 3),
        ("pulses=1 bins=4\n0000\n", 1),
        ("", 1),
    ];
    for (i, (text, line)) in cases.iter().enumerate() {
        let path = tmp.path().join(format!("bad{i}.txt"));
        fs::write(&path, text).unwrap();
        match read_records(&path) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, *line, "case {i}"),
            other => panic!("case {i}: {other:?}"),
        }
    }
}
