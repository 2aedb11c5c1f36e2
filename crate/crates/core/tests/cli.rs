use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use multiphoton::cli::{execute, Cli};
use multiphoton::config::RunConfig;

const SHIPPED: &[&str] = &[
    "small.toml",
    "cluster_m12.toml",
    "pair_unequal.toml",
    "sweep_cluster_size.toml",
    "sweep_theta_low_efficiency.toml",
];

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiphoton")).args(args).output().unwrap()
}

fn capped(name: &str, dir: &Path, pulses: u64) -> PathBuf {
    let mut cfg = RunConfig::load(&shipped(name)).unwrap();
    cfg.n_pulses = cfg.n_pulses.min(pulses);
    cfg.block_size = cfg.block_size.min(50_000);
    let path = dir.join(name);
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path
}

const MINIMAL: &str = r#"
seed = 5
n_pulses = 20000
[cluster]
m = 3
emitter = { mean = 0.2, g2 = 0.05, g3 = 0.0 }
[chain]
route = [0.25, 0.25, 0.25, 0.25]
eta = [0.5, 0.5, 0.5, 0.5]
"#;

#[test]
fn run_writes_report_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = capped("small.toml", tmp.path(), 200_000);
    let out = tmp.path().join("out");
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), report);
    for needle in ["[antibunching]", "[klyshko]", "[click statistics]", "[cluster size]", "[model]", "k=4:"] {
        assert!(report.contains(needle), "missing {needle} in\n{report}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(json["counts"]["pulses"], 200_000);
    assert!(json["report"]["g"].as_array().unwrap().len() >= 3);
    assert!(json["subsets"].as_array().unwrap().len() >= 11);
}

#[test]
fn result_json_reloads_as_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = capped("pair_unequal.toml", tmp.path(), 50_000);
    let out = tmp.path().join("a");
    assert!(bin(&["run", "--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let again = tmp.path().join("b");
    let json = out.join("result.json");
    assert!(bin(&["run", "--quiet", "--config", json.to_str().unwrap(), "--out", again.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(out.join("report.txt")).unwrap(), fs::read(again.join("report.txt")).unwrap());
}

#[test]
fn analyze_of_records_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, name) in SHIPPED.iter().enumerate() {
        let cfg = capped(name, tmp.path(), 200_000);
        let out = tmp.path().join("out");
        let ext = if i % 2 == 0 { "txt.gz" } else { "txt" };
        let records = tmp.path().join(format!("records-{i}.{ext}"));
        let args = |cmd: &[&str]| {
            let mut v = vec!["multiphoton", "--quiet", "--out", out.to_str().unwrap()];
            v.extend_from_slice(cmd);
            Cli::parse_from(v)
        };
        let run = args(&["run", "--config", cfg.to_str().unwrap(), "--records", records.to_str().unwrap()]);
        assert_eq!(execute(&run).unwrap(), 0);
        let files = ["report.txt", "result.json"].map(|f| fs::read(out.join(f)).unwrap());
        let analyze = args(&["analyze", records.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
        assert_eq!(execute(&analyze).unwrap(), 0);
        let again = ["report.txt", "result.json"].map(|f| fs::read(out.join(f)).unwrap());
        assert_eq!(files, again, "{name}");
    }
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{MINIMAL}\n[sweep]\nm = [1, 4]\neta_scale = [1.0, 0.5]\npulses = [5000, 10000]\n"),
    );
    let out = tmp.path().join("out");
    let o = bin(&["sweep", "--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = fs::read_to_string(out.join("sweep.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("m\teta_scale\tpulses"));
    let width = rows[0].split('\t').count();
    assert!(rows.iter().all(|r| r.split('\t').count() == width));
    assert!(rows[1].starts_with("1\t1\t5000\t"));
    assert!(rows[8].starts_with("4\t0.5\t10000\t"));
}

#[test]
fn oracle_check_passes_on_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = capped("small.toml", tmp.path(), 300_000);
    let out = tmp.path().join("out");
    let o = bin(&["oracle-check", "--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("oracle.txt")).unwrap();
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{MINIMAL}\n[analysis]\nsigmaa = 2.0\n"));
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmaa"));
}

#[test]
fn infeasible_emitter_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("mean = 0.2, g2 = 0.05", "mean = 1.5, g2 = 0.05"));
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bins_mismatch_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("r.txt");
    fs::write(&records, "pulses=2 bins=3 seed=1\n000\n101\n").unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let o = bin(&["analyze", records.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bins"));
}

#[test]
fn truncated_records_name_last_good_line() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("r.txt");
    fs::write(&records, "pulses=5 bins=4 seed=1\n0000\n1001\n0100\n").unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let o = bin(&["analyze", records.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("3 of 5") && err.contains("last good line is 4"), "{err}");
}

#[test]
fn oversized_oracle_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("m = 3", "m = 13"));
    let o = bin(&["oracle-check", "--quiet", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("26"));
}

#[test]
fn missing_config_exits_1() {
    let o = bin(&["run", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_override_changes_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let read = |seed: &str| {
        let out = tmp.path().join(seed);
        let o = bin(&["run", "--quiet", "--seed", seed, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
        json["counts"].clone()
    };
    assert_ne!(read("1"), read("2"));
}
