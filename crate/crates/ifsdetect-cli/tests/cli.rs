//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifsdetect"))
}

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ifsdetect-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn manifest_value(dir: &Path, key: &str) -> String {
    read(&dir.join("manifest.txt"))
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("manifest lacks {key}"))
}

fn kv(path: &Path, key: &str) -> String {
    read(path)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("{} lacks {key}", path.display()))
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let a = fresh_dir("sim-a");
    let b = fresh_dir("sim-b");
    for dir in [&a, &b] {
        let out = run(&[
            "simulate",
            "--T",
            "4000",
            "--seed",
            "1",
            "--output-dir",
            dir.to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    for name in ["trajectory.csv", "truth.csv", "manifest.txt"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs between reruns");
    }
    assert_eq!(manifest_value(&a, "T"), "4000");
    assert_eq!(manifest_value(&a, "command"), "simulate");
}

#[test]
fn detect_flags_single_map_data_as_structureless() {
    let dir = fresh_dir("single");
    assert_success(&run(&[
        "simulate",
        "--T",
        "8000",
        "--regimes",
        "1",
        "--seed",
        "3",
        "--output-dir",
        dir.to_str().unwrap(),
    ]));
    let out = run(&[
        "detect",
        "--input",
        dir.join("trajectory.csv").to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "no-structure exit code");
    // The artifacts are still written for inspection.
    assert_eq!(kv(&dir.join("gap.txt"), "bimodal"), "false");
    assert_eq!(kv(&dir.join("gap.txt"), "regime_count"), "1");
}

#[test]
fn full_chain_reaches_perfect_purity() {
    let dir = fresh_dir("chain");
    let d = dir.to_str().unwrap();
    assert_success(&run(&["simulate", "--T", "30000", "--seed", "1", "--output-dir", d]));
    let trajectory = dir.join("trajectory.csv");
    assert_success(&run(&[
        "detect",
        "--input",
        trajectory.to_str().unwrap(),
        "--output-dir",
        d,
    ]));
    assert_eq!(kv(&dir.join("gap.txt"), "regime_count"), "2");

    // epsilon and regime count resolved automatically from the data.
    assert_success(&run(&[
        "separate",
        "--input",
        trajectory.to_str().unwrap(),
        "--epsilon",
        "auto",
        "--regimes",
        "auto",
        "--output-dir",
        d,
    ]));
    assert_eq!(manifest_value(&dir, "regimes"), "2");

    assert_success(&run(&[
        "evaluate",
        "--input",
        dir.join("labels.csv").to_str().unwrap(),
        "--truth",
        dir.join("truth.csv").to_str().unwrap(),
        "--output-dir",
        d,
    ]));
    let purity: f64 = kv(&dir.join("evaluation.txt"), "purity").parse().unwrap();
    assert_eq!(purity, 1.0);
    let coverage: f64 = kv(&dir.join("evaluation.txt"), "coverage").parse().unwrap();
    assert!(coverage > 0.9, "coverage {coverage}");
}

#[test]
fn malformed_input_exits_one_with_line_number() {
    let dir = fresh_dir("malformed");
    let series = dir.join("series.csv");
    fs::write(&series, "1\nabc\n").unwrap();
    let out = run(&[
        "embed",
        "--input",
        series.to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    assert!(stderr.starts_with("embed:"), "stage name missing: {stderr}");
}

#[test]
fn missing_required_input_exits_one() {
    let out = run(&["detect"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = fresh_dir("config");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "T=500\nseed=9\nregimes=2\n").unwrap();
    assert_success(&run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4", // overrides the config value
        "--output-dir",
        dir.to_str().unwrap(),
    ]));
    assert_eq!(manifest_value(&dir, "T"), "500");
    assert_eq!(manifest_value(&dir, "seed"), "4");

    // The manifest itself is valid config input for a re-run.
    let rerun = fresh_dir("config-rerun");
    assert_success(&run(&[
        "simulate",
        "--config",
        dir.join("manifest.txt").to_str().unwrap(),
        "--output-dir",
        rerun.to_str().unwrap(),
    ]));
    assert_eq!(read(&dir.join("trajectory.csv")), read(&rerun.join("trajectory.csv")));
}

#[test]
fn worker_cap_does_not_change_results() {
    let a = fresh_dir("workers-a");
    let b = fresh_dir("workers-b");
    assert_success(&run(&["simulate", "--T", "6000", "--seed", "2", "--output-dir", a.to_str().unwrap()]));
    assert_success(&run(&["simulate", "--T", "6000", "--seed", "2", "--output-dir", b.to_str().unwrap()]));
    let sep = |dir: &Path, workers: &str| {
        assert_success(&run(&[
            "separate",
            "--input",
            dir.join("trajectory.csv").to_str().unwrap(),
            "--epsilon",
            "0.03",
            "--regimes",
            "2",
            "--J",
            "1500",
            "--workers",
            workers,
            "--output-dir",
            dir.to_str().unwrap(),
        ]));
    };
    sep(&a, "1");
    sep(&b, "7");
    assert_eq!(read(&a.join("labels.csv")), read(&b.join("labels.csv")));
    assert_eq!(read(&a.join("census.csv")), read(&b.join("census.csv")));
}

#[test]
fn ghost_repairs_a_periodic_artifact() {
    use ifsdetect::ghost::synth_surrogate;

    let dir = fresh_dir("ghost");
    let (series, _) = synth_surrogate(6000, 100, 200.0, 1).unwrap();
    let csv: String = series.values().iter().map(|v| format!("{v:.16e}\n")).collect();
    let input = dir.join("misses.csv");
    fs::write(&input, csv).unwrap();

    let out = run(&[
        "ghost",
        "--input",
        input.to_str().unwrap(),
        "--epsilon",
        "75",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let ghost_txt = dir.join("ghost.txt");
    assert_eq!(kv(&ghost_txt, "period"), "100");
    let shift: f64 = kv(&ghost_txt, "shift").parse().unwrap();
    assert!((180.0..=220.0).contains(&shift), "shift {shift}");
    let checked: usize = kv(&ghost_txt, "determinism_checked").parse().unwrap();
    let failures: usize = kv(&ghost_txt, "determinism_failures").parse().unwrap();
    assert!(checked > 30);
    assert!((failures as f64) <= 0.05 * checked as f64, "{failures}/{checked}");

    // The adjusted series parses and differs from the input only at ghosts.
    let adjusted: Vec<f64> = read(&dir.join("adjusted.csv"))
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(adjusted.len(), series.len());
    let moved = adjusted
        .iter()
        .zip(series.values())
        .filter(|(a, b)| a != b)
        .count();
    let ghost_count: usize = kv(&ghost_txt, "ghost_count").parse().unwrap();
    let spurious: usize = kv(&ghost_txt, "spurious_count").parse().unwrap();
    assert_eq!(moved, ghost_count - spurious);
}

#[test]
fn evaluate_rejects_mismatched_lengths() {
    let dir = fresh_dir("eval-mismatch");
    fs::write(dir.join("labels.csv"), "0,0\n1,1\n").unwrap();
    fs::write(dir.join("truth.csv"), "0,0\n").unwrap();
    let out = run(&[
        "evaluate",
        "--input",
        dir.join("labels.csv").to_str().unwrap(),
        "--truth",
        dir.join("truth.csv").to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
