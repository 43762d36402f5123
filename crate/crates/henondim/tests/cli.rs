//! End-to-end checks of the command line binary: exit codes, output files,
//! headers, and the determinism contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_henondim"));
    cmd.env_remove("HENONDIM_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).expect("valid json")
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .collect()
}

#[test]
fn selftest_passes_and_writes_a_stamped_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let line = stdout(&out);
    assert!(line.starts_with("selftest:"), "summary line: {line}");
    assert_eq!(line.trim_end().lines().count(), 1);

    let doc = json(dir.path(), "selftest.json");
    assert_eq!(doc["header"]["tool"], "henondim");
    assert_eq!(doc["header"]["command"], "selftest");
    assert_eq!(doc["report"]["failed"], 0);
    assert_eq!(doc["report"]["fixtures"].as_array().unwrap().len(), 3);
    for fixture in doc["report"]["fixtures"].as_array().unwrap() {
        assert_eq!(fixture["pass"], true, "fixture: {fixture}");
    }
}

#[test]
fn usage_errors_exit_with_code_two() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["classify", "--map", "builtin:horseshoe", "--bogus"],
        vec!["classify"],
        vec!["periodic-orbits", "--map", "builtin:horseshoe", "--periods", "3..9"],
        vec!["periodic-orbits", "--map", "builtin:horseshoe", "--periods", "1..99"],
        vec!["pressure-curve", "--map", "builtin:horseshoe", "--tgrid", "2:0:0.1"],
        vec!["sweep", "--map", "builtin:horseshoe", "--moduli", "0.5,1.7"],
        vec!["classify", "--map", "builtin:unknown"],
        vec!["sample", "--map", "builtin:horseshoe", "--target", "q"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "args {args:?}: stderr {}",
            stderr(&out)
        );
    }
}

#[test]
fn help_and_version_exit_cleanly() {
    for flag in ["--help", "--version"] {
        let out = run(&[flag]);
        assert_eq!(out.status.code(), Some(0), "{flag}");
    }
}

#[test]
fn map_load_failures_exit_one_with_the_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = run(&["classify", "--map", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("[stage: load-map]"), "{}", stderr(&out));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    let out = run(&["classify", "--map", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("[stage: load-map]"), "{}", stderr(&out));
}

#[test]
fn classify_reads_a_map_file_and_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = dir.path().join("horseshoe.json");
    std::fs::write(
        &map_path,
        r#"{"factors":[{"coeffs":[[-6.0,0.0],[0.0,0.0],[1.0,0.0]],"a":[0.3,0.0]}]}"#,
    )
    .unwrap();
    let map = map_path.to_str().unwrap();

    let mut outputs = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "classify",
            "--map",
            map,
            "--out",
            out_dir.to_str().unwrap(),
            "--count",
            "200",
            "--nmax",
            "32",
            "--threads",
            threads,
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        outputs.push(read(&out_dir, "classify.csv"));
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the bytes");
    assert_eq!(outputs[1], outputs[2], "rerun changed the bytes");
    assert_eq!(data_lines(&outputs[0]).len(), 200);

    let reseeded = dir.path().join("d");
    let out = run(&[
        "classify",
        "--map",
        map,
        "--out",
        reseeded.to_str().unwrap(),
        "--count",
        "200",
        "--nmax",
        "32",
        "--seed",
        "8",
    ]);
    assert!(out.status.success());
    let other = read(&reseeded, "classify.csv");
    assert_ne!(
        data_lines(&outputs[0]),
        data_lines(&other),
        "seed is not feeding the probes"
    );
}

#[test]
fn green_table_carries_header_hashes_and_converged_probes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "green",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--count",
        "40",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = read(dir.path(), "green.csv");
    assert!(csv.contains("# map_hash: "));
    assert!(csv.contains("# config_hash: "));
    assert!(csv.contains("# seed: 7"));
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.split(',').count() == 10));
    assert!(rows.iter().any(|r| r.contains("true")));
}

#[test]
fn box_dim_fits_a_positive_slope_on_the_backward_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "box-dim",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--target",
        "k-",
        "--depth",
        "5",
        "--nmax",
        "5",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = json(dir.path(), "box_dim.json");
    let slope = doc["report"]["slope"].as_f64().unwrap();
    assert!(slope > 0.0 && slope < 4.0, "slope {slope}");
    assert_eq!(
        doc["report"]["per_depth_counts"].as_array().unwrap().len(),
        5
    );
    let csv = read(dir.path(), "box_counts.csv");
    assert_eq!(data_lines(&csv).len(), 5);
}

#[test]
fn periodic_orbit_counts_are_exhaustive_at_low_periods() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "periodic-orbits",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--periods",
        "1..3",
        "--depth",
        "5",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = json(dir.path(), "periodic_orbits.json");
    let counts = doc["report"]["counts"].as_array().unwrap();
    let found: Vec<u64> = counts
        .iter()
        .map(|row| row["fix_count"].as_u64().unwrap())
        .collect();
    assert_eq!(found, vec![2, 4, 8]);
    assert_eq!(doc["report"]["hyperbolicity_doubtful"], false);

    let orbits: u64 = counts.iter().map(|row| row["orbits"].as_u64().unwrap()).sum();
    let csv = read(dir.path(), "periodic_orbits.csv");
    assert_eq!(data_lines(&csv).len() as u64, orbits);
}

#[test]
fn pressure_curve_recovers_the_entropy_at_t_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "pressure-curve",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--periods",
        "1..2",
        "--depth",
        "4",
        "--tgrid",
        "0:1:1",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = read(dir.path(), "pressure_curve.csv");
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 4, "two periods, two grid points");
    for row in rows.iter().filter(|r| r.split(',').nth(1) == Some("0")) {
        let unstable: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((unstable - std::f64::consts::LN_2).abs() < 1e-12, "{row}");
    }
}

#[test]
fn dimension_report_writes_the_document_and_side_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "dimension-report",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--periods",
        "1..4",
        "--depth",
        "4",
        "--nmax",
        "4",
        "--tgrid",
        "0:1:0.5",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.starts_with("dimension-report:"), "{summary}");
    assert!(summary.contains("cantor = true"), "{summary}");

    let doc = json(dir.path(), "dimension_report.json");
    assert_eq!(doc["report"]["cantor_small_twist"], true);
    assert_eq!(doc["report"]["inverted"], false);
    assert!(doc["report"]["dim_j"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["header"]["command"], "dimension-report");

    for name in ["pressure_curves.csv", "box_counts.csv", "rate_tables.csv"] {
        let csv = read(dir.path(), name);
        assert!(!data_lines(&csv).is_empty(), "{name} has no rows");
    }
}

#[test]
fn sweep_reports_a_strictly_decreasing_box_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--map",
        "builtin:horseshoe",
        "--out",
        dir.path().to_str().unwrap(),
        "--moduli",
        "0.5,0.2",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("strictly decreasing: true"), "{}", stdout(&out));
    let csv = read(dir.path(), "sweep.csv");
    let bounds: Vec<f64> = data_lines(&csv)
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(bounds.len(), 2);
    assert!(bounds[1] < bounds[0], "{bounds:?}");
}

#[test]
fn environment_variable_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let out = bin()
        .args(["selftest", "--out", flag_dir.to_str().unwrap()])
        .env("HENONDIM_OUT", &env_dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(env_dir.join("selftest.json").is_file());
    assert!(!flag_dir.exists());
}
