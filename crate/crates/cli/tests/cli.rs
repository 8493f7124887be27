use std::path::Path;
use std::process::{Command, Output};

fn cevsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cevsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Rows of a CSV as field vectors, header first.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column<'a>(table: &'a [Vec<String>], row: usize, name: &str) -> &'a str {
    let i = table[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    &table[row][i]
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

#[test]
fn estimate_reproduces_reference_probability() {
    let o = cevsim(&[
        "estimate", "--mu", "0", "--sigma", "1", "--p", "0.5", "--x0", "1", "--t", "5", "--delta", "1e-3", "--beta",
        "0.9", "--m", "100000", "--seed", "42",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = rows(&stdout(&o));
    assert_eq!(t.len(), 2);
    let p_hat = num(column(&t, 1, "p_hat"));
    let se = num(column(&t, 1, "stderr"));
    assert!((p_hat - 0.6703).abs() <= 4.0 * se + 0.02, "p_hat = {p_hat}");
    assert_eq!(column(&t, 1, "p_exact"), "0.670320046036");
    assert!(stderr(&o).contains("Err ="));
}

#[test]
fn endpoint_beta_is_a_usage_error_naming_the_interval() {
    let o = cevsim(&["estimate", "--beta", "1", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));
}

#[test]
fn domain_violations_exit_2() {
    for args in [
        &["estimate", "--sigma", "0"][..],
        &["estimate", "--p", "1"],
        &["estimate", "--m", "0"],
        &["estimate", "--x0", "0.001", "--delta", "0.1"],
        &["estimate", "--no-such-flag"],
        &["fig1", "--p", "0.75"],
        &["exit-time", "--threshold-zero"],
        &["analytic", "--x", "2", "--psi"],
    ] {
        let o = cevsim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn analytic_examples() {
    let o = cevsim(&["analytic", "--mu", "0", "--sigma", "1", "--x", "1", "--t", "5"]);
    assert!(stdout(&o).contains("cdf = 0.670320046036"), "{}", stdout(&o));
    let o = cevsim(&[
        "analytic", "--mu", "0", "--sigma", "1", "--p", "0.5", "--x", "0.5", "--psi",
    ]);
    assert_eq!(stdout(&o), "psi = 0.69314718056\n");
    let o = cevsim(&["analytic", "--x", "0", "--phi"]);
    assert_eq!(stdout(&o), "phi = 0\n");
    let o = cevsim(&["analytic", "--mu", "0.5", "--p", "0.75", "--x", "0.3"]);
    let out = stdout(&o);
    for key in ["phi", "psi", "residual_phi", "residual_psi"] {
        assert!(out.contains(&format!("{key} = ")), "{out}");
    }
    assert!(!out.contains("cdf"));
}

#[test]
fn fig1_single_step_gives_one_row_and_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let svg = dir.path().join("f.svg");
    let o = cevsim(&[
        "fig1",
        "--deltas",
        "1e-2",
        "--m",
        "2000",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(t.len(), 2);
    let err = num(column(&t, 1, "err_pct"));
    assert!(num(column(&t, 1, "ci_err_lo_pct")) <= err && err <= num(column(&t, 1, "ci_err_hi_pct")));
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg.matches("class=\"point\"").count(), 1);
    assert!(svg.contains("id=\"zero\""));
    assert!(svg.contains("<metadata>") && svg.contains("\"command\": \"fig1\""));
    assert!(!svg.contains("NaN"));
}

#[test]
fn fig1_default_grid_has_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let svg = dir.path().join("f.svg");
    let o = cevsim(&[
        "fig1",
        "--m",
        "3000",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(t.len(), 6);
    assert_eq!(column(&t, 1, "delta"), "0.1");
    assert_eq!(column(&t, 5, "delta"), "0.001");
    assert!(sidecar(&csv).exists());
}

fn sidecar(csv: &Path) -> std::path::PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

#[test]
fn csv_is_byte_identical_across_worker_counts() {
    let run = |w: &str| stdout(&cevsim(&["estimate", "--delta", "1e-2", "--m", "9000", "--workers", w]));
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one, run("16"));
}

#[test]
fn manifest_records_resolved_inputs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"mu": 0.5, "m": 1000, "delta": 0.01}"#).unwrap();
    let csv = dir.path().join("e.csv");
    let o = cevsim(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "700",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(column(&t, 1, "mu"), "0.5");
    assert_eq!(column(&t, 1, "m"), "700");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar(&csv)).unwrap()).unwrap();
    assert_eq!(m["settings"]["m"], 700);
    assert_eq!(m["config"]["m"], 1000);
    assert_eq!(m["thresholds"].as_array().unwrap().len(), 1);
    assert!(m["seed_derivation"].as_str().unwrap().contains("splitmix64"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"mu": 0.5, "gamma": 1}"#).unwrap();
    let o = cevsim(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn failed_sweep_rows_are_blank_and_exit_1() {
    let o = cevsim(&["sweep", "--p", "0.75", "--deltas", "0.1,20", "--m", "500"]);
    assert_eq!(o.status.code(), Some(1));
    let t = rows(&stdout(&o));
    assert_eq!(t.len(), 3);
    assert_eq!(column(&t, 1, "delta"), "20");
    assert_eq!(column(&t, 1, "p_hat"), "");
    assert!(!column(&t, 1, "error").is_empty());
    assert!(!column(&t, 2, "p_hat").is_empty());
    assert_eq!(column(&t, 2, "p_exact"), "");
}

#[test]
fn exit_time_reports_closed_form() {
    let o = cevsim(&["exit-time", "--delta", "1e-3", "--m", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = rows(&stdout(&o));
    assert_eq!(column(&t, 1, "psi_exact"), "0.69314718056");
    let fractions: f64 = ["lower_fraction", "upper_fraction", "censored_fraction"]
        .iter()
        .map(|c| num(column(&t, 1, c)))
        .sum();
    assert!((fractions - 1.0).abs() < 1e-12);
}

#[test]
fn selftest_passes() {
    let o = cevsim(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("[PASS]").count(), 7);
}
