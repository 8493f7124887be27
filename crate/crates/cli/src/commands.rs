//! Subcommand implementations. Each returns `Ok(())` on exit code 0.

use std::io::Write;
use std::path::Path;

use cev_core::analytic::{Coefficients, DiffusionFunctions};
use cev_core::boundary::validate_beta;
use cev_core::selftest::run_selftest;
use cev_core::{
    absorption_atom, absorption_cdf_half, estimate_absorption, estimate_exit_time, sweep_delta, CevParams, McConfig,
    SchemeConfig, SweepRow,
};

use crate::args::{AnalyticArgs, Cli, Command, Defaults, RunArgs, Settings};
use crate::error::CliError;
use crate::format::{csv_line, opt12, sig12};
use crate::manifest::{sidecar_path, RunManifest};
use crate::svg::{self, ErrorPoint};

pub const ESTIMATE_HEADER: [&str; 17] = [
    "command",
    "mu",
    "sigma",
    "p",
    "x0",
    "t",
    "delta",
    "beta",
    "threshold",
    "m",
    "seed",
    "p_hat",
    "stderr",
    "ci_lo",
    "ci_hi",
    "p_exact",
    "err_pct",
];

pub const EXIT_TIME_HEADER: [&str; 20] = [
    "command",
    "mu",
    "sigma",
    "p",
    "x0",
    "t_max",
    "delta",
    "beta",
    "lower_level",
    "upper_level",
    "m",
    "seed",
    "mean",
    "stderr",
    "ci_lo",
    "ci_hi",
    "psi_exact",
    "lower_fraction",
    "upper_fraction",
    "censored_fraction",
];

pub const FIG1_HEADER: [&str; 9] = [
    "delta",
    "threshold",
    "p_hat",
    "stderr",
    "ci_lo",
    "ci_hi",
    "err_pct",
    "ci_err_lo_pct",
    "ci_err_hi_pct",
];

pub const SWEEP_HEADER: [&str; 11] = [
    "delta",
    "threshold",
    "seed",
    "m",
    "p_hat",
    "stderr",
    "ci_lo",
    "ci_hi",
    "p_exact",
    "err_pct",
    "error",
];

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => estimate(&a),
        Command::ExitTime(a) => exit_time(&a),
        Command::Fig1(a) => fig1(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Analytic(a) => analytic(&a),
        Command::Selftest => selftest(),
    }
}

fn params_of(s: &Settings) -> Result<CevParams, CliError> {
    Ok(CevParams::new(s.mu, s.sigma, s.p, s.x0)?)
}

fn mc_of(s: &Settings) -> McConfig {
    McConfig::new(s.m, s.seed).with_workers(s.workers)
}

/// `None` when stopping at 0.
fn beta_of(s: &Settings) -> Option<f64> {
    (!s.threshold_zero).then_some(s.beta)
}

/// Writes the CSV to `out` with its manifest sidecar, or to stdout.
fn emit(out: Option<&Path>, csv: &str, manifest: &RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, csv)?;
            std::fs::write(sidecar_path(path), manifest.to_json()?)?;
        }
        None => std::io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}

/// Quotes a free-text CSV field when needed.
fn text_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

fn estimate(a: &RunArgs) -> Result<(), CliError> {
    let (s, cfg) = a.resolve(Defaults::ABSORPTION)?;
    let params = params_of(&s)?;
    let scheme = match beta_of(&s) {
        Some(b) => SchemeConfig::new(s.delta, b, s.t)?,
        None => SchemeConfig::threshold_zero(s.delta, s.t)?,
    };
    let est = estimate_absorption(&params, &scheme, s.t, &mc_of(&s))?;
    let mut csv = csv_line(&ESTIMATE_HEADER);
    csv += &csv_line(&[
        "estimate".to_string(),
        sig12(s.mu),
        sig12(s.sigma),
        sig12(s.p),
        sig12(s.x0),
        sig12(s.t),
        sig12(s.delta),
        opt12(scheme.beta),
        sig12(scheme.threshold),
        s.m.to_string(),
        s.seed.to_string(),
        sig12(est.p_hat),
        sig12(est.stderr),
        sig12(est.ci99.0),
        sig12(est.ci99.1),
        opt12(est.p_exact),
        opt12(est.err_rel_pct),
    ]);
    let manifest = RunManifest::new("estimate", &s, vec![scheme.threshold], cfg)?;
    emit(a.out.as_deref(), &csv, &manifest)?;
    let mut summary = format!(
        "p_hat = {} +/- {} (99% CI [{}, {}], M = {})",
        sig12(est.p_hat),
        sig12(est.stderr),
        sig12(est.ci99.0),
        sig12(est.ci99.1),
        est.m
    );
    if let (Some(exact), Some(err)) = (est.p_exact, est.err_rel_pct) {
        summary += &format!("; exact = {}, Err = {}%", sig12(exact), sig12(err));
    }
    eprintln!("{summary}");
    Ok(())
}

fn exit_time(a: &RunArgs) -> Result<(), CliError> {
    let (s, cfg) = a.resolve(Defaults::EXIT_TIME)?;
    if s.threshold_zero {
        return Err(CliError::Usage(
            "--threshold-zero is not available for exit-time; the lower level must be delta^beta".into(),
        ));
    }
    let params = params_of(&s)?;
    let est = estimate_exit_time(&params, s.delta, s.beta, s.t, &mc_of(&s))?;
    let psi = Coefficients::new(s.mu, s.sigma, s.p)
        .and_then(DiffusionFunctions::with_defaults)
        .and_then(|f| f.psi(s.x0))
        .ok();
    let mut csv = csv_line(&EXIT_TIME_HEADER);
    csv += &csv_line(&[
        "exit-time".to_string(),
        sig12(s.mu),
        sig12(s.sigma),
        sig12(s.p),
        sig12(s.x0),
        sig12(s.t),
        sig12(s.delta),
        sig12(s.beta),
        sig12(est.lower_level),
        sig12(est.upper_level),
        s.m.to_string(),
        s.seed.to_string(),
        sig12(est.mean),
        sig12(est.stderr),
        sig12(est.ci99.0),
        sig12(est.ci99.1),
        opt12(psi),
        sig12(est.lower_fraction),
        sig12(est.upper_fraction),
        sig12(est.censored_fraction),
    ]);
    let manifest = RunManifest::new("exit-time", &s, vec![est.lower_level], cfg)?;
    emit(a.out.as_deref(), &csv, &manifest)?;
    let mut summary = format!(
        "mean exit time = {} +/- {} (99% CI [{}, {}], M = {}, censored {})",
        sig12(est.mean),
        sig12(est.stderr),
        sig12(est.ci99.0),
        sig12(est.ci99.1),
        est.m,
        sig12(est.censored_fraction)
    );
    if let Some(psi) = psi {
        summary += &format!("; psi(x0) = {}", sig12(psi));
    }
    eprintln!("{summary}");
    Ok(())
}

/// Shared front half of fig1 and sweep: validation before any simulation,
/// so a bad parameter is a usage error rather than a column of failed rows.
fn run_sweep(s: &Settings) -> Result<Vec<SweepRow>, CliError> {
    let params = params_of(s)?;
    if let Some(b) = beta_of(s) {
        validate_beta(s.p, b)?;
    }
    if s.deltas.is_empty() {
        return Err(CliError::Usage("--deltas must name at least one step size".into()));
    }
    if s.m == 0 {
        return Err(CliError::Usage(
            "m = 0 is outside the admissible range [1, 2^64)".into(),
        ));
    }
    Ok(sweep_delta(&params, beta_of(s), s.t, &s.deltas, &mc_of(s)))
}

fn row_failures(rows: &[SweepRow]) -> Result<(), CliError> {
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.result
                .as_ref()
                .err()
                .map(|e| format!("delta = {}: {e}", sig12(r.delta)))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} row(s) failed: {}",
            failed.len(),
            failed.join("; ")
        )))
    }
}

fn fig1(a: &RunArgs) -> Result<(), CliError> {
    let (s, cfg) = a.resolve(Defaults::ABSORPTION)?;
    if s.p != 0.5 {
        return Err(CliError::Usage(format!(
            "fig1 needs p = 0.5, where the exact absorption probability is known (got p = {})",
            s.p
        )));
    }
    let rows = run_sweep(&s)?;
    let mut csv = csv_line(&FIG1_HEADER);
    let mut points = Vec::new();
    for r in &rows {
        let fields = match &r.result {
            Ok(est) => {
                let exact = est.p_exact.unwrap_or(f64::NAN);
                let pct = |v: f64| (v - exact) / exact * 100.0;
                let (lo, hi) = (pct(est.ci99.0), pct(est.ci99.1));
                let err = est.err_rel_pct.unwrap_or(f64::NAN);
                points.push(ErrorPoint {
                    log10_delta: r.delta.log10(),
                    err_pct: err,
                    lo_pct: lo,
                    hi_pct: hi,
                });
                vec![
                    sig12(r.delta),
                    sig12(r.threshold),
                    sig12(est.p_hat),
                    sig12(est.stderr),
                    sig12(est.ci99.0),
                    sig12(est.ci99.1),
                    sig12(err),
                    sig12(lo),
                    sig12(hi),
                ]
            }
            Err(_) => {
                let mut v = vec![sig12(r.delta), sig12(r.threshold)];
                v.resize(FIG1_HEADER.len(), String::new());
                v
            }
        };
        csv += &csv_line(&fields);
        if let Ok(est) = &r.result {
            eprintln!(
                "delta = {:<16} p_hat = {:<16} Err = {}%",
                sig12(r.delta),
                sig12(est.p_hat),
                opt12(est.err_rel_pct)
            );
        }
    }
    let manifest = RunManifest::new("fig1", &s, rows.iter().map(|r| r.threshold).collect(), cfg)?;
    emit(a.out.as_deref(), &csv, &manifest)?;
    let svg_path = a.svg.clone().unwrap_or_else(|| "fig1.svg".into());
    let title = format!(
        "Relative error of P(tau <= {}), x0 = {}, mu = {}, sigma = {}, M = {}",
        sig12(s.t),
        sig12(s.x0),
        sig12(s.mu),
        sig12(s.sigma),
        s.m
    );
    std::fs::write(&svg_path, svg::render(&points, &title, &manifest.to_json()?))?;
    row_failures(&rows)
}

fn sweep(a: &RunArgs) -> Result<(), CliError> {
    let (s, cfg) = a.resolve(Defaults::ABSORPTION)?;
    let rows = run_sweep(&s)?;
    let mut csv = csv_line(&SWEEP_HEADER);
    for r in &rows {
        let mut fields = vec![sig12(r.delta), sig12(r.threshold), r.seed.to_string(), s.m.to_string()];
        match &r.result {
            Ok(est) => fields.extend([
                sig12(est.p_hat),
                sig12(est.stderr),
                sig12(est.ci99.0),
                sig12(est.ci99.1),
                opt12(est.p_exact),
                opt12(est.err_rel_pct),
                String::new(),
            ]),
            Err(e) => {
                fields.resize(SWEEP_HEADER.len() - 1, String::new());
                fields.push(text_field(&e.to_string()));
            }
        }
        csv += &csv_line(&fields);
    }
    let manifest = RunManifest::new("sweep", &s, rows.iter().map(|r| r.threshold).collect(), cfg)?;
    emit(a.out.as_deref(), &csv, &manifest)?;
    row_failures(&rows)
}

fn analytic(a: &AnalyticArgs) -> Result<(), CliError> {
    let s = a.resolve()?;
    let coef = Coefficients::new(s.mu, s.sigma, s.p)?;
    if !(s.x >= 0.0 && s.x.is_finite()) {
        return Err(CliError::Usage(format!(
            "x = {} is outside the admissible range [0, inf)",
            s.x
        )));
    }
    let all = !a.phi && !a.psi;
    let in_unit = s.x <= 1.0;
    let mut lines = Vec::new();
    if all && s.p == 0.5 {
        lines.push(("cdf", absorption_cdf_half(s.mu, s.sigma, s.x, s.t)?));
        lines.push(("atom", absorption_atom(s.mu, s.sigma, s.x)));
    }
    if (a.phi || a.psi) && !in_unit {
        return Err(CliError::Usage(format!(
            "x = {} is outside the admissible range [0, 1] for phi and psi",
            s.x
        )));
    }
    if in_unit {
        let f = DiffusionFunctions::with_defaults(coef)?;
        if all || a.phi {
            lines.push(("phi", f.phi(s.x)?));
        }
        if all || a.psi {
            lines.push(("psi", f.psi(s.x)?));
        }
        if all && s.x > 0.0 && s.x < 1.0 {
            lines.push(("residual_phi", f.phi_residual(s.x)?));
            lines.push(("residual_psi", f.psi_residual(s.x)?));
        }
    }
    let mut out = std::io::stdout().lock();
    for (k, v) in lines {
        writeln!(out, "{k} = {}", sig12(v))?;
    }
    Ok(())
}

fn selftest() -> Result<(), CliError> {
    let report = run_selftest();
    let mut out = std::io::stdout().lock();
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "[{tag}] {:<20} {}", c.name, c.detail)?;
    }
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(CliError::Runtime(format!("selftest failed: {} ({})", c.name, c.detail))),
    }
}
