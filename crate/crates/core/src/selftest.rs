//! Fast invariant checks, run by `cevsim selftest`.

use std::f64::consts::FRAC_PI_2;

use crate::analytic::{absorption_atom, absorption_cdf_half, Coefficients, DiffusionFunctions};
use crate::boundary::{beta_upper, rho, validate_beta, ExtendedTime};
use crate::montecarlo::{estimate_absorption, McConfig};
use crate::rng::{Mixer, NormalSource, NormalStream};
use crate::sde::{em_step, CevParams, SchemeConfig};

/// First draws of stream `(42, 0)` under the standard mixer.
pub const REFERENCE_DRAWS: [f64; 4] = [
    -0.4001667693573559,
    0.15623255472994826,
    -1.165333055506512,
    -0.06471809316714469,
];

/// `sqrt(3!!) 2^(-1/2) e^(-1)`: the Gaussian tail bound on
/// `E xi^2 1{|xi| >= 2}`.
pub fn tail_bound() -> f64 {
    3f64.sqrt() / 2f64.sqrt() * (-1.0f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawMoments {
    pub mean: f64,
    pub variance: f64,
    /// Sample mean of `xi^2 1{|xi| >= 2}`.
    pub tail: f64,
}

pub fn draw_moments<S: NormalSource>(mut source: S, n: u64) -> DrawMoments {
    let (mut s1, mut s2, mut tail) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = source.next_normal();
        s1 += x;
        s2 += x * x;
        if x.abs() >= 2.0 {
            tail += x * x;
        }
    }
    let nf = n as f64;
    let mean = s1 / nf;
    DrawMoments {
        mean,
        variance: (s2 - nf * mean * mean) / (nf - 1.0),
        tail: tail / nf,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_selftest() -> SelftestReport {
    run_selftest_with(Mixer::STANDARD)
}

/// The suite with the draw streams built from `mixer`.
pub fn run_selftest_with(mixer: Mixer) -> SelftestReport {
    let checks = vec![
        analytic_residuals(),
        cdf_limits(),
        rng_moments(mixer),
        determinism(mixer),
        metric_axioms(mixer),
        absorbing_state(),
        beta_gate(),
    ];
    SelftestReport { checks }
}

fn analytic_residuals() -> CheckResult {
    let mut worst: f64 = 0.0;
    for &(mu, sigma, p) in &[(1.0, 1.0, 0.5), (0.5, 1.0, 0.75)] {
        let f = match Coefficients::new(mu, sigma, p).and_then(DiffusionFunctions::with_defaults) {
            Ok(f) => f,
            Err(e) => return check("analytic-residuals", false, e.to_string()),
        };
        for i in 1..10 {
            let x = i as f64 / 10.0;
            match (f.phi_residual(x), f.psi_residual(x)) {
                (Ok(a), Ok(b)) => worst = worst.max(a.abs()).max(b.abs()),
                (Err(e), _) | (_, Err(e)) => return check("analytic-residuals", false, e.to_string()),
            }
        }
    }
    check(
        "analytic-residuals",
        worst <= 1e-4,
        format!("max |L phi|, |L psi + 1| = {worst:.3e}"),
    )
}

fn cdf_limits() -> CheckResult {
    let mut worst: f64 = 0.0;
    for &mu in &[0.1, 0.5, 1.0] {
        let cdf = absorption_cdf_half(mu, 1.0, 1.0, 1e6).unwrap_or(f64::NAN);
        worst = worst.max((cdf - absorption_atom(mu, 1.0, 1.0)).abs());
    }
    let small = absorption_cdf_half(1e-12, 1.0, 1.0, 5.0).unwrap_or(f64::NAN)
        - absorption_cdf_half(0.0, 1.0, 1.0, 5.0).unwrap_or(f64::NAN);
    let passed = worst <= 1e-6 && small.abs() <= 1e-8;
    check(
        "cdf-limits",
        passed,
        format!("atom gap {worst:.2e}, small-mu gap {:.2e}", small.abs()),
    )
}

fn rng_moments(mixer: Mixer) -> CheckResult {
    let m = draw_moments(NormalStream::with_mixer(mixer, 42, 0), 1_000_000);
    let passed = m.mean.abs() <= 4e-3 && (m.variance - 1.0).abs() <= 1e-2 && m.tail <= tail_bound();
    check(
        "rng-moments",
        passed,
        format!(
            "mean {:.2e}, var {:.5}, tail {:.4} (bound {:.4})",
            m.mean,
            m.variance,
            m.tail,
            tail_bound()
        ),
    )
}

fn determinism(mixer: Mixer) -> CheckResult {
    let s = NormalStream::with_mixer(mixer, 42, 0);
    let reference_ok = REFERENCE_DRAWS
        .iter()
        .enumerate()
        .all(|(k, r)| (s.draw_at(k as u64) - r).abs() < 1e-14);
    if !reference_ok {
        return check(
            "determinism",
            false,
            "draws of stream (42, 0) differ from the reference vector".into(),
        );
    }
    let params = CevParams {
        mu: 0.0,
        sigma: 1.0,
        p: 0.5,
        x0: 1.0,
    };
    let scheme = SchemeConfig::new(0.05, 0.9, 5.0).expect("valid scheme");
    let mc = McConfig::new(5_000, 42);
    let runs: Vec<_> = [1, 2, 0]
        .iter()
        .map(|&w| estimate_absorption(&params, &scheme, 5.0, &mc.with_workers(w)).ok())
        .collect();
    let same = runs[0].is_some() && runs.iter().all(|r| r == &runs[0]);
    check(
        "determinism",
        same,
        "reference vector and worker-independent estimates".into(),
    )
}

fn metric_axioms(mixer: Mixer) -> CheckResult {
    let mut s = NormalStream::with_mixer(mixer, 7, 0);
    let mut point = || {
        let z = s.next_normal();
        if z > 1.5 {
            ExtendedTime::Infinite
        } else {
            ExtendedTime::Finite((3.0 * z).exp())
        }
    };
    for _ in 0..2_000 {
        let (a, b, c) = (point(), point(), point());
        let ok = rho(a, a) == 0.0
            && rho(a, b) == rho(b, a)
            && rho(a, c) <= rho(a, b) + rho(b, c) + 1e-15
            && rho(a, b) <= FRAC_PI_2;
        if !ok {
            return check("metric", false, format!("axiom fails at ({a}, {b}, {c})"));
        }
    }
    check("metric", true, "2000 random triples".into())
}

fn absorbing_state() -> CheckResult {
    let params = CevParams {
        mu: 2.0,
        sigma: 1.3,
        p: 0.7,
        x0: 1.0,
    };
    let ok = (0..1_000).all(|i| {
        let x = -(i as f64) * 1e-3;
        em_step(x, (i as f64).sin() * 5.0, &params, 0.01) == x
    });
    check("absorbing", ok, "non-positive states are fixed points".into())
}

fn beta_gate() -> CheckResult {
    let ok = [0.5, 0.6, 0.75, 0.9]
        .iter()
        .all(|&p| validate_beta(p, 0.999 * beta_upper(p)).is_ok() && validate_beta(p, beta_upper(p)).is_err());
    check("beta-gate", ok, "interior accepted, endpoint rejected".into())
}
