//! Trajectory farm and estimators.
//!
//! Trajectory `i` always draws from `normal_stream(master_seed, i)`. Work is
//! cut into fixed chunks of [`CHUNK`] trajectories and chunk results are
//! reduced in index order, so estimates are bit-identical for any number of
//! workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::absorption_cdf_half;
use crate::boundary::validate_beta;
use crate::error::{CevError, Result};
use crate::rng::{Mixer, NormalStream};
use crate::sde::{run_exit, run_to_level, step_count, CevParams, ExitSide, SchemeConfig};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758;

pub const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub m: u64,
    pub master_seed: u64,
    /// Requested worker threads; 0 uses the global pool. Never affects results.
    pub worker_hint: usize,
}

impl McConfig {
    pub fn new(m: u64, master_seed: u64) -> Self {
        McConfig {
            m,
            master_seed,
            worker_hint: 0,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_hint = workers;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(CevError::invalid("m", 0.0, "need at least one trajectory"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub ci99: (f64, f64),
    pub m: u64,
    pub hits: u64,
    /// Exact value the estimate was compared with, when one is known.
    pub p_exact: Option<f64>,
    pub err_rel_pct: Option<f64>,
}

impl McEstimate {
    pub fn from_counts(hits: u64, m: u64) -> Self {
        let p_hat = hits as f64 / m as f64;
        let stderr = (p_hat * (1.0 - p_hat) / m as f64).sqrt();
        let half = Z99 * stderr;
        McEstimate {
            p_hat,
            stderr,
            ci99: ((p_hat - half).max(0.0), (p_hat + half).min(1.0)),
            m,
            hits,
            p_exact: None,
            err_rel_pct: None,
        }
    }

    pub fn with_exact(mut self, p_exact: f64) -> Result<Self> {
        self.err_rel_pct = Some(relative_error(self.p_hat, p_exact)?);
        self.p_exact = Some(p_exact);
        Ok(self)
    }
}

/// `(p_hat - p_exact) / p_exact * 100`.
pub fn relative_error(p_hat: f64, p_exact: f64) -> Result<f64> {
    if p_exact == 0.0 || !p_exact.is_finite() {
        return Err(CevError::ZeroReference(p_exact));
    }
    Ok((p_hat - p_exact) / p_exact * 100.0)
}

/// Runs `f` on the requested number of workers.
fn on_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Per-chunk results for trajectories `0..m`, in chunk order.
fn farm<T, F>(m: u64, workers: usize, chunk_fn: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
{
    let chunks = m.div_ceil(CHUNK);
    on_workers(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| chunk_fn(c * CHUNK..((c + 1) * CHUNK).min(m)))
            .collect()
    })
}

/// Fraction of paths whose stopping time is at most `t`.
///
/// The relative error is filled in when `p = 1/2`, where the exact
/// absorption probability is known.
pub fn estimate_absorption(params: &CevParams, scheme: &SchemeConfig, t: f64, mc: &McConfig) -> Result<McEstimate> {
    scheme.validate_for(params)?;
    mc.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(CevError::invalid("t", t, "must be positive and finite"));
    }
    if t > scheme.t_max {
        return Err(CevError::HorizonBeyondSimulation { t, t_max: scheme.t_max });
    }
    let n = step_count(t, scheme.delta)?;
    let (params, delta, level, seed) = (*params, scheme.delta, scheme.threshold, mc.master_seed);
    let counts = farm(mc.m, mc.worker_hint, |range| {
        range
            .filter(|&i| run_to_level(&params, delta, level, t, n, NormalStream::new(seed, i)).hit)
            .count() as u64
    });
    let est = McEstimate::from_counts(counts.iter().sum(), mc.m);
    if params.p == 0.5 {
        est.with_exact(absorption_cdf_half(params.mu, params.sigma, params.x0, t)?)
    } else {
        Ok(est)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct ExitChunk {
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
    lower: u64,
    upper: u64,
    censored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci99: (f64, f64),
    pub m: u64,
    pub lower_level: f64,
    pub upper_level: f64,
    pub lower_fraction: f64,
    pub upper_fraction: f64,
    /// Paths that reached neither level by `t_max`; they enter the mean at `t_max`.
    pub censored_fraction: f64,
}

/// Mean time for the interpolated path to leave `(delta^beta, 1)`.
pub fn estimate_exit_time(
    params: &CevParams,
    delta: f64,
    beta: f64,
    t_max: f64,
    mc: &McConfig,
) -> Result<ExitTimeEstimate> {
    params.validate()?;
    validate_beta(params.p, beta)?;
    mc.validate()?;
    let n = step_count(t_max, delta)?;
    let lower = delta.powf(beta);
    let upper = 1.0;
    if !(lower < params.x0) {
        return Err(CevError::LevelNotBelowStart {
            level: lower,
            x0: params.x0,
        });
    }
    if params.x0 > upper {
        return Err(CevError::invalid("x0", params.x0, "must not exceed the upper level 1"));
    }
    let (params, seed) = (*params, mc.master_seed);
    let chunks = farm(mc.m, mc.worker_hint, |range| {
        let mut acc = ExitChunk::default();
        for i in range {
            let out = run_exit(&params, delta, lower, upper, t_max, n, NormalStream::new(seed, i));
            acc.sum.add(out.time);
            acc.sum_sq.add(out.time * out.time);
            match out.side {
                ExitSide::Lower => acc.lower += 1,
                ExitSide::Upper => acc.upper += 1,
                ExitSide::Censored => acc.censored += 1,
            }
        }
        acc
    });
    let mut total = ExitChunk::default();
    for c in &chunks {
        total.sum.add(c.sum.value());
        total.sum_sq.add(c.sum_sq.value());
        total.lower += c.lower;
        total.upper += c.upper;
        total.censored += c.censored;
    }
    let m = mc.m as f64;
    let mean = total.sum.value() / m;
    let var = if mc.m > 1 {
        ((total.sum_sq.value() - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    let stderr = (var / m).sqrt();
    Ok(ExitTimeEstimate {
        mean,
        stderr,
        ci99: (mean - Z99 * stderr, mean + Z99 * stderr),
        m: mc.m,
        lower_level: lower,
        upper_level: upper,
        lower_fraction: total.lower as f64 / m,
        upper_fraction: total.upper as f64 / m,
        censored_fraction: total.censored as f64 / m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub threshold: f64,
    pub seed: u64,
    pub result: Result<McEstimate>,
}

/// One absorption estimate per step size, rows ordered by decreasing step.
///
/// Row `r` uses seed `Mixer::STANDARD.derive_seed(master_seed, r)`. `beta =
/// None` stops at 0 itself. A failing row does not stop the sweep.
pub fn sweep_delta(params: &CevParams, beta: Option<f64>, t: f64, deltas: &[f64], mc: &McConfig) -> Vec<SweepRow> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
        .into_iter()
        .enumerate()
        .map(|(r, delta)| {
            let seed = Mixer::STANDARD.derive_seed(mc.master_seed, r as u64);
            let scheme = match beta {
                Some(b) => SchemeConfig::new(delta, b, t),
                None => SchemeConfig::threshold_zero(delta, t),
            };
            let threshold = scheme.as_ref().map(|s| s.threshold).unwrap_or(f64::NAN);
            let row_mc = McConfig {
                master_seed: seed,
                ..*mc
            };
            let result = scheme.and_then(|s| estimate_absorption(params, &s, t, &row_mc));
            SweepRow {
                delta,
                threshold,
                seed,
                result,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feller() -> CevParams {
        CevParams::new(0.0, 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(0.6703, 0.6703).unwrap(), 0.0);
        assert!((relative_error(0.68, 0.6703).unwrap() - 1.4471132328808058).abs() < 1e-9);
        assert!((relative_error(0.66, 0.6703).unwrap() + 1.536625391615691).abs() < 1e-9);
        assert!(relative_error(0.5, 0.0).is_err());
    }

    #[test]
    fn estimate_fields_are_consistent() {
        let e = McEstimate::from_counts(0, 10);
        assert_eq!((e.p_hat, e.stderr, e.ci99), (0.0, 0.0, (0.0, 0.0)));
        let e = McEstimate::from_counts(3, 4);
        assert!(e.ci99.0 <= e.p_hat && e.p_hat <= e.ci99.1);
        assert!(e.ci99.1 <= 1.0);
    }

    #[test]
    fn level_above_start_is_rejected() {
        let scheme = SchemeConfig::new(4.0, 0.5, 10.0).unwrap();
        assert!(estimate_absorption(&feller(), &scheme, 5.0, &McConfig::new(10, 1)).is_err());
    }

    #[test]
    fn horizon_beyond_scheme_is_rejected() {
        let scheme = SchemeConfig::new(1e-2, 0.9, 1.0).unwrap();
        let err = estimate_absorption(&feller(), &scheme, 5.0, &McConfig::new(10, 1)).unwrap_err();
        assert!(matches!(err, CevError::HorizonBeyondSimulation { .. }));
        assert!(estimate_absorption(&feller(), &scheme, 1.0, &McConfig::new(0, 1)).is_err());
    }

    #[test]
    fn estimates_are_deterministic_and_worker_independent() {
        let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
        let mc = McConfig::new(10_000, 42);
        let a = estimate_absorption(&feller(), &scheme, 5.0, &mc).unwrap();
        let b = estimate_absorption(&feller(), &scheme, 5.0, &mc.with_workers(1)).unwrap();
        let c = estimate_absorption(&feller(), &scheme, 5.0, &mc.with_workers(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(a.err_rel_pct.is_some());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        assert_eq!(s.value(), 1.0 + 1e-15);
    }

    #[test]
    fn exit_time_accounting() {
        let params = CevParams::new(0.0, 1.0, 0.5, 0.5).unwrap();
        let mc = McConfig::new(2_000, 7);
        let e = estimate_exit_time(&params, 1e-2, 0.9, 0.05, &mc).unwrap();
        let total = e.lower_fraction + e.upper_fraction + e.censored_fraction;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(e.censored_fraction > 0.5);
        assert!(e.mean <= 0.05 + 1e-12);
        let start_on_top = CevParams::new(0.0, 1.0, 0.5, 1.0).unwrap();
        let e = estimate_exit_time(&start_on_top, 1e-2, 0.9, 1.0, &mc).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.upper_fraction, 1.0);
        let above = CevParams::new(0.0, 1.0, 0.5, 1.5).unwrap();
        assert!(estimate_exit_time(&above, 1e-2, 0.9, 1.0, &mc).is_err());
    }

    #[test]
    fn sweep_rows_and_seeds() {
        let mc = McConfig::new(500, 3);
        assert!(sweep_delta(&feller(), Some(0.9), 5.0, &[], &mc).is_empty());
        let rows = sweep_delta(&feller(), Some(0.9), 5.0, &[1e-2, 1e-1, 1e-2, -1.0], &mc);
        let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
        assert_eq!(deltas, vec![1e-1, 1e-2, 1e-2, -1.0]);
        assert_ne!(rows[1].seed, rows[2].seed);
        assert!(rows[0].result.is_ok() && rows[1].result.is_ok());
        assert!(rows[3].result.is_err());
    }
}
