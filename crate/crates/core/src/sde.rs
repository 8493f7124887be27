//! Euler-Maruyama paths of `dX = mu X dt + sigma X^p dB` with coefficients
//! evaluated at the positive part of the state.
//!
//! Paths are streamed one grid point at a time; nothing stores a full path
//! unless the caller collects the iterator.

use serde::{Deserialize, Serialize};

use crate::boundary::{beta_upper, interpolate_crossing_time, validate_beta, ExtendedTime, TrajectoryOutcome};
use crate::error::{CevError, Result};
use crate::rng::NormalSource;

/// Coefficients and initial value of the CEV diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CevParams {
    pub mu: f64,
    pub sigma: f64,
    pub p: f64,
    pub x0: f64,
}

impl CevParams {
    pub fn new(mu: f64, sigma: f64, p: f64, x0: f64) -> Result<Self> {
        let params = CevParams { mu, sigma, p, x0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(CevError::invalid("mu", self.mu, "must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(CevError::invalid("sigma", self.sigma, "must be positive and finite"));
        }
        if !(0.5..1.0).contains(&self.p) {
            return Err(CevError::invalid("p", self.p, "must lie in [1/2, 1)"));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(CevError::invalid("x0", self.x0, "must be positive and finite"));
        }
        Ok(())
    }

    /// Diffusion coefficient `sigma * (x+)^p`; uses `sqrt` when `p = 1/2`.
    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if self.p == 0.5 {
            self.sigma * x.sqrt()
        } else {
            self.sigma * x.powf(self.p)
        }
    }
}

/// Step size, mollification exponent, horizon and the stopping level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub delta: f64,
    /// `None` in the experimental zero-level mode.
    pub beta: Option<f64>,
    pub t_max: f64,
    pub threshold: f64,
}

/// Default exponent: 90% of the way to the upper end of the admissible range.
pub fn default_beta(p: f64) -> f64 {
    0.9 * beta_upper(p)
}

fn check_step_and_horizon(delta: f64, t_max: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CevError::invalid("delta", delta, "must be positive and finite"));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CevError::invalid("t_max", t_max, "must be positive and finite"));
    }
    Ok(())
}

/// `ceil(t_max / delta)`, ignoring round-off just above an integer.
pub fn step_count(t_max: f64, delta: f64) -> Result<u64> {
    check_step_and_horizon(delta, t_max)?;
    let ratio = t_max / delta;
    if !ratio.is_finite() || ratio > 2f64.powi(53) {
        return Err(CevError::StepOverflow { steps: ratio });
    }
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    Ok((n as u64).max(1))
}

impl SchemeConfig {
    /// Stopping level `delta^beta`.
    pub fn new(delta: f64, beta: f64, t_max: f64) -> Result<Self> {
        check_step_and_horizon(delta, t_max)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(CevError::invalid("beta", beta, "must be positive and finite"));
        }
        Ok(SchemeConfig {
            delta,
            beta: Some(beta),
            t_max,
            threshold: delta.powf(beta),
        })
    }

    /// Stops at 0 itself. No convergence guarantee is known for this rule.
    pub fn threshold_zero(delta: f64, t_max: f64) -> Result<Self> {
        check_step_and_horizon(delta, t_max)?;
        Ok(SchemeConfig {
            delta,
            beta: None,
            t_max,
            threshold: 0.0,
        })
    }

    pub fn steps(&self) -> Result<u64> {
        step_count(self.t_max, self.delta)
    }

    /// Checks the exponent range for `params.p` and that the stopping level
    /// lies below the initial value.
    pub fn validate_for(&self, params: &CevParams) -> Result<()> {
        params.validate()?;
        check_step_and_horizon(self.delta, self.t_max)?;
        if let Some(beta) = self.beta {
            validate_beta(params.p, beta)?;
        }
        if !(self.threshold < params.x0) {
            return Err(CevError::LevelNotBelowStart {
                level: self.threshold,
                x0: params.x0,
            });
        }
        self.steps()?;
        Ok(())
    }
}

/// Grid point `j` of a path; `t` is always `j * delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridState {
    pub j: u64,
    pub x: f64,
    pub t: f64,
}

/// One Euler-Maruyama step with positive-part coefficients. The returned
/// state is not clipped.
#[inline]
pub fn em_step(x_prev: f64, xi: f64, params: &CevParams, delta: f64) -> f64 {
    let xp = x_prev.max(0.0);
    x_prev + params.mu * xp * delta + params.diffusion(xp) * xi * delta.sqrt()
}

/// Infinite stream of grid points `j = 1, 2, ...` of one path.
#[derive(Debug)]
pub struct EmPath<'a, S> {
    params: &'a CevParams,
    delta: f64,
    sqrt_delta: f64,
    state: GridState,
    source: S,
}

impl<'a, S: NormalSource> EmPath<'a, S> {
    pub fn new(params: &'a CevParams, delta: f64, source: S) -> Self {
        EmPath {
            params,
            delta,
            sqrt_delta: delta.sqrt(),
            state: GridState {
                j: 0,
                x: params.x0,
                t: 0.0,
            },
            source,
        }
    }

    /// Current grid point.
    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn into_source(self) -> S {
        self.source
    }
}

impl<'a, S: NormalSource> Iterator for EmPath<'a, S> {
    type Item = GridState;

    #[inline]
    fn next(&mut self) -> Option<GridState> {
        let x = self.state.x;
        let next = if x <= 0.0 {
            // frozen, but the draw is still consumed
            self.source.next_normal();
            x
        } else {
            let xi = self.source.next_normal();
            x + self.params.mu * x * self.delta + self.params.diffusion(x) * xi * self.sqrt_delta
        };
        let j = self.state.j + 1;
        self.state = GridState {
            j,
            x: next,
            t: j as f64 * self.delta,
        };
        Some(self.state)
    }
}

/// Runs one path until its linear interpolant reaches `scheme.threshold` or
/// the horizon `scheme.t_max` passes.
pub fn simulate_to_stop<S: NormalSource>(
    params: &CevParams,
    scheme: &SchemeConfig,
    source: S,
) -> Result<TrajectoryOutcome> {
    scheme.validate_for(params)?;
    let n = scheme.steps()?;
    Ok(run_to_level(
        params,
        scheme.delta,
        scheme.threshold,
        scheme.t_max,
        n,
        source,
    ))
}

#[inline]
pub(crate) fn run_to_level<S: NormalSource>(
    params: &CevParams,
    delta: f64,
    level: f64,
    t_max: f64,
    n: u64,
    source: S,
) -> TrajectoryOutcome {
    let mut path = EmPath::new(params, delta, source);
    let mut x_prev = params.x0;
    for _ in 0..n {
        let s = path.next().expect("infinite iterator");
        let t_prev = (s.j - 1) as f64 * delta;
        if let Some(tau) = interpolate_crossing_time(t_prev, x_prev, s.x, level, delta) {
            if tau <= t_max {
                return TrajectoryOutcome {
                    hit: true,
                    hit_time: ExtendedTime::Finite(tau),
                    steps_used: s.j,
                    terminal_x: s.x,
                };
            }
        }
        x_prev = s.x;
    }
    TrajectoryOutcome {
        hit: false,
        hit_time: ExtendedTime::Infinite,
        steps_used: n,
        terminal_x: x_prev,
    }
}

/// Which way a path left a strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSide {
    Lower,
    Upper,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitOutcome {
    /// Exit time, or `t_max` for censored paths.
    pub time: f64,
    pub side: ExitSide,
    pub steps_used: u64,
}

/// Runs one path until its interpolant leaves `(lower, upper)` or `t_max`
/// passes. Requires `lower < x0 <= upper`; starting on `upper` exits at 0.
pub fn simulate_exit<S: NormalSource>(
    params: &CevParams,
    delta: f64,
    lower: f64,
    upper: f64,
    t_max: f64,
    source: S,
) -> Result<ExitOutcome> {
    params.validate()?;
    if !(lower < params.x0) {
        return Err(CevError::LevelNotBelowStart {
            level: lower,
            x0: params.x0,
        });
    }
    if !(params.x0 <= upper) {
        return Err(CevError::invalid(
            "x0",
            params.x0,
            format!("must not exceed the upper level {upper}"),
        ));
    }
    let n = step_count(t_max, delta)?;
    Ok(run_exit(params, delta, lower, upper, t_max, n, source))
}

#[inline]
pub(crate) fn run_exit<S: NormalSource>(
    params: &CevParams,
    delta: f64,
    lower: f64,
    upper: f64,
    t_max: f64,
    n: u64,
    source: S,
) -> ExitOutcome {
    if params.x0 == upper {
        return ExitOutcome {
            time: 0.0,
            side: ExitSide::Upper,
            steps_used: 0,
        };
    }
    let mut path = EmPath::new(params, delta, source);
    let mut x_prev = params.x0;
    for _ in 0..n {
        let s = path.next().expect("infinite iterator");
        let t_prev = (s.j - 1) as f64 * delta;
        let down = interpolate_crossing_time(t_prev, x_prev, s.x, lower, delta);
        let up = interpolate_crossing_time(t_prev, x_prev, s.x, upper, delta);
        let exit = match (down, up) {
            (Some(a), Some(b)) if b < a => Some((b, ExitSide::Upper)),
            (Some(a), _) => Some((a, ExitSide::Lower)),
            (None, Some(b)) => Some((b, ExitSide::Upper)),
            (None, None) => None,
        };
        if let Some((tau, side)) = exit {
            if tau <= t_max {
                return ExitOutcome {
                    time: tau,
                    side,
                    steps_used: s.j,
                };
            }
            break;
        }
        x_prev = s.x;
    }
    ExitOutcome {
        time: t_max,
        side: ExitSide::Censored,
        steps_used: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_stream, ConstantSource, Counting};

    fn feller() -> CevParams {
        CevParams::new(0.0, 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn em_step_examples() {
        let p = |mu| CevParams {
            mu,
            sigma: 1.0,
            p: 0.5,
            x0: 1.0,
        };
        assert_eq!(em_step(1.0, 0.0, &p(0.0), 0.01), 1.0);
        assert_eq!(em_step(0.0, 5.0, &p(3.0), 0.01), 0.0);
        assert!((em_step(1.0, 1.0, &p(0.1), 0.01) - 1.101).abs() < 1e-15);
        assert_eq!(em_step(-0.2, 2.0, &p(1.0), 0.01), -0.2);
    }

    #[test]
    fn params_reject_bad_domain() {
        assert!(CevParams::new(0.0, 0.0, 0.5, 1.0).is_err());
        assert!(CevParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(CevParams::new(0.0, 1.0, 0.49, 1.0).is_err());
        assert!(CevParams::new(0.0, 1.0, 0.5, 0.0).is_err());
        assert!(CevParams::new(f64::NAN, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn level_above_start_is_rejected() {
        let params = feller();
        // delta^beta = 4^0.5 = 2 > x0 = 1
        let scheme = SchemeConfig::new(4.0, 0.5, 10.0).unwrap();
        assert_eq!(scheme.threshold, 2.0);
        let err = simulate_to_stop(&params, &scheme, ConstantSource(0.0)).unwrap_err();
        assert!(matches!(err, CevError::LevelNotBelowStart { .. }));
    }

    #[test]
    fn constant_path_never_hits() {
        let params = feller();
        let scheme = SchemeConfig::new(1e-3, 0.9, 5.0).unwrap();
        let mut src = Counting::new(ConstantSource(0.0));
        let out = simulate_to_stop(&params, &scheme, &mut src).unwrap();
        assert!(!out.hit);
        assert_eq!(out.hit_time, ExtendedTime::Infinite);
        assert_eq!(out.steps_used, 5000);
        assert_eq!(src.count, 5000);
        assert_eq!(out.terminal_x, 1.0);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let params = feller();
        let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
        let a = simulate_to_stop(&params, &scheme, normal_stream(9, 4)).unwrap();
        let b = simulate_to_stop(&params, &scheme, normal_stream(9, 4)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn draws_match_steps() {
        let params = feller();
        let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
        for i in 0..200 {
            let mut s = normal_stream(1, i);
            let out = simulate_to_stop(&params, &scheme, &mut s).unwrap();
            assert_eq!(out.steps_used, s.draws());
        }
    }

    #[test]
    fn step_count_tolerates_roundoff() {
        assert_eq!(step_count(5.0, 1e-3).unwrap(), 5000);
        assert_eq!(step_count(0.3, 0.1).unwrap(), 3);
        assert_eq!(step_count(0.35, 0.1).unwrap(), 4);
        assert!(matches!(step_count(1e300, 1e-300), Err(CevError::StepOverflow { .. })));
    }

    #[test]
    fn grid_times_are_products() {
        let params = feller();
        let path = EmPath::new(&params, 0.1, ConstantSource(0.0));
        let last = path.take(1_000_000).last().unwrap();
        assert_eq!(last.t, 1_000_000.0 * 0.1);
    }

    #[test]
    fn hit_time_lies_in_detecting_segment() {
        let params = feller();
        let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
        for i in 0..500 {
            let out = simulate_to_stop(&params, &scheme, normal_stream(3, i)).unwrap();
            if let ExtendedTime::Finite(tau) = out.hit_time {
                let tj = out.steps_used as f64 * scheme.delta;
                assert!(tau <= tj + 1e-12 && tau >= tj - scheme.delta - 1e-12);
                assert!(tau <= scheme.t_max);
            }
        }
    }

    #[test]
    fn exit_from_upper_level_is_immediate() {
        let params = feller();
        let out = simulate_exit(&params, 1e-3, 0.01, 1.0, 10.0, ConstantSource(1.0)).unwrap();
        assert_eq!(out.time, 0.0);
        assert_eq!(out.side, ExitSide::Upper);
    }

    #[test]
    fn exit_censoring() {
        let params = CevParams::new(0.0, 1.0, 0.5, 0.5).unwrap();
        let out = simulate_exit(&params, 1e-2, 0.01, 1.0, 2.0, ConstantSource(0.0)).unwrap();
        assert_eq!(out.side, ExitSide::Censored);
        assert_eq!(out.time, 2.0);
        // constant positive noise pushes the path upward
        let out = simulate_exit(&params, 1e-2, 0.01, 1.0, 2.0, ConstantSource(1.0)).unwrap();
        assert_eq!(out.side, ExitSide::Upper);
    }

    #[test]
    fn zero_level_mode() {
        let params = feller();
        let scheme = SchemeConfig::threshold_zero(1e-2, 5.0).unwrap();
        assert!(scheme.validate_for(&params).is_ok());
        let out = simulate_to_stop(&params, &scheme, ConstantSource(-3.0)).unwrap();
        assert!(out.hit);
        assert!(out.terminal_x <= 0.0);
    }
}
