//! Stopping-rule logic: the admissible range of the mollification exponent,
//! crossing times of a piecewise-linear path, and the extended-time metric.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CevError, Result};

/// A point of `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtendedTime {
    Finite(f64),
    Infinite,
}

impl ExtendedTime {
    pub fn finite(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(ExtendedTime::Finite(t))
        } else if t == f64::INFINITY {
            Ok(ExtendedTime::Infinite)
        } else {
            Err(CevError::invalid("time", t, "must lie in [0, +inf]"))
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedTime::Finite(_))
    }

    /// `f64` view, with `+inf` for the point at infinity.
    pub fn as_f64(&self) -> f64 {
        match *self {
            ExtendedTime::Finite(t) => t,
            ExtendedTime::Infinite => f64::INFINITY,
        }
    }

    pub fn arctan(&self) -> f64 {
        match *self {
            ExtendedTime::Finite(t) => t.atan(),
            ExtendedTime::Infinite => FRAC_PI_2,
        }
    }
}

impl PartialOrd for ExtendedTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for ExtendedTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedTime::Finite(t) => write!(f, "{t}"),
            ExtendedTime::Infinite => f.write_str("inf"),
        }
    }
}

/// Result of one simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub hit: bool,
    pub hit_time: ExtendedTime,
    pub steps_used: u64,
    pub terminal_x: f64,
}

/// Upper end of the admissible exponent interval, `(1/2)/(1-p)`.
pub fn beta_upper(p: f64) -> f64 {
    0.5 / (1.0 - p)
}

/// Accepts `beta` iff `0 < beta < (1/2)/(1-p)`.
pub fn validate_beta(p: f64, beta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&p) {
        return Err(CevError::invalid("p", p, "must lie in [1/2, 1)"));
    }
    let upper = beta_upper(p);
    if beta > 0.0 && beta < upper {
        Ok(())
    } else {
        Err(CevError::BetaOutOfRange { p, beta, upper })
    }
}

/// Time at which the linear segment from `(t_prev, x_prev)` to
/// `(t_prev + delta, x_next)` meets `level`, if it does.
///
/// Touching the level at the new endpoint counts. A segment that starts on
/// the level reports `t_prev`.
#[inline]
pub fn interpolate_crossing_time(t_prev: f64, x_prev: f64, x_next: f64, level: f64, delta: f64) -> Option<f64> {
    let a = x_prev - level;
    let b = x_next - level;
    if a == 0.0 {
        Some(t_prev)
    } else if b == 0.0 {
        Some(t_prev + delta)
    } else if (a < 0.0) != (b < 0.0) {
        let frac = (a / (x_prev - x_next)).clamp(0.0, 1.0);
        Some(t_prev + delta * frac)
    } else {
        None
    }
}

/// Whether `level` lies in the closed segment between `prev` and `next`,
/// not counting the case where only `prev` sits on it.
#[inline]
pub fn brackets(prev: f64, next: f64, level: f64) -> bool {
    if next == level {
        return true;
    }
    if prev == level {
        return false;
    }
    (prev < level) != (next < level)
}

/// Smallest `j >= 1` whose segment `(values[j-1], values[j]]` brackets
/// `level`; multiply by the step to get the grid crossing time.
pub fn grid_crossing_index(values: &[f64], level: f64) -> Option<usize> {
    values
        .windows(2)
        .position(|w| brackets(w[0], w[1], level))
        .map(|i| i + 1)
}

/// `|arctan s - arctan t|` with `arctan(+inf) = pi/2`.
pub fn rho(s: ExtendedTime, t: ExtendedTime) -> f64 {
    (s.arctan() - t.arctan()).abs()
}
