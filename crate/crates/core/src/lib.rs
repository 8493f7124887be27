//! Monte Carlo estimation of absorption times of the CEV diffusion
//! `dX = mu X dt + sigma X^p dB`, `p in [1/2, 1)`.
//!
//! Paths come from an Euler-Maruyama scheme whose coefficients use the
//! positive part of the state, interpolated linearly between grid points, and
//! stopped when the interpolant reaches `delta^beta` instead of 0. For
//! `0 < beta < (1/2)/(1-p)` this stopping time converges weakly to the true
//! absorption time as `delta -> 0`.
//!
//! - [`sde`]: the scheme and single-path simulation
//! - [`boundary`]: crossing times, exponent range, the metric on `[0, inf]`
//! - [`analytic`]: closed-form and quadrature ground truth
//! - [`montecarlo`]: the reproducible parallel estimators
//! - [`rng`]: counter-based normal streams

// `!(a < b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod boundary;
pub mod error;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod selftest;

pub use analytic::{absorption_atom, absorption_cdf_half, Coefficients, DiffusionFunctions, ScaleMode};
pub use boundary::{
    grid_crossing_index, interpolate_crossing_time, rho, validate_beta, ExtendedTime, TrajectoryOutcome,
};
pub use error::{CevError, Result};
pub use montecarlo::{
    estimate_absorption, estimate_exit_time, relative_error, sweep_delta, ExitTimeEstimate, McConfig, McEstimate,
    SweepRow,
};
pub use rng::{normal_stream, NormalSource, NormalStream};
pub use sde::{default_beta, em_step, simulate_exit, simulate_to_stop, CevParams, SchemeConfig};
