//! Ground truth for the CEV diffusion.
//!
//! Closed-form absorption probabilities for `p = 1/2`, and for general `p` the
//! exit problem on `(0, 1)`:
//!
//! ```text
//! s(y)        = exp(-(2 mu / sigma^2) y^(2-2p) / (2-2p))      scale density
//! S(y) - S(x) = int_x^y s                                     scale measure
//! m(y)        = 1 / (sigma^2 y^(2p) s(y))                     speed density
//! phi(x)      = (S(x) - S(0)) / (S(1) - S(0))                 P_x(exit at 1)
//! psi(x)      = 2 phi(x)     int_x^1 (S(1) - S(y)) m(y) dy
//!             + 2 (1-phi(x)) int_0^x (S(y) - S(0)) m(y) dy    E_x(exit time)
//! ```
//!
//! `phi` solves `L phi = 0` and `psi` solves `L psi = -1` with zero boundary
//! values, where `L f = mu x f' + sigma^2 x^(2p) f'' / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{CevError, Result};
use crate::quadrature::{integrate_from_zero, integrate_graded, QuadratureConfig};
use crate::sde::CevParams;

/// Below this `|mu t|` the absorption rate uses its Taylor series.
const SMALL_RATE_ARG: f64 = 1e-8;

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CevError::invalid(name, v, "must be positive and finite"))
    }
}

/// `mu / (1 - exp(-mu t))`, which is `1/t` at `mu = 0`.
fn absorption_rate(mu: f64, t: f64) -> f64 {
    let z = mu * t;
    if z.abs() < SMALL_RATE_ARG {
        (1.0 + z / 2.0 + z * z / 12.0) / t
    } else {
        -mu / (-z).exp_m1()
    }
}

/// `P_x(tau_0 <= t)` for `p = 1/2`.
pub fn absorption_cdf_half(mu: f64, sigma: f64, x: f64, t: f64) -> Result<f64> {
    if !mu.is_finite() {
        return Err(CevError::invalid("mu", mu, "must be finite"));
    }
    check_positive("sigma", sigma)?;
    check_positive("x", x)?;
    check_positive("t", t)?;
    if mu == 0.0 {
        return Ok((-2.0 * x / (sigma * sigma) / t).exp());
    }
    Ok((-2.0 * x / (sigma * sigma) * absorption_rate(mu, t)).exp())
}

/// `P_x(tau_0 < inf)`: `exp(-2 x mu / sigma^2)` for `mu > 0`, else 1.
pub fn absorption_atom(mu: f64, sigma: f64, x: f64) -> f64 {
    (-2.0 * x * mu / (sigma * sigma)).exp().min(1.0)
}

/// How `S(y) - S(x)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    /// Closed form where one exists, quadrature otherwise.
    Auto,
    Quadrature,
}

/// Drift, volatility and exponent, without an initial value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub mu: f64,
    pub sigma: f64,
    pub p: f64,
}

impl Coefficients {
    pub fn new(mu: f64, sigma: f64, p: f64) -> Result<Self> {
        CevParams::new(mu, sigma, p, 1.0)?;
        Ok(Coefficients { mu, sigma, p })
    }

    /// `2 - 2p`.
    fn q(&self) -> f64 {
        2.0 - 2.0 * self.p
    }

    /// `s(y) = exp(-c y^q)` with this `c`.
    fn c(&self) -> f64 {
        2.0 * self.mu / (self.sigma * self.sigma * self.q())
    }

    fn y_pow_q(&self, y: f64) -> f64 {
        if self.p == 0.5 {
            y
        } else {
            y.powf(self.q())
        }
    }

    pub fn scale_density(&self, y: f64) -> f64 {
        if self.mu == 0.0 {
            1.0
        } else {
            (-self.c() * self.y_pow_q(y)).exp()
        }
    }

    pub fn speed_density(&self, y: f64) -> Result<f64> {
        check_positive("y", y)?;
        Ok(1.0 / (self.sigma * self.sigma * y.powf(2.0 * self.p) * self.scale_density(y)))
    }

    /// `S(y) - S(x)` in closed form, when `mu = 0` or `p = 1/2`.
    pub fn scale_measure_closed(&self, x: f64, y: f64) -> Option<f64> {
        if self.mu == 0.0 {
            Some(y - x)
        } else if self.p == 0.5 {
            let k = 2.0 * self.mu / (self.sigma * self.sigma);
            Some((-k * x).exp() * -(-k * (y - x)).exp_m1() / k)
        } else {
            None
        }
    }

    /// `Lf(x) = mu x f'(x) + sigma^2 x^(2p) f''(x) / 2` from supplied derivatives.
    pub fn generator_from_derivatives(&self, x: f64, d1: f64, d2: f64) -> f64 {
        self.mu * x * d1 + 0.5 * self.sigma * self.sigma * x.powf(2.0 * self.p) * d2
    }
}

impl From<&CevParams> for Coefficients {
    fn from(p: &CevParams) -> Self {
        Coefficients {
            mu: p.mu,
            sigma: p.sigma,
            p: p.p,
        }
    }
}

/// Central-difference step used by [`generator_apply`].
pub fn fd_step(x: f64) -> f64 {
    (1e-4 * x).max(1e-6)
}

/// `Lf(x)` with central finite differences, step [`fd_step`].
pub fn generator_apply<F: Fn(f64) -> f64>(f: F, x: f64, coef: &Coefficients) -> f64 {
    try_generator_apply(|y| Ok(f(y)), x, coef).expect("infallible")
}

pub fn try_generator_apply<F: Fn(f64) -> Result<f64>>(f: F, x: f64, coef: &Coefficients) -> Result<f64> {
    let h = fd_step(x);
    let fp = f(x + h)?;
    let f0 = f(x)?;
    let fm = f(x - h)?;
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    Ok(coef.generator_from_derivatives(x, d1, d2))
}

/// Scale, speed, exit probability and expected exit time on `(0, 1)`.
#[derive(Debug, Clone)]
pub struct DiffusionFunctions {
    coef: Coefficients,
    quad: QuadratureConfig,
    mode: ScaleMode,
    /// `S(1) - S(0)`
    total_scale: f64,
}

impl DiffusionFunctions {
    pub fn new(coef: Coefficients, quad: QuadratureConfig, mode: ScaleMode) -> Result<Self> {
        Coefficients::new(coef.mu, coef.sigma, coef.p)?;
        quad.validate()?;
        let mut me = DiffusionFunctions {
            coef,
            quad,
            mode,
            total_scale: 1.0,
        };
        me.total_scale = me.scale_measure(0.0, 1.0)?;
        Ok(me)
    }

    pub fn with_defaults(coef: Coefficients) -> Result<Self> {
        Self::new(coef, QuadratureConfig::default(), ScaleMode::Auto)
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coef
    }

    pub fn scale_density(&self, y: f64) -> f64 {
        self.coef.scale_density(y)
    }

    pub fn speed_density(&self, y: f64) -> Result<f64> {
        self.coef.speed_density(y)
    }

    /// Largest `a` with `int_0^a s` accurate to ~1e-17 relative from its
    /// two-term expansion.
    fn scale_cut(&self) -> f64 {
        let c = self.coef.c().abs();
        if c == 0.0 {
            1.0
        } else {
            (1e-17 / (c * c)).powf(1.0 / (2.0 * self.coef.q())).min(1.0)
        }
    }

    /// `S(y) - S(x)` by graded quadrature, for `0 <= x <= y`.
    pub fn scale_measure_quadrature(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0 <= x && x <= y) {
            return Err(CevError::invalid("x", x, format!("need 0 <= x <= y = {y}")));
        }
        let coef = self.coef;
        let s = |z: f64| coef.scale_density(z);
        if x > 0.0 {
            return integrate_graded(s, x, y, self.quad.rel_tol);
        }
        let (c, q) = (coef.c(), coef.q());
        integrate_from_zero(
            s,
            y,
            self.scale_cut(),
            |a| a - c * a * coef.y_pow_q(a) / (q + 1.0),
            &self.quad,
        )
    }

    pub fn scale_measure(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0 <= x && x <= y) {
            return Err(CevError::invalid("x", x, format!("need 0 <= x <= y = {y}")));
        }
        match (self.mode, self.coef.scale_measure_closed(x, y)) {
            (ScaleMode::Auto, Some(v)) => Ok(v),
            _ => self.scale_measure_quadrature(x, y),
        }
    }

    fn check_unit(x: f64) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(CevError::invalid("x", x, "must lie in [0, 1]"))
        }
    }

    /// Probability of leaving `(0, 1)` through 1.
    pub fn phi(&self, x: f64) -> Result<f64> {
        Self::check_unit(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        if x == 1.0 {
            return Ok(1.0);
        }
        Ok(self.scale_measure(0.0, x)? / self.total_scale)
    }

    /// `int_x^1 (S(1) - S(y)) m(y) dy`
    fn upper_integral(&self, x: f64) -> Result<f64> {
        let coef = self.coef;
        let sig2 = coef.sigma * coef.sigma;
        let mut err = None;
        let v = integrate_graded(
            |y| match self.scale_measure(y, 1.0) {
                Ok(tail) => tail / (sig2 * y.powf(2.0 * coef.p) * coef.scale_density(y)),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            x,
            1.0,
            self.quad.rel_tol,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// `int_0^x (S(y) - S(0)) m(y) dy`
    fn lower_integral(&self, x: f64) -> Result<f64> {
        let coef = self.coef;
        let (c, q) = (coef.c(), coef.q());
        let sig2 = coef.sigma * coef.sigma;
        // integrand = (S(y)-S(0))/y * y^q / (sigma^2 s(y)), which avoids
        // overflow of y^(-2p) deep in the graded region
        let scale_cut = self.scale_cut();
        let mut err = None;
        let mut integrand = |y: f64| {
            let ratio = if y <= scale_cut {
                1.0 - c * coef.y_pow_q(y) / (q + 1.0)
            } else {
                match self.scale_measure(0.0, y) {
                    Ok(v) => v / y,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            };
            ratio * coef.y_pow_q(y) / (sig2 * coef.scale_density(y))
        };
        // int_0^a y^(q-1) (1 + c q y^q / (q+1)) / sigma^2
        let tail = |a: f64| {
            let aq = coef.y_pow_q(a);
            (aq / q + c * aq * aq / (2.0 * (q + 1.0))) / sig2
        };
        let cut = if c == 0.0 {
            x
        } else {
            (1e-17 / (c * c)).powf(1.0 / (2.0 * q)).min(x)
        };
        let cut = if cut < 1e-290 {
            return Err(CevError::Quadrature {
                rel_tol: self.quad.rel_tol,
                detail: format!("p = {} too close to 1 for the graded tail", coef.p),
            });
        } else {
            cut
        };
        let v = integrate_from_zero(|y| integrand(y) / y, x, cut, tail, &self.quad)?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// Expected time to leave `(0, 1)`.
    pub fn psi(&self, x: f64) -> Result<f64> {
        Self::check_unit(x)?;
        if x == 0.0 || x == 1.0 {
            return Ok(0.0);
        }
        let phi = self.phi(x)?;
        Ok(2.0 * phi * self.upper_integral(x)? + 2.0 * (1.0 - phi) * self.lower_integral(x)?)
    }

    /// `phi', phi'', phi'''` from the scale density and the ODE `L phi = 0`.
    pub fn phi_derivatives(&self, x: f64) -> Result<[f64; 3]> {
        check_positive("x", x)?;
        let Coefficients { mu, sigma, p } = self.coef;
        let k = 2.0 * mu / (sigma * sigma);
        let d1 = self.scale_density(x) / self.total_scale;
        let d2 = -k * x.powf(1.0 - 2.0 * p) * d1;
        let d3 = -k * ((1.0 - 2.0 * p) * x.powf(-2.0 * p) * d1 + x.powf(1.0 - 2.0 * p) * d2);
        Ok([d1, d2, d3])
    }

    /// `psi', psi'', psi'''`; the first from differentiating the integral
    /// formula, the others from `L psi = -1` and its derivative.
    pub fn psi_derivatives(&self, x: f64) -> Result<[f64; 3]> {
        check_positive("x", x)?;
        let Coefficients { mu, sigma, p } = self.coef;
        let sig2 = sigma * sigma;
        let [phi1, _, _] = self.phi_derivatives(x)?;
        let d1 = 2.0 * phi1 * (self.upper_integral(x)? - self.lower_integral(x)?);
        let x2p = x.powf(2.0 * p);
        let d2 = -2.0 * (1.0 + mu * x * d1) / (sig2 * x2p);
        let d3 = -2.0 * (mu * d1 + mu * x * d2 + sig2 * p * x.powf(2.0 * p - 1.0) * d2) / (sig2 * x2p);
        Ok([d1, d2, d3])
    }

    /// `L phi (x)` by finite differences.
    pub fn phi_residual(&self, x: f64) -> Result<f64> {
        try_generator_apply(|y| self.phi(y), x, &self.coef)
    }

    /// `L psi (x) + 1` by finite differences.
    pub fn psi_residual(&self, x: f64) -> Result<f64> {
        Ok(try_generator_apply(|y| self.psi(y), x, &self.coef)? + 1.0)
    }

    /// Weighted derivative magnitudes on `x = 2^-k`, `k = 1..=20`.
    pub fn derivative_bound_scan(&self, target: ScanTarget) -> Result<BoundReport> {
        let p = self.coef.p;
        let mut rows = Vec::with_capacity(20);
        for k in 1..=20 {
            let x = 0.5f64.powi(k);
            let w = match target {
                ScanTarget::Phi => {
                    let [d1, d2, d3] = self.phi_derivatives(x)?;
                    [d1.abs(), x.powf(2.0 * p - 1.0) * d2.abs(), x.powf(2.0 * p) * d3.abs()]
                }
                ScanTarget::Psi => {
                    let [d1, d2, d3] = self.psi_derivatives(x)?;
                    let first = if p == 0.5 {
                        d1.abs() / (1.0 / x).ln().max(1.0)
                    } else {
                        x.powf(2.0 * p - 1.0) * d1.abs()
                    };
                    [first, x.powf(2.0 * p) * d2.abs(), x.powf(2.0 * p + 1.0) * d3.abs()]
                }
            };
            rows.push(BoundRow { k, x, weighted: w });
        }
        let ratio = |hi: f64, lo: f64| {
            if hi == 0.0 {
                1.0
            } else if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        };
        let mut max = [0.0f64; 3];
        let mut tail_ratio = [0.0f64; 3];
        let mut tail_growth = [0.0f64; 3];
        for i in 0..3 {
            max[i] = rows.iter().map(|r| r.weighted[i]).fold(0.0, f64::max);
            let tail: Vec<f64> = rows.iter().filter(|r| r.k >= 10).map(|r| r.weighted[i]).collect();
            let hi = tail.iter().copied().fold(0.0, f64::max);
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            tail_ratio[i] = ratio(hi, lo);
            tail_growth[i] = ratio(hi, tail[0]);
        }
        Ok(BoundReport {
            target,
            rows,
            max,
            tail_ratio,
            tail_growth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanTarget {
    Phi,
    Psi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub k: i32,
    pub x: f64,
    pub weighted: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub target: ScanTarget,
    pub rows: Vec<BoundRow>,
    pub max: [f64; 3],
    /// max/min of each weighted column over `k >= 10`
    pub tail_ratio: [f64; 3],
    /// max over `k >= 10` divided by the value at `k = 10`; large values
    /// mean the weighted derivative grows toward 0
    pub tail_growth: [f64; 3],
}
