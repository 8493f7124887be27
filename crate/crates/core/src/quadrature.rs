//! Composite Gauss-Legendre quadrature on geometrically graded panels.
//!
//! Integrands here behave like powers of `y` near the origin, so the panels
//! shrink by a factor of at most two toward the lower end. Each panel is
//! checked by comparing a 20-point rule against the embedded 10-point one
//! and bisected when they disagree.

use std::sync::OnceLock;

use crate::error::{CevError, Result};

const HIGH: usize = 20;
const LOW: usize = 10;
const MAX_DEPTH: u32 = 40;

#[derive(Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point Gauss-Legendre rule on `[-1, 1]`, nodes from Newton's method
    /// on the three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

/// Value and derivative of the degree-`n` Legendre polynomial at `z`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn rules() -> &'static (GaussRule, GaussRule) {
    static RULES: OnceLock<(GaussRule, GaussRule)> = OnceLock::new();
    RULES.get_or_init(|| (GaussRule::new(HIGH), GaussRule::new(LOW)))
}

/// Tolerances of the graded rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Minimum number of halvings between the upper limit and the point
    /// where the analytic tail takes over.
    pub graded_levels: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-10,
            graded_levels: 30,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(CevError::invalid("rel_tol", self.rel_tol, "must lie in (0, 1e-4]"));
        }
        if self.graded_levels < 10 {
            return Err(CevError::invalid(
                "graded_levels",
                self.graded_levels as f64,
                "must be at least 10",
            ));
        }
        Ok(())
    }
}

fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rel_tol: f64, depth: u32) -> Result<f64> {
    let (high, low) = rules();
    let fine = high.integrate(&mut *f, a, b);
    let coarse = low.integrate(&mut *f, a, b);
    if !fine.is_finite() {
        return Err(CevError::Quadrature {
            rel_tol,
            detail: format!("non-finite integrand on [{a:e}, {b:e}]"),
        });
    }
    // absolute floor keeps panels with vanishing integrals from recursing forever
    let floor = 1e-300_f64.max(f64::EPSILON * 1e-2 * (b - a).abs());
    if (fine - coarse).abs() <= rel_tol * fine.abs() + floor {
        return Ok(fine);
    }
    if depth >= MAX_DEPTH {
        return Err(CevError::Quadrature {
            rel_tol,
            detail: format!("bisection depth exhausted on [{a:e}, {b:e}]"),
        });
    }
    let m = 0.5 * (a + b);
    Ok(panel(f, a, m, rel_tol, depth + 1)? + panel(f, m, b, rel_tol, depth + 1)?)
}

/// `int_a^b f` for `0 < a <= b`, on panels `[a r^k, a r^(k+1)]` with ratio
/// `r <= 2`. Returns 0 when `a == b`.
pub fn integrate_graded<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    debug_assert!(a > 0.0 && b > a, "graded panel needs 0 < a < b, got [{a}, {b}]");
    let n = ((b / a).log2().ceil() as usize).max(1);
    let ratio = (b / a).powf(1.0 / n as f64);
    let mut lo = a;
    let mut sum = 0.0;
    for k in 1..=n {
        let hi = if k == n { b } else { a * ratio.powi(k as i32) };
        sum += panel(&mut f, lo, hi, rel_tol, 0)?;
        lo = hi;
    }
    Ok(sum)
}

/// `int_0^b f` as a graded integral over `[cut, b]` plus `tail(cut)`, the
/// caller's approximation of `int_0^cut f`. The cut is lowered to
/// `b 2^-graded_levels` when `cut_hint` is larger.
pub fn integrate_from_zero<F, T>(f: F, b: f64, cut_hint: f64, tail: T, cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    T: FnOnce(f64) -> f64,
{
    if b == 0.0 {
        return Ok(0.0);
    }
    let cut = cut_hint.min(b * 0.5f64.powi(cfg.graded_levels as i32));
    if !(cut > 0.0) {
        return Err(CevError::Quadrature {
            rel_tol: cfg.rel_tol,
            detail: format!("graded cut underflowed for upper limit {b:e}"),
        });
    }
    Ok(integrate_graded(f, cut, b, cfg.rel_tol)? + tail(cut))
}
