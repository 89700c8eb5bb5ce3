//! Price-of-anarchy threshold: the implicit ODE `-y' = lambda (1 - exp(y'/y))`, `y(0) = 1`.
//!
//! At each `y` the slope `z = y'` is the nonzero root of
//! `g(z) = z + lambda (1 - exp(z / y))`. The root `z = 0` always exists but
//! means nothing is allocated, so the negative root is always taken.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const Y_FLOOR: f64 = 1e-9;
pub const BRACKET: (f64, f64) = (1.05, 1.6);

/// The unique `z` in `(-lambda, 0)` solving `z = -lambda (1 - exp(z / y))`.
pub fn ode_rhs_root(y: f64, lambda: f64) -> Result<f64> {
    if !(y > 0.0 && y < lambda) {
        return Err(Error::NoNegativeRoot { y, lambda });
    }
    let g = |z: f64| z + lambda * (1.0 - (z / y).exp());
    // g(-lambda) < 0 and g > 0 just left of 0, since g'(0) = 1 - lambda / y < 0.
    let mut lo = -lambda;
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Terminal {
    ReachedOne { y1: f64 },
    HitZero { x_stop: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeCurve {
    pub lambda: f64,
    pub step: f64,
    pub samples: Vec<(f64, f64)>,
    pub terminal: Terminal,
}

impl OdeCurve {
    pub fn is_subcritical(&self) -> bool {
        matches!(self.terminal, Terminal::ReachedOne { .. })
    }
}

fn slope(y: f64, lambda: f64) -> Result<f64> {
    if y <= 0.0 {
        // Limit of the root as y -> 0+.
        return Ok(-lambda);
    }
    ode_rhs_root(y, lambda)
}

/// Classical RK4 on `[0, 1]` with step `h`.
pub fn integrate_poa_ode(lambda: f64, h: f64) -> Result<OdeCurve> {
    if !(lambda > 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must exceed 1")));
    }
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::InvalidParameter(format!("step {h} must lie in (0, 1e-3]")));
    }
    let steps = (1.0 / h).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut y = 1.0;
    samples.push((0.0, y));
    for k in 0..steps {
        let k1 = slope(y, lambda)?;
        let k2 = slope(y + 0.5 * h * k1, lambda)?;
        let k3 = slope(y + 0.5 * h * k2, lambda)?;
        let k4 = slope(y + h * k3, lambda)?;
        let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let x0 = k as f64 * h;
        if next <= Y_FLOOR {
            let x_stop = x0 + h * (y - Y_FLOOR) / (y - next);
            return Ok(OdeCurve { lambda, step: h, samples, terminal: Terminal::HitZero { x_stop } });
        }
        y = next;
        samples.push(((k + 1) as f64 * h, y));
    }
    Ok(OdeCurve { lambda, step: h, samples, terminal: Terminal::ReachedOne { y1: y } })
}

/// Bisection for the smallest `lambda` whose curve hits zero before `x = 1`.
pub fn critical_lambda_with(tol: f64, h: f64) -> Result<f64> {
    if !(tol >= 1e-5) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} is below 1e-5")));
    }
    let (mut lo, mut hi) = BRACKET;
    if !integrate_poa_ode(lo, h)?.is_subcritical() || integrate_poa_ode(hi, h)?.is_subcritical() {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > 0.25 * tol {
        let mid = 0.5 * (lo + hi);
        if integrate_poa_ode(mid, h)?.is_subcritical() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalLambda {
    pub value: f64,
    pub halved: f64,
}

impl CriticalLambda {
    pub fn stable(&self, tol: f64) -> bool {
        (self.value - self.halved).abs() <= tol
    }
}

/// Critical `lambda` at the default step and at half of it.
pub fn critical_lambda(tol: f64) -> Result<CriticalLambda> {
    let (a, b) = rayon::join(
        || critical_lambda_with(tol, DEFAULT_STEP),
        || critical_lambda_with(tol, 0.5 * DEFAULT_STEP),
    );
    Ok(CriticalLambda { value: a?, halved: b? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Regime of `lambda` relative to a located critical value, `Critical` within `tol`.
pub fn classify(lambda: f64, critical: f64, tol: f64) -> Regime {
    if (lambda - critical).abs() <= tol {
        Regime::Critical
    } else if lambda < critical {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    }
}

/// `y(1)`, or 0 when the curve reaches zero first.
pub fn terminal_height(curve: &OdeCurve) -> f64 {
    match curve.terminal {
        Terminal::ReachedOne { y1 } => y1,
        Terminal::HitZero { .. } => 0.0,
    }
}
