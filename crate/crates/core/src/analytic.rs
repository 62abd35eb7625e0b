//! Constants from the Brownian-meander analysis: the tail of the meander's
//! supremum, `ρ(c)` in closed form and as a double integral, and `c_β`.

use std::f64::consts::PI;

use crate::quad::integrate;
use crate::{Error, Result};

/// Below this argument the tail is evaluated through the dual theta series.
pub const MEANDER_SWITCH: f64 = 0.5;

/// Absolute tolerance of [`rho_integral`].
pub const RHO_INTEGRAL_TOLERANCE: f64 = 1e-6;

/// `P(sup_{[0,1]} m > u)` for the Brownian meander `m`.
///
/// For `u ≥ 0.5` this is `2 Σ_{k≥1} (−1)^{k+1} e^{−k²u²/2}`. For smaller `u`
/// the alternating series converges slowly and cancels badly, so its Poisson
/// dual `1 − (2√(2π)/u) Σ_{j≥0} e^{−(2j+1)²π²/(2u²)}` is used instead.
pub fn meander_sup_tail(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u <= 0.0 {
        return 1.0;
    }
    if u.is_infinite() {
        return 0.0;
    }
    let value = if u >= MEANDER_SWITCH {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1.. {
            let k = f64::from(k);
            let term = (-0.5 * k * k * u * u).exp();
            sum += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    } else {
        let mut sum = 0.0;
        for j in 0.. {
            let odd = f64::from(2 * j + 1);
            let term = (-odd * odd * PI * PI / (2.0 * u * u)).exp();
            sum += term;
            if term < 1e-300 || term < 1e-17 * sum {
                break;
            }
        }
        1.0 - 2.0 * (2.0 * PI).sqrt() / u * sum
    };
    value.clamp(0.0, 1.0)
}

/// `ρ(c) = 2√c(1−e^{−√c})/sinh√c − 2(√c − log((e^{√c}+1)/2))`, rewritten as
/// `4s e^{−s}/(1+e^{−s}) + 2 log1p((e^{−s}−1)/2)` with `s = √c`.
pub fn rho_closed(c: f64) -> f64 {
    let s = c.sqrt();
    let q = (-s).exp();
    4.0 * s * q / (1.0 + q) + 2.0 * (0.5 * (-s).exp_m1()).ln_1p()
}

/// `ρ(c)` from its meander representation
/// `(cσ/√(2π)) ∫₀^∞ e^{−cσ²u/2} f(u) du` with
/// `f(u) = 2u^{−1/2} P(m̄₁ > 1/√(uσ²)) − ½ ∫_u^∞ y^{−3/2} P(m̄₁ > 1/√(yσ²)) dy`.
///
/// The inner integral is taken in the variable `t = 1/(σ√y)`, where it reads
/// `2σ ∫₀^{1/(σ√u)} P(m̄₁ > t) dt` and has a bounded integrand.
pub fn rho_integral(c: f64, sigma2: f64) -> Result<f64> {
    if !(c > 0.0 && sigma2 > 0.0 && c.is_finite() && sigma2.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "rho_integral needs c > 0 and σ² > 0, got ({c}, {sigma2})"
        )));
    }
    let sigma = sigma2.sqrt();
    let rate = 0.5 * c * sigma2;
    let prefactor = c * sigma / (2.0 * PI).sqrt();
    // |f| ≤ 2 + σ E[m̄₁] everywhere, so cutting at U_max leaves a tail below
    // prefactor·3·e^{−rate·U_max}/rate.
    let tail_cut = 1e-10;
    let u_max = ((prefactor * 3.0 / rate / tail_cut).max(1.0)).ln() / rate;
    let inner_tol = 1e-11;
    let mut failure = None;
    let integrand = |u: f64| {
        if u <= 0.0 {
            // f(0) = −σ ∫₀^∞ P(m̄₁ > t) dt
            return match integrate(meander_sup_tail, 0.0, 12.0, inner_tol, 400) {
                Ok(v) => -sigma * v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            };
        }
        let top = 1.0 / (sigma * u.sqrt());
        let inner = match integrate(meander_sup_tail, 0.0, top.min(12.0), inner_tol, 400) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        let f = 2.0 / u.sqrt() * meander_sup_tail(top) - sigma * inner;
        (-rate * u).exp() * f
    };
    let outer = integrate(integrand, 0.0, u_max, RHO_INTEGRAL_TOLERANCE / prefactor * 0.1, 4000)
        .map_err(|e| match e {
            Error::QuadratureFailure { estimate, .. } => Error::QuadratureFailure {
                tolerance: RHO_INTEGRAL_TOLERANCE,
                estimate: estimate * prefactor,
            },
            other => other,
        })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(prefactor * outer)
}

/// `c_β = 1 + √c − ρ(c)` with `c = (β−1)π²/4`; the limit in the early-indicator
/// family is `−c_β`. `c_β(1) = 1`.
pub fn c_beta(beta: f64) -> Result<f64> {
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::InvalidParams(format!("c_beta needs β ≥ 1, got {beta}")));
    }
    let c = (beta - 1.0) * PI * PI / 4.0;
    if c == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 + c.sqrt() - rho_closed(c))
}

/// Exponent `1 + √c − ρ(c)` of the Laplace bracket.
pub fn laplace_exponent(c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    1.0 + c.sqrt() - rho_closed(c)
}

/// `√c coth √c`, the exact exponent of `E[e^{−cσ²τ_r/(2ℓ²)} 1{τ_r ≤ τ^{B̄−B}_ℓ}]`
/// in units of `r/ℓ` for Brownian motion `B` with variance `σ²`.
pub fn brownian_laplace_exponent(c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    let s = c.sqrt();
    s / s.tanh()
}
