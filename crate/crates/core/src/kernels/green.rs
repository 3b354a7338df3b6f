//! Green's functions of the parabolic, elliptic and hyperbolic operators and
//! the correlation functions of the moving averages they generate.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate_to_infinity;
use crate::special::{bessel_j0, bessel_k0, bessel_k1, ln_erfc};

/// -1/(2γ√(πz₂)) exp(-αz₁ - βz₂ - z₁²γ²/(4z₂)) for z₂ > 0, else 0.
pub fn parabolic(alpha: f64, beta: f64, gamma: f64, z1: f64, z2: f64) -> f64 {
    if z2 <= 0.0 {
        return 0.0;
    }
    let expo = -alpha * z1 - beta * z2 - z1 * z1 * gamma * gamma / (4.0 * z2);
    -expo.exp() / (2.0 * gamma * (PI * z2).sqrt())
}

/// e^{αz₁} K₀(γr) / (2π); infinite at the origin.
pub fn elliptic(alpha: f64, gamma: f64, z1: f64, z2: f64) -> f64 {
    let r = z1.hypot(z2);
    (alpha * z1).exp() * bessel_k0(gamma * r) / (2.0 * PI)
}

/// e^{-αz₁-βz₂} J₀(2γ√(z₁z₂)) on the closed first quadrant.
pub fn hyperbolic(alpha: f64, beta: f64, gamma: f64, z1: f64, z2: f64) -> f64 {
    if z1 < 0.0 || z2 < 0.0 {
        return 0.0;
    }
    let j = if gamma == 0.0 { 1.0 } else { bessel_j0(2.0 * gamma * (z1 * z2).sqrt()) };
    (-alpha * z1 - beta * z2).exp() * j
}

/// Correlation of the parabolic moving average at lag (z₁, z₂).
pub fn parabolic_correlation(alpha: f64, beta: f64, gamma: f64, z1: f64, z2: f64) -> f64 {
    let c = beta - alpha * alpha / (gamma * gamma);
    if z2 == 0.0 {
        return (-gamma * c.sqrt() * z1.abs()).exp();
    }
    let (z1, z2) = if z2 < 0.0 { (-z1, -z2) } else { (z1, z2) };
    let a = gamma / (2.0 * z2.sqrt()) * (z1 + 2.0 * alpha * z2 / (gamma * gamma));
    let b = (z2 * c).sqrt();
    let half = 0.5f64.ln();
    let t1 = -2.0 * a * b + half + ln_erfc(b - a);
    let t2 = 2.0 * a * b + half + ln_erfc(a + b);
    t1.exp() + t2.exp()
}

/// Correlation of the elliptic moving average at lag (z₁, z₂).
pub fn elliptic_correlation(alpha: f64, gamma: f64, z1: f64, z2: f64) -> Result<f64> {
    let r = z1.hypot(z2);
    if r == 0.0 {
        return Ok(1.0);
    }
    if alpha == 0.0 {
        return Ok(gamma * r * bessel_k1(gamma * r));
    }
    let norm = (gamma * gamma - alpha * alpha).sqrt() / (alpha / gamma).asin();
    let lower = z1.abs();
    let f = |tau: f64| {
        let v = (alpha * tau).sinh() * bessel_k0(gamma * tau.hypot(z2));
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // The τ = 0 endpoint is a removable singularity when z₂ = 0: sinh(ατ)
    // vanishes linearly against the logarithm of K₀.
    let integral = integrate_to_infinity(f, lower, 1e-14, 1e-11)?;
    Ok(norm * integral)
}

/// Correlation of the hyperbolic moving average; closed form only for γ = 0.
pub fn hyperbolic_correlation(alpha: f64, beta: f64, gamma: f64, z1: f64, z2: f64) -> Result<f64> {
    if gamma != 0.0 {
        return Err(Error::Domain(
            "hyperbolic correlation is only available in closed form for γ = 0".into(),
        ));
    }
    Ok((-alpha * z1.abs() - beta * z2.abs()).exp())
}
