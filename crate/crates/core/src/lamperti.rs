//! Generalised Lamperti transform between stationary fields on uniform
//! lattices and multi-self-similar fields on their exponential images.

use serde::{Deserialize, Serialize};

use crate::analytics::TypeGLaw;
use crate::error::{invalid, Error, Result};
use crate::simulate::{FieldSample, LatticeKind};

/// Self-similarity index H = (H_1, …, H_d), every H_j > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MssIndex(Vec<f64>);

impl MssIndex {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() || h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid("every component of H must be positive"));
        }
        Ok(MssIndex(h))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.0.len() != d {
            return Err(Error::GridMismatch(format!("H has {} components, the field {d}", self.0.len())));
        }
        Ok(())
    }

    /// exp(H·x) = ∏ t_j^{H_j} at t = e^x.
    fn weight_log(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(h, v)| h * v).sum::<f64>().exp()
    }

    /// ∏ t_j^{p H_j}.
    fn power(&self, t: &[f64], p: f64) -> Result<f64> {
        self.check(t.len())?;
        positive(t)?;
        Ok(self.0.iter().zip(t).map(|(h, v)| v.powf(p * h)).product())
    }
}

fn positive(t: &[f64]) -> Result<()> {
    if t.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("coordinates must be positive: {t:?}")));
    }
    Ok(())
}

/// Y(t) = ∏ t_j^{H_j} X(log t) on the exponential image of X's lattice.
pub fn to_mss(x: &FieldSample, h: &MssIndex) -> Result<FieldSample> {
    if x.lattice != LatticeKind::Uniform {
        return Err(Error::GridMismatch("the source field must live on a uniform lattice".into()));
    }
    h.check(x.grid.dim())?;
    let values = x.values.iter().enumerate().map(|(i, v)| h.weight_log(&x.grid.coords(i)) * v).collect();
    Ok(FieldSample { values, lattice: LatticeKind::Exponential, hurst: Some(h.0.clone()), ..x.clone() })
}

/// X(x) = e^{-H·x} Y(e^x).
pub fn from_mss(y: &FieldSample, h: &MssIndex) -> Result<FieldSample> {
    if y.lattice != LatticeKind::Exponential {
        return Err(Error::GridMismatch("the field must live on an exponential lattice".into()));
    }
    h.check(y.grid.dim())?;
    let values = y.values.iter().enumerate().map(|(i, v)| v / h.weight_log(&y.grid.coords(i))).collect();
    Ok(FieldSample { values, lattice: LatticeKind::Uniform, hurst: None, ..y.clone() })
}

/// Cov(Y(t), Y(t*)) = exp(H·(log t + log t*)) R_X(log t - log t*).
pub fn mss_covariance<F: Fn(&[f64]) -> f64>(r_x: F, h: &MssIndex, t: &[f64], t_star: &[f64]) -> Result<f64> {
    h.check(t.len())?;
    h.check(t_star.len())?;
    positive(t)?;
    positive(t_star)?;
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ls: Vec<f64> = t_star.iter().map(|v| v.ln()).collect();
    let sum: Vec<f64> = lt.iter().zip(&ls).map(|(a, b)| a + b).collect();
    let diff: Vec<f64> = lt.iter().zip(&ls).map(|(a, b)| a - b).collect();
    Ok(h.weight_log(&sum) * r_x(&diff))
}

/// E e^{iθY(t)} = char_X(θ ∏ t_j^{H_j}).
pub fn mss_cf(law: &TypeGLaw, h: &MssIndex, t: &[f64], theta: f64) -> Result<f64> {
    law.char_x(theta * h.power(t, 1.0)?)
}

/// ½[∏t^{2H} + ∏s^{2H} - ∏|t - s|^{2H}] Var X(0).
pub fn stat_incr_covariance(h: &MssIndex, var_x0: f64, t: &[f64], s: &[f64]) -> Result<f64> {
    let a = h.power(t, 2.0)?;
    let b = h.power(s, 2.0)?;
    h.check(s.len())?;
    let c: f64 = h.0.iter().zip(t.iter().zip(s)).map(|(hj, (x, y))| (x - y).abs().powf(2.0 * hj)).product();
    Ok(0.5 * (a + b - c) * var_x0)
}

/// cosh(|h·H|) - 2^{2ΣH - 1} ∏ sinh^{2H_k}(|h_k|/2), evaluated as
/// ½[e^{-a} + e^{b}(expm1(a - b) - expm1(log Q))] with a = |h·H|,
/// b = Σ H_k|h_k| and Q = ∏(1 - e^{-|h_k|})^{2H_k}, which avoids the
/// cancellation of the two exponentially large terms.
pub fn rho_translation_invariant(h: &MssIndex, lag: &[f64]) -> Result<f64> {
    h.check(lag.len())?;
    let a = h.0.iter().zip(lag).map(|(hk, l)| hk * l).sum::<f64>().abs();
    let b: f64 = h.0.iter().zip(lag).map(|(hk, l)| hk * l.abs()).sum();
    let log_q: f64 = h.0.iter().zip(lag).map(|(hk, l)| 2.0 * hk * (-(-l.abs()).exp()).ln_1p()).sum();
    Ok(0.5 * ((-a).exp() + b.exp() * ((a - b).exp_m1() - log_q.exp_m1())))
}
