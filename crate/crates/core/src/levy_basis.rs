//! Homogeneous, factorisable Lévy bases: seed laws, cell-increment
//! samplers and the integrability conditions for deterministic integrands.

use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::special::{erf, erfc, exp_integral_e1};

const WEIGHT_TOL: f64 = 1e-12;

/// Probability measure over kernel parameters, as weighted atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingMeasure {
    Dirac { atom: Vec<f64> },
    Discrete { atoms: Vec<(Vec<f64>, f64)> },
    /// Nodes and weights of a quadrature rule approximating a density.
    Quadrature { nodes: Vec<(Vec<f64>, f64)> },
}

impl MixingMeasure {
    pub fn dirac(atom: Vec<f64>) -> Self {
        MixingMeasure::Dirac { atom }
    }

    pub fn discrete(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let m = MixingMeasure::Discrete { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn quadrature(nodes: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let m = MixingMeasure::Quadrature { nodes };
        m.validate()?;
        Ok(m)
    }

    /// Atoms with their probabilities.
    pub fn nodes(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            MixingMeasure::Dirac { atom } => vec![(atom.clone(), 1.0)],
            MixingMeasure::Discrete { atoms } => atoms.clone(),
            MixingMeasure::Quadrature { nodes } => nodes.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MixingMeasure::Dirac { .. } => 1,
            MixingMeasure::Discrete { atoms } => atoms.len(),
            MixingMeasure::Quadrature { nodes } => nodes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the parameter space.
    pub fn dim(&self) -> usize {
        self.nodes().first().map_or(0, |n| n.0.len())
    }

    pub fn validate(&self) -> Result<()> {
        let nodes = self.nodes();
        if nodes.is_empty() {
            return Err(invalid("mixing measure has no atoms"));
        }
        let k = nodes[0].0.len();
        let mut total = 0.0;
        for (x, w) in &nodes {
            if x.len() != k {
                return Err(invalid("mixing atoms have inconsistent dimension"));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(invalid("mixing atom is not finite"));
            }
            if !(*w > 0.0) || !w.is_finite() {
                return Err(invalid(format!("mixing weight {w} is not strictly positive")));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(invalid(format!("mixing weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Lévy measure of the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyFamily {
    None,
    /// ν(dw) = α e^{-λw}/w dw.
    Gamma { shape: f64, rate: f64 },
    /// ν(dw) = δ (2π)^{-1/2} w^{-3/2} e^{-γ²w/2} dw.
    InverseGaussian { delta: f64, gamma: f64 },
    /// ν = λ_p δ_c.
    CompoundPoisson { intensity: f64, jump: f64 },
}

impl LevyFamily {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let good = match *self {
            LevyFamily::None => true,
            LevyFamily::Gamma { shape, rate } => ok(shape) && ok(rate),
            LevyFamily::InverseGaussian { delta, gamma } => ok(delta) && ok(gamma),
            LevyFamily::CompoundPoisson { intensity, jump } => ok(intensity) && ok(jump),
        };
        if good {
            Ok(())
        } else {
            Err(invalid(format!("Lévy family parameters must be positive: {self:?}")))
        }
    }

    /// Supremum of the θ with finite ∫(e^{θw}-1)ν(dw); the endpoint itself
    /// is admissible when `closed` is true.
    fn theta_bound(&self) -> (f64, bool) {
        match *self {
            LevyFamily::Gamma { rate, .. } => (rate, false),
            LevyFamily::InverseGaussian { gamma, .. } => (0.5 * gamma * gamma, true),
            _ => (f64::INFINITY, false),
        }
    }

    /// ∫_0^r w ν(dw).
    pub fn truncated_mean(&self, r: f64) -> f64 {
        match *self {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => shape * (-(-rate * r).exp_m1()) / rate,
            LevyFamily::InverseGaussian { delta, gamma } => {
                delta / gamma * erf(gamma * (0.5 * r).sqrt())
            }
            LevyFamily::CompoundPoisson { intensity, jump } => {
                if jump <= r {
                    intensity * jump
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫_0^r w² ν(dw).
    pub fn truncated_second_moment(&self, r: f64) -> f64 {
        match *self {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => {
                let lr = rate * r;
                shape * (1.0 - (-lr).exp() * (1.0 + lr)) / (rate * rate)
            }
            LevyFamily::InverseGaussian { delta, gamma } => {
                if r.is_infinite() {
                    return delta / gamma.powi(3);
                }
                let a = 0.5 * gamma * gamma;
                let ar = a * r;
                let c = delta / (2.0 * std::f64::consts::PI).sqrt();
                c * a.powf(-1.5)
                    * (0.5 * std::f64::consts::PI.sqrt() * erf(ar.sqrt()) - ar.sqrt() * (-ar).exp())
            }
            LevyFamily::CompoundPoisson { intensity, jump } => {
                if jump <= r {
                    intensity * jump * jump
                } else {
                    0.0
                }
            }
        }
    }

    /// ν((r, ∞)).
    pub fn tail_mass(&self, r: f64) -> f64 {
        match *self {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => shape * exp_integral_e1(rate * r),
            LevyFamily::InverseGaussian { delta, gamma } => {
                if r.is_infinite() {
                    return 0.0;
                }
                let a = 0.5 * gamma * gamma;
                let c = delta / (2.0 * std::f64::consts::PI).sqrt();
                c * (2.0 * (-a * r).exp() / r.sqrt()
                    - 2.0 * (std::f64::consts::PI * a).sqrt() * erfc((a * r).sqrt()))
            }
            LevyFamily::CompoundPoisson { intensity, jump } => {
                if jump > r {
                    intensity
                } else {
                    0.0
                }
            }
        }
    }

    fn is_subordinator(&self) -> bool {
        !matches!(self, LevyFamily::None)
    }
}

/// Characteristic quadruplet of a homogeneous basis with Lebesgue control
/// (the mixing component lives with the kernel).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharQuadruplet {
    pub drift: f64,
    pub gaussian_var: f64,
    pub levy: LevyFamily,
}

impl CharQuadruplet {
    pub fn new(drift: f64, gaussian_var: f64, levy: LevyFamily) -> Result<Self> {
        let cq = CharQuadruplet { drift, gaussian_var, levy };
        cq.validate()?;
        Ok(cq)
    }

    /// Gaussian basis with variance `b` per unit control mass.
    pub fn gaussian(b: f64) -> Result<Self> {
        Self::new(0.0, b, LevyFamily::None)
    }

    /// Pure-jump subordinator basis. The drift is set so that
    /// δ = a - ∫_{w≤1} w ν(dw) vanishes.
    pub fn subordinator(levy: LevyFamily) -> Result<Self> {
        levy.validate()?;
        if !levy.is_subordinator() {
            return Err(invalid("a subordinator basis needs a Lévy family"));
        }
        Self::new(levy.truncated_mean(1.0), 0.0, levy)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.drift.is_finite() {
            return Err(invalid("drift must be finite"));
        }
        if !(self.gaussian_var >= 0.0) || !self.gaussian_var.is_finite() {
            return Err(invalid("Gaussian variance must be nonnegative"));
        }
        self.levy.validate()
    }

    /// True when the basis is a subordinator with zero effective drift.
    pub fn is_driftless_subordinator(&self) -> bool {
        self.levy.is_subordinator()
            && self.gaussian_var == 0.0
            && self.effective_drift().abs() <= 1e-12 * (1.0 + self.drift.abs())
    }

    /// δ = a - ∫_{|w|≤1} w ν(dw).
    pub fn effective_drift(&self) -> f64 {
        self.drift - self.levy.truncated_mean(1.0)
    }

    fn check_domain(&self, theta: f64, derivative: bool) -> Result<()> {
        if theta.is_nan() {
            return Err(Error::Domain("θ is NaN".into()));
        }
        let (bound, closed) = self.levy.theta_bound();
        let inside = theta < bound || (closed && !derivative && theta == bound);
        if inside {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "θ = {theta} outside the finiteness domain (bound {bound})"
            )))
        }
    }

    /// κ(θ) = ∫(e^{θw} - 1) ν(dw).
    pub fn seed_cumulant(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta, false)?;
        Ok(match self.levy {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => -shape * (-theta / rate).ln_1p(),
            LevyFamily::InverseGaussian { delta, gamma } => {
                // γ - √(γ²-2θ) = 2θ / (γ + √(γ²-2θ)), stable near θ = 0
                let root = (gamma * gamma - 2.0 * theta).max(0.0).sqrt();
                delta * 2.0 * theta / (gamma + root)
            }
            LevyFamily::CompoundPoisson { intensity, jump } => intensity * (theta * jump).exp_m1(),
        })
    }

    /// Full log moment generating function δθ + bθ²/2 + κ(θ).
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        Ok(self.effective_drift() * theta
            + 0.5 * self.gaussian_var * theta * theta
            + self.seed_cumulant(theta)?)
    }

    /// n-th derivative of `log_mgf` at θ, n ≥ 1.
    pub fn cumulant_derivative(&self, n: u32, theta: f64) -> Result<f64> {
        if n == 0 {
            return self.log_mgf(theta);
        }
        self.check_domain(theta, true)?;
        let jump = match self.levy {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => {
                let fact: f64 = (1..n).map(f64::from).product();
                shape * fact / (rate - theta).powi(n as i32)
            }
            LevyFamily::InverseGaussian { delta, gamma } => {
                let dfact: f64 = (1..n).map(|j| f64::from(2 * j - 1)).product();
                delta * dfact * (gamma * gamma - 2.0 * theta).powf(-(2.0 * f64::from(n) - 1.0) / 2.0)
            }
            LevyFamily::CompoundPoisson { intensity, jump } => {
                intensity * jump.powi(n as i32) * (theta * jump).exp()
            }
        };
        let extra = match n {
            1 => self.effective_drift() + self.gaussian_var * theta,
            2 => self.gaussian_var,
            _ => 0.0,
        };
        Ok(jump + extra)
    }

    /// Mean and variance of the basis mass of a unit cell.
    pub fn unit_moments(&self) -> (f64, f64) {
        (
            self.cumulant_derivative(1, 0.0).unwrap_or(f64::NAN),
            self.cumulant_derivative(2, 0.0).unwrap_or(f64::NAN),
        )
    }

    /// Draws the basis mass of a cell with control measure `cell_measure`.
    pub fn sample_cell_increment<R: Rng + ?Sized>(&self, cell_measure: f64, rng: &mut R) -> Result<f64> {
        if !(cell_measure >= 0.0) || !cell_measure.is_finite() {
            return Err(invalid(format!("cell measure {cell_measure} must be nonnegative")));
        }
        if cell_measure == 0.0 {
            return Ok(0.0);
        }
        let m = cell_measure;
        let mut value = self.effective_drift() * m;
        if self.gaussian_var > 0.0 {
            let n = Normal::new(0.0, (self.gaussian_var * m).sqrt())
                .map_err(|e| Error::Numerical(e.to_string()))?;
            value += n.sample(rng);
        }
        value += match self.levy {
            LevyFamily::None => 0.0,
            LevyFamily::Gamma { shape, rate } => Gamma::new(shape * m, 1.0 / rate)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng),
            LevyFamily::InverseGaussian { delta, gamma } => {
                let dm = delta * m;
                InverseGaussian::new(dm / gamma, dm * dm)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng)
            }
            LevyFamily::CompoundPoisson { intensity, jump } => {
                let n: f64 = Poisson::new(intensity * m)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng);
                jump * n
            }
        };
        Ok(value)
    }
}

/// Outcome of the numeric integrability check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub finite: bool,
    /// Compensated drift term, Gaussian term, truncated second-moment term.
    pub values: [f64; 3],
    /// The same terms on the grid dilated to twice its span.
    pub dilated_values: [f64; 3],
    /// For nonnegative integrands against subordinators: whether the
    /// two-term positive-kernel condition holds.
    pub subordinator_variant: Option<bool>,
}

/// Configuration of [`check_integrability`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityConfig {
    pub cap: f64,
    pub max_relative_change: f64,
}

impl Default for IntegrabilityConfig {
    fn default() -> Self {
        IntegrabilityConfig { cap: 1e12, max_relative_change: 0.1 }
    }
}

/// Riemann sums of the three integrability integrands for tabulated
/// samples of f on `grid`.
pub fn integrability_values(samples: &[f64], grid: &GridSpec, cq: &CharQuadruplet) -> Result<[f64; 3]> {
    if samples.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples for a grid of {} points",
            samples.len(),
            grid.len()
        )));
    }
    let dv = grid.cell_volume();
    let m1_unit = cq.levy.truncated_mean(1.0);
    let mut t = [0.0; 3];
    for &f in samples {
        let af = f.abs();
        if af == 0.0 {
            continue;
        }
        if !af.is_finite() {
            return Ok([f64::INFINITY; 3]);
        }
        let r = 1.0 / af;
        t[0] += af * (cq.drift + cq.levy.truncated_mean(r) - m1_unit).abs() * dv;
        t[1] += f * f * cq.gaussian_var * dv;
        t[2] += (f * f * cq.levy.truncated_second_moment(r) + cq.levy.tail_mass(r)) * dv;
    }
    Ok(t)
}

/// Checks the integrability of `f` with respect to the basis: the three
/// integrals are evaluated on `grid` and on its dilation, and the result is
/// finite when every value is below the cap and none moves by more than
/// the allowed relative change.
pub fn check_integrability<F: Fn(&[f64]) -> f64>(
    f: F,
    grid: &GridSpec,
    cq: &CharQuadruplet,
    config: IntegrabilityConfig,
) -> IntegrabilityReport {
    let tabulate = |g: &GridSpec| -> Vec<f64> { (0..g.len()).map(|i| f(&g.coords(i))).collect() };
    let base = tabulate(grid);
    let wide = grid.dilated();
    let values = integrability_values(&base, grid, cq).unwrap_or([f64::INFINITY; 3]);
    let dilated_values = integrability_values(&tabulate(&wide), &wide, cq).unwrap_or([f64::INFINITY; 3]);

    let stable = |a: f64, b: f64| {
        a.is_finite()
            && b.is_finite()
            && a < config.cap
            && b < config.cap
            && (b - a).abs() <= config.max_relative_change * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    };
    let ok: Vec<bool> = (0..3).map(|i| stable(values[i], dilated_values[i]) || values[i] == dilated_values[i] && values[i] == 0.0).collect();
    let subordinator_variant = (cq.levy.is_subordinator() && base.iter().all(|v| *v >= 0.0)).then(|| ok[0] && ok[2]);
    IntegrabilityReport { finite: ok.iter().all(|b| *b), values, dilated_values, subordinator_variant }
}
