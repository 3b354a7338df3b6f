//! Weight functions g(x, z) and h(y, z), their lattice tabulations, the
//! mixed square g̃ and the convolution k = g̃ * h.

pub mod green;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{box_points, strides, GridSpec};
use crate::levy_basis::MixingMeasure;

/// Relative tail mass left outside a truncated lattice kernel.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-8;

/// Share of a convolution carried by boundary cells above which the grid
/// is reported as too small.
pub const BOUNDARY_WARNING: f64 = 1e-6;

const MAX_LATTICE_POINTS: usize = 1 << 24;
const SUBCELLS: usize = 8;
const SNAP: f64 = 1e-9;

/// Parameter of a Green's function replaced by the mixing atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenParam {
    Alpha,
    Beta,
    Gamma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    /// e^{-x z} on z ≥ 0, d = 1; the mixing atom is the rate x.
    SupOu,
    /// Indicator of the box (lower, upper], scaled by the mixing atom if
    /// one is given.
    Trawl { lower: Vec<f64>, upper: Vec<f64> },
    ParabolicGreen {
        alpha: f64,
        beta: f64,
        gamma: f64,
        #[serde(default)]
        randomized: Option<GreenParam>,
    },
    EllipticGreen {
        alpha: f64,
        gamma: f64,
        #[serde(default)]
        randomized: Option<GreenParam>,
    },
    HyperbolicGreen {
        alpha: f64,
        beta: f64,
        gamma: f64,
        #[serde(default)]
        randomized: Option<GreenParam>,
    },
    /// Multilinear interpolation of node values, zero outside the grid.
    Tabulated { grid: GridSpec, values: Vec<f64> },
}

/// Where a kernel can be nonzero.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    /// z_axis ≥ 0.
    HalfSpace(usize),
    /// Every coordinate ≥ 0.
    Quadrant,
    Whole,
    Bounded { lower: Vec<f64>, upper: Vec<f64> },
}

/// What a truncation should preserve: Σ p g² for field kernels, Σ p |h|
/// for volatility kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mass {
    Squared,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub family: KernelFamily,
    pub mixing: MixingMeasure,
}

#[derive(Clone, Copy, Debug)]
struct Green3 {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

fn resolve(alpha: f64, beta: f64, gamma: f64, randomized: Option<GreenParam>, x: &[f64]) -> Green3 {
    let mut p = Green3 { alpha, beta, gamma };
    match randomized {
        Some(GreenParam::Alpha) => p.alpha = x[0],
        Some(GreenParam::Beta) => p.beta = x[0],
        Some(GreenParam::Gamma) => p.gamma = x[0],
        None => {}
    }
    p
}

impl KernelFamily {
    /// Dimension of the lag space.
    pub fn dim(&self) -> usize {
        match self {
            KernelFamily::SupOu => 1,
            KernelFamily::Trawl { lower, .. } => lower.len(),
            KernelFamily::ParabolicGreen { .. }
            | KernelFamily::EllipticGreen { .. }
            | KernelFamily::HyperbolicGreen { .. } => 2,
            KernelFamily::Tabulated { grid, .. } => grid.dim(),
        }
    }

    fn param_dims(&self) -> &'static [usize] {
        match self {
            KernelFamily::SupOu => &[1],
            KernelFamily::Trawl { .. } => &[0, 1],
            KernelFamily::ParabolicGreen { randomized, .. }
            | KernelFamily::EllipticGreen { randomized, .. }
            | KernelFamily::HyperbolicGreen { randomized, .. } => {
                if randomized.is_some() {
                    &[1]
                } else {
                    &[0]
                }
            }
            KernelFamily::Tabulated { .. } => &[0],
        }
    }

    fn check_params(&self, x: &[f64]) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            KernelFamily::SupOu => {
                if !pos(x[0]) {
                    return Err(invalid(format!("supOU rate must be positive, got {}", x[0])));
                }
            }
            KernelFamily::Trawl { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(invalid("trawl bounds must have equal, nonzero length"));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(invalid("trawl region needs lower < upper on every axis"));
                }
                if let Some(&s) = x.first() {
                    if !pos(s) {
                        return Err(invalid("trawl scale must be positive"));
                    }
                }
            }
            KernelFamily::ParabolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, x);
                if !(p.gamma > 0.0) || !(p.alpha * p.alpha < p.beta * p.gamma * p.gamma) || !(p.alpha >= 0.0) {
                    return Err(invalid(format!("parabolic kernel needs 0 ≤ α² < βγ², γ > 0: {p:?}")));
                }
            }
            KernelFamily::EllipticGreen { alpha, gamma, randomized } => {
                if matches!(randomized, Some(GreenParam::Beta)) {
                    return Err(invalid("elliptic kernel has no β parameter"));
                }
                let p = resolve(*alpha, 0.0, *gamma, *randomized, x);
                if !(0.0 <= p.alpha && p.alpha < p.gamma) {
                    return Err(invalid(format!("elliptic kernel needs 0 ≤ α < γ: {p:?}")));
                }
            }
            KernelFamily::HyperbolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, x);
                if !pos(p.alpha) || !pos(p.beta) || !(p.gamma >= 0.0) {
                    return Err(invalid(format!("hyperbolic kernel needs α, β > 0, γ ≥ 0: {p:?}")));
                }
            }
            KernelFamily::Tabulated { grid, values } => {
                if values.len() != grid.len() {
                    return Err(invalid("tabulated kernel values do not match its grid"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("tabulated kernel has non-finite values"));
                }
            }
        }
        Ok(())
    }

    fn singular_at_origin(&self) -> bool {
        matches!(self, KernelFamily::ParabolicGreen { .. } | KernelFamily::EllipticGreen { .. })
    }

    fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            KernelFamily::SupOu => {
                if z[0] >= 0.0 {
                    (-x[0] * z[0]).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::Trawl { lower, upper } => {
                let s = x.first().copied().unwrap_or(1.0);
                let inside = z.iter().zip(lower.iter().zip(upper)).all(|(&v, (&l, &u))| l * s < v && v <= u * s);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::ParabolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, x);
                green::parabolic(p.alpha, p.beta, p.gamma, z[0], z[1])
            }
            KernelFamily::EllipticGreen { alpha, gamma, randomized } => {
                let p = resolve(*alpha, 0.0, *gamma, *randomized, x);
                green::elliptic(p.alpha, p.gamma, z[0], z[1])
            }
            KernelFamily::HyperbolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, x);
                green::hyperbolic(p.alpha, p.beta, p.gamma, z[0], z[1])
            }
            KernelFamily::Tabulated { grid, values } => interpolate(grid, values, z),
        }
    }

    fn support(&self, mixing: &MixingMeasure) -> Support {
        match self {
            KernelFamily::SupOu => Support::HalfSpace(0),
            KernelFamily::ParabolicGreen { .. } => Support::HalfSpace(1),
            KernelFamily::EllipticGreen { .. } => Support::Whole,
            KernelFamily::HyperbolicGreen { .. } => Support::Quadrant,
            KernelFamily::Trawl { lower, upper } => {
                let scales: Vec<f64> = mixing.nodes().iter().map(|(x, _)| x.first().copied().unwrap_or(1.0)).collect();
                let smax = scales.iter().cloned().fold(0.0, f64::max);
                Support::Bounded {
                    lower: lower.iter().map(|l| (l * smax).min(0.0).min(*l * smax)).collect(),
                    upper: upper.iter().map(|u| (u * smax).max(0.0).max(*u * smax)).collect(),
                }
            }
            KernelFamily::Tabulated { grid, .. } => Support::Bounded {
                lower: grid.axes.iter().map(|a| a.origin).collect(),
                upper: grid.axes.iter().map(|a| a.last()).collect(),
            },
        }
    }
}

fn interpolate(grid: &GridSpec, values: &[f64], z: &[f64]) -> f64 {
    let d = grid.dim();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for (j, a) in grid.axes.iter().enumerate() {
        let mut r = (z[j] - a.origin) / a.step;
        let top = (a.count - 1) as f64;
        if r < -SNAP || r > top + SNAP {
            return 0.0;
        }
        r = r.clamp(0.0, top);
        let i = (r.floor() as usize).min(a.count.saturating_sub(2));
        base[j] = i;
        frac[j] = if a.count == 1 { 0.0 } else { r - i as f64 };
    }
    let st = grid.strides();
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0;
        for j in 0..d {
            let up = (corner >> j) & 1 == 1;
            if up && grid.axes[j].count == 1 {
                w = 0.0;
                break;
            }
            w *= if up { frac[j] } else { 1.0 - frac[j] };
            flat += (base[j] + usize::from(up)) * st[j];
        }
        if w != 0.0 {
            acc += w * values[flat];
        }
    }
    acc
}

/// Values on an integer lag box `bounds` (inclusive), row-major, with lag
/// m standing for the point m·steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagTable {
    pub steps: Vec<f64>,
    pub bounds: Vec<(i64, i64)>,
    pub values: Vec<f64>,
}

impl LagTable {
    pub fn zeros(steps: Vec<f64>, bounds: Vec<(i64, i64)>) -> Self {
        let n = bounds.iter().map(|&(l, h)| (h - l + 1) as usize).product();
        LagTable { steps, bounds, values: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bounds.iter().map(|&(l, h)| (h - l + 1) as usize).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.steps.iter().product()
    }

    pub fn index(&self, lag: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let m = lag[j];
            if m < lo || m > hi {
                return None;
            }
            flat = flat * (hi - lo + 1) as usize + (m - lo) as usize;
        }
        Some(flat)
    }

    /// Value at an integer lag, zero outside the box.
    pub fn get(&self, lag: &[i64]) -> f64 {
        self.index(lag).map_or(0.0, |i| self.values[i])
    }

    pub fn lag_of(&self, mut flat: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            let (lo, hi) = self.bounds[j];
            let n = (hi - lo + 1) as usize;
            out[j] = lo + (flat % n) as i64;
            flat /= n;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        box_points(&self.bounds).zip(self.values.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Riemann convolution (self * other)(m) = Σ_n self(m-n) other(n) ΔV.
    pub fn convolve(&self, other: &LagTable) -> LagTable {
        let bounds: Vec<(i64, i64)> =
            self.bounds.iter().zip(&other.bounds).map(|(a, b)| (a.0 + b.0, a.1 + b.1)).collect();
        let mut out = LagTable::zeros(self.steps.clone(), bounds);
        let dv = self.cell_volume();
        let out_strides = strides(&out.counts());
        let other_lags: Vec<(Vec<i64>, f64)> = other.iter().filter(|(_, v)| *v != 0.0).collect();
        for (a, va) in self.iter() {
            if va == 0.0 {
                continue;
            }
            for (b, vb) in &other_lags {
                let mut flat = 0;
                for j in 0..a.len() {
                    flat += (a[j] + b[j] - out.bounds[j].0) as usize * out_strides[j];
                }
                out.values[flat] += va * vb * dv;
            }
        }
        out
    }
}

/// Lattice tabulation of a kernel for every mixing node on a common lag
/// box.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelLattice {
    pub steps: Vec<f64>,
    pub bounds: Vec<(i64, i64)>,
    /// (probability, table) per mixing node.
    pub nodes: Vec<(f64, LagTable)>,
}

impl KernelLattice {
    /// Σ p g(x, ·)² on the lattice.
    pub fn g_tilde(&self) -> LagTable {
        let mut out = LagTable::zeros(self.steps.clone(), self.bounds.clone());
        for (p, t) in &self.nodes {
            for (o, v) in out.values.iter_mut().zip(&t.values) {
                *o += p * v * v;
            }
        }
        out
    }

    /// Σ p |h(y, ·)| on the lattice.
    pub fn mixed_abs(&self) -> LagTable {
        let mut out = LagTable::zeros(self.steps.clone(), self.bounds.clone());
        for (p, t) in &self.nodes {
            for (o, v) in out.values.iter_mut().zip(&t.values) {
                *o += p * v.abs();
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.nodes.iter().all(|(_, t)| t.values.iter().all(|v| *v == 0.0))
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, mixing: MixingMeasure) -> Result<Self> {
        let k = Kernel { family, mixing };
        k.validate()?;
        Ok(k)
    }

    /// Kernel without parameter randomisation.
    pub fn fixed(family: KernelFamily) -> Result<Self> {
        Self::new(family, MixingMeasure::dirac(vec![]))
    }

    pub fn sup_ou(rate: f64) -> Result<Self> {
        Self::new(KernelFamily::SupOu, MixingMeasure::dirac(vec![rate]))
    }

    pub fn validate(&self) -> Result<()> {
        self.mixing.validate()?;
        let k = self.mixing.dim();
        if !self.family.param_dims().contains(&k) {
            return Err(invalid(format!(
                "mixing atoms have dimension {k}, kernel expects one of {:?}",
                self.family.param_dims()
            )));
        }
        for (x, _) in self.mixing.nodes() {
            self.family.check_params(&x)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn support(&self) -> Support {
        self.family.support(&self.mixing)
    }

    /// g(x, z); zero outside the support.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        self.family.eval(x, z)
    }

    /// g̃(z) = Σ p g(x, z)².
    pub fn g_tilde(&self, z: &[f64]) -> f64 {
        self.mixing.nodes().iter().map(|(x, p)| p * self.eval(x, z).powi(2)).sum()
    }

    /// Σ p |g(x, z)|.
    pub fn mixed_abs(&self, z: &[f64]) -> f64 {
        self.mixing.nodes().iter().map(|(x, p)| p * self.eval(x, z).abs()).sum()
    }

    /// Continuous correlation of the moving average with this kernel, for
    /// the families where it is known in closed form.
    pub fn closed_form_correlation(&self, z: &[f64]) -> Result<f64> {
        let nodes = self.mixing.nodes();
        let single = |what: &str| -> Result<Vec<f64>> {
            if nodes.len() != 1 {
                return Err(Error::Domain(format!("{what} correlation needs a single mixing atom")));
            }
            Ok(nodes[0].0.clone())
        };
        match &self.family {
            KernelFamily::SupOu => {
                // Σ p e^{-x|h|}/(2x) normalised by Σ p/(2x)
                let num: f64 = nodes.iter().map(|(x, p)| p * (-x[0] * z[0].abs()).exp() / (2.0 * x[0])).sum();
                let den: f64 = nodes.iter().map(|(x, p)| p / (2.0 * x[0])).sum();
                Ok(num / den)
            }
            KernelFamily::ParabolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, &single("parabolic")?);
                Ok(green::parabolic_correlation(p.alpha, p.beta, p.gamma, z[0], z[1]))
            }
            KernelFamily::EllipticGreen { alpha, gamma, randomized } => {
                let p = resolve(*alpha, 0.0, *gamma, *randomized, &single("elliptic")?);
                green::elliptic_correlation(p.alpha, p.gamma, z[0], z[1])
            }
            KernelFamily::HyperbolicGreen { alpha, beta, gamma, randomized } => {
                let p = resolve(*alpha, *beta, *gamma, *randomized, &single("hyperbolic")?);
                green::hyperbolic_correlation(p.alpha, p.beta, p.gamma, z[0], z[1])
            }
            _ => Err(Error::Domain("no closed-form correlation for this kernel family".into())),
        }
    }

    // Value at z, or the average over the sub-cells of the cell of size
    // `steps` centred on z where the kernel is singular.
    fn cell_value(&self, x: &[f64], z: &[f64], steps: &[f64]) -> f64 {
        if let KernelFamily::Trawl { lower, upper } = &self.family {
            let s = x.first().copied().unwrap_or(1.0);
            let inside = z.iter().enumerate().all(|(j, &v)| {
                let snap = SNAP * steps[j];
                v > lower[j] * s + snap && v <= upper[j] * s + snap
            });
            return if inside { 1.0 } else { 0.0 };
        }
        let v = self.eval(x, z);
        let at_origin = z.iter().zip(steps).all(|(v, s)| v.abs() < SNAP * s);
        if v.is_finite() && !(at_origin && self.family.singular_at_origin()) {
            return v;
        }
        let d = z.len();
        let n = SUBCELLS.pow(d as u32);
        let mut acc = 0.0;
        let mut pt = vec![0.0; d];
        for k in 0..n {
            let mut r = k;
            for j in 0..d {
                let i = r % SUBCELLS;
                r /= SUBCELLS;
                pt[j] = z[j] + ((i as f64 + 0.5) / SUBCELLS as f64 - 0.5) * steps[j];
            }
            acc += self.eval(x, &pt);
        }
        acc / n as f64
    }

    fn lattice_value(&self, x: &[f64], lag: &[i64], steps: &[f64]) -> f64 {
        let z: Vec<f64> = lag.iter().zip(steps).map(|(&m, s)| m as f64 * s).collect();
        self.cell_value(x, &z, steps)
    }

    /// Kernel values on the nodes of `grid`, one table per mixing node.
    pub fn sample_on(&self, grid: &GridSpec) -> Vec<Vec<f64>> {
        let steps = grid.steps();
        self.mixing
            .nodes()
            .iter()
            .map(|(x, _)| (0..grid.len()).map(|i| self.cell_value(x, &grid.coords(i), &steps)).collect())
            .collect()
    }

    fn tabulate(&self, steps: &[f64], bounds: &[(i64, i64)]) -> Result<KernelLattice> {
        let n: usize = bounds.iter().map(|&(l, h)| (h - l + 1) as usize).product();
        if n > MAX_LATTICE_POINTS {
            return Err(Error::Numerical(format!(
                "kernel lattice of {n} points exceeds the limit; the kernel decays too slowly for these steps"
            )));
        }
        let nodes = self
            .mixing
            .nodes()
            .into_iter()
            .map(|(x, p)| {
                let values = box_points(bounds).map(|lag| self.lattice_value(&x, &lag, steps)).collect();
                (p, LagTable { steps: steps.to_vec(), bounds: bounds.to_vec(), values })
            })
            .collect();
        Ok(KernelLattice { steps: steps.to_vec(), bounds: bounds.to_vec(), nodes })
    }

    /// Tabulates the kernel on the lattice with the given steps, truncated
    /// to the smallest box that keeps all but `tol` of its mass.
    pub fn lattice(&self, steps: &[f64], mass: Mass, tol: f64) -> Result<KernelLattice> {
        if steps.len() != self.dim() {
            return Err(Error::GridMismatch(format!(
                "kernel has dimension {}, lattice {}",
                self.dim(),
                steps.len()
            )));
        }
        if steps.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("lattice steps must be positive"));
        }
        let d = steps.len();
        let mass_table = |lat: &KernelLattice| match mass {
            Mass::Squared => lat.g_tilde(),
            Mass::Absolute => lat.mixed_abs(),
        };
        let full = match self.support() {
            Support::Bounded { lower, upper } => {
                let bounds: Vec<(i64, i64)> = (0..d)
                    .map(|j| {
                        let lo = (lower[j] / steps[j] - SNAP).floor() as i64;
                        let hi = (upper[j] / steps[j] + SNAP).ceil() as i64;
                        (lo.min(0), hi.max(0))
                    })
                    .collect();
                self.tabulate(steps, &bounds)?
            }
            support => {
                let box_for = |radius: f64| -> Vec<(i64, i64)> {
                    (0..d)
                        .map(|j| {
                            let n = ((radius / steps[j]).ceil() as i64).max(2);
                            let nonneg = match support {
                                Support::HalfSpace(a) => a == j,
                                Support::Quadrant => true,
                                _ => false,
                            };
                            (if nonneg { 0 } else { -n }, n)
                        })
                        .collect()
                };
                let mut radius = 1.0;
                loop {
                    let outer = box_for(2.0 * radius);
                    let inner = box_for(radius);
                    let lat = self.tabulate(steps, &outer)?;
                    let m = mass_table(&lat);
                    let total = m.sum();
                    let core: f64 = m
                        .iter()
                        .filter(|(lag, _)| lag.iter().zip(&inner).all(|(v, b)| *v >= b.0 && *v <= b.1))
                        .map(|(_, v)| v)
                        .sum();
                    if !total.is_finite() {
                        return Err(Error::Numerical("kernel mass is not finite on the lattice".into()));
                    }
                    if total - core <= tol * total {
                        break lat;
                    }
                    radius *= 2.0;
                }
            }
        };
        let m = mass_table(&full);
        let total = m.sum();
        if total == 0.0 {
            return self.tabulate(steps, &vec![(0, 0); d]);
        }
        // Trim each face while the removed slabs stay within budget.
        let budget = tol * total / (2.0 * d as f64);
        let mut bounds = full.bounds.clone();
        for j in 0..d {
            let (lo, hi) = full.bounds[j];
            let mut slab = vec![0.0; (hi - lo + 1) as usize];
            for (lag, v) in m.iter() {
                slab[(lag[j] - lo) as usize] += v;
            }
            let mut removed = 0.0;
            let mut new_lo = lo;
            while new_lo < 0 && removed + slab[(new_lo - lo) as usize] <= budget {
                removed += slab[(new_lo - lo) as usize];
                new_lo += 1;
            }
            let mut removed = 0.0;
            let mut new_hi = hi;
            while new_hi > 0 && removed + slab[(new_hi - lo) as usize] <= budget {
                removed += slab[(new_hi - lo) as usize];
                new_hi -= 1;
            }
            bounds[j] = (new_lo, new_hi);
        }
        Ok(restrict(&full, &bounds))
    }
}

fn restrict(lat: &KernelLattice, bounds: &[(i64, i64)]) -> KernelLattice {
    let nodes = lat
        .nodes
        .iter()
        .map(|(p, t)| {
            let values = box_points(bounds).map(|lag| t.get(&lag)).collect();
            (*p, LagTable { steps: t.steps.clone(), bounds: bounds.to_vec(), values })
        })
        .collect();
    KernelLattice { steps: lat.steps.clone(), bounds: bounds.to_vec(), nodes }
}

/// Lattice kernels k(y, ·) = g̃ * h(y, ·), one per mixing node of h, with
/// the node probabilities.
pub fn k_tables(g: &KernelLattice, h: &KernelLattice) -> Vec<(f64, LagTable)> {
    let gt = g.g_tilde();
    h.nodes.iter().map(|(p, t)| (*p, gt.convolve(t))).collect()
}

/// A Riemann-sum convolution value with its truncation diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convolution {
    pub value: f64,
    /// Size of the sum over the layer of cells just outside the grid,
    /// relative to the value.
    pub boundary_fraction: f64,
    pub truncation_warning: bool,
}

/// k(y, z) = Σ_u g̃(z - u) h(y, u) ΔV over the cells u of `grid`.
pub fn convolve_k(g: &Kernel, h: &Kernel, y: &[f64], z: &[f64], grid: &GridSpec) -> Result<Convolution> {
    let d = grid.dim();
    if g.dim() != d || h.dim() != d || z.len() != d {
        return Err(Error::GridMismatch("kernel, lag and grid dimensions differ".into()));
    }
    let dv = grid.cell_volume();
    let counts = grid.counts();
    let term = |u: &[f64]| {
        let hv = h.eval(y, u);
        if hv == 0.0 {
            return 0.0;
        }
        let shifted: Vec<f64> = z.iter().zip(u).map(|(a, b)| a - b).collect();
        g.g_tilde(&shifted) * hv * dv
    };
    let mut total = 0.0;
    let mut outside = 0.0;
    // Walk the grid padded by one cell; padding cells measure what the grid
    // cuts off.
    let padded: Vec<(i64, i64)> = counts.iter().map(|&c| (-1, c as i64)).collect();
    for idx in box_points(&padded) {
        let u: Vec<f64> = idx.iter().zip(&grid.axes).map(|(&i, a)| a.origin + i as f64 * a.step).collect();
        let inside = idx.iter().zip(&counts).all(|(&i, &c)| i >= 0 && (i as usize) < c);
        let t = term(&u);
        if inside {
            total += t;
        } else {
            outside += t.abs();
        }
    }
    let boundary_fraction = if total == 0.0 {
        if outside == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        outside / total.abs()
    };
    Ok(Convolution { value: total, boundary_fraction, truncation_warning: boundary_fraction > BOUNDARY_WARNING })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_h() -> Kernel {
        Kernel::sup_ou(1.0).unwrap()
    }

    #[test]
    fn eval_and_g_tilde_examples() {
        let g = Kernel::sup_ou(1.0).unwrap();
        assert_eq!(g.eval(&[1.0], &[-0.5]), 0.0);
        assert!((g.g_tilde(&[1.0]) - (-2.0f64).exp()).abs() < 1e-15);
        let mixed = Kernel::new(
            KernelFamily::SupOu,
            MixingMeasure::discrete(vec![(vec![1.0], 0.5), (vec![2.0], 0.5)]).unwrap(),
        )
        .unwrap();
        assert_eq!(mixed.g_tilde(&[0.0]), 1.0);
        assert_eq!(mixed.g_tilde(&[-3.0]), 0.0);
    }

    #[test]
    fn parameter_constraints() {
        let bad = KernelFamily::ParabolicGreen { alpha: 2.0, beta: 1.0, gamma: 1.0, randomized: None };
        assert!(Kernel::fixed(bad).is_err());
        let bad = KernelFamily::EllipticGreen { alpha: 1.0, gamma: 1.0, randomized: None };
        assert!(Kernel::fixed(bad).is_err());
        let bad = KernelFamily::HyperbolicGreen { alpha: 0.0, beta: 1.0, gamma: 0.0, randomized: None };
        assert!(Kernel::fixed(bad).is_err());
        assert!(Kernel::sup_ou(-1.0).is_err());
        // randomised γ must respect the constraint at every atom
        let fam = KernelFamily::EllipticGreen { alpha: 0.5, gamma: 1.0, randomized: Some(GreenParam::Gamma) };
        let ok = MixingMeasure::discrete(vec![(vec![1.0], 0.5), (vec![2.0], 0.5)]).unwrap();
        let bad = MixingMeasure::discrete(vec![(vec![0.4], 0.5), (vec![2.0], 0.5)]).unwrap();
        assert!(Kernel::new(fam.clone(), ok).is_ok());
        assert!(Kernel::new(fam, bad).is_err());
    }

    #[test]
    fn green_kernels_vanish_outside_support() {
        let h = Kernel::fixed(KernelFamily::HyperbolicGreen { alpha: 1.0, beta: 1.0, gamma: 0.7, randomized: None }).unwrap();
        let p = Kernel::fixed(KernelFamily::ParabolicGreen { alpha: 0.2, beta: 1.0, gamma: 1.0, randomized: None }).unwrap();
        for i in 0..50 {
            let a = -3.0 + 0.13 * i as f64;
            assert_eq!(h.eval(&[], &[a, -0.01]), 0.0);
            assert_eq!(h.eval(&[], &[-0.01, a]), 0.0);
            assert_eq!(p.eval(&[], &[a, -0.01 * i as f64]), 0.0);
        }
    }

    #[test]
    fn convolution_matches_closed_form() {
        let grid = GridSpec::uniform(1, 0.0, 0.002, 10_001).unwrap();
        let g = Kernel::sup_ou(1.0).unwrap();
        let h = exp_h();
        for &z in &[0.3, 2f64.ln(), 1.0, 3.0] {
            let c = convolve_k(&g, &h, &[1.0], &[z], &grid).unwrap();
            let exact = (-z).exp() - (-2.0 * z).exp();
            assert!((c.value - exact).abs() < 2e-3, "z={z}: {} vs {exact}", c.value);
            assert!(!c.truncation_warning);
        }
        let short = GridSpec::uniform(1, 0.0, 0.01, 100).unwrap();
        assert!(convolve_k(&g, &h, &[1.0], &[1.5], &short).unwrap().truncation_warning);
        assert!(!convolve_k(&g, &h, &[1.0], &[0.5], &short).unwrap().truncation_warning);
    }

    #[test]
    fn convolution_argmax_at_ln2() {
        let step = 0.01;
        let g = Kernel::sup_ou(1.0).unwrap();
        let h = exp_h();
        let grid = GridSpec::uniform(1, 0.0005, 0.001, 20_000).unwrap();
        let (best, _) = (30..120)
            .map(|m| (m, convolve_k(&g, &h, &[1.0], &[m as f64 * step], &grid).unwrap().value))
            .fold((0, f64::MIN), |acc, (m, v)| if v > acc.1 { (m, v) } else { acc });
        assert!((best as f64 * step - 2f64.ln()).abs() <= step, "{best}");
    }

    #[test]
    fn zero_h_gives_zero_k() {
        let grid = GridSpec::uniform(1, -5.0, 0.1, 101).unwrap();
        let zero = Kernel::fixed(KernelFamily::Tabulated { grid: grid.clone(), values: vec![0.0; 101] }).unwrap();
        let g = Kernel::sup_ou(1.0).unwrap();
        for &z in &[-1.0, 0.0, 2.0] {
            assert_eq!(convolve_k(&g, &zero, &[], &[z], &grid).unwrap().value, 0.0);
        }
        let lat = zero.lattice(&[0.1], Mass::Absolute, 1e-8).unwrap();
        assert!(lat.is_zero());
    }

    #[test]
    fn convolution_refinement_converges() {
        let g = Kernel::sup_ou(1.0).unwrap();
        let h = exp_h();
        let coarse = GridSpec::uniform(1, 0.0, 0.004, 5001).unwrap();
        let fine = GridSpec::uniform(1, 0.0, 0.002, 10_001).unwrap();
        let a = convolve_k(&g, &h, &[1.0], &[1.0], &coarse).unwrap().value;
        let b = convolve_k(&g, &h, &[1.0], &[1.0], &fine).unwrap().value;
        assert!((a - b).abs() < 2e-3);
    }

    #[test]
    fn truncation_keeps_mass() {
        let g = Kernel::sup_ou(1.0).unwrap();
        let lat = g.lattice(&[0.1], Mass::Squared, 1e-8).unwrap();
        let gt = lat.g_tilde();
        // geometric series Σ e^{-0.2 m} = 1/(1-e^{-0.2})
        let full = 1.0 / (1.0 - (-0.2f64).exp());
        assert!((full - gt.sum()) / full < 1e-8);
        assert!((full - gt.sum()) / full >= 0.0);
        assert_eq!(lat.bounds[0].0, 0);
        let ell = Kernel::fixed(KernelFamily::EllipticGreen { alpha: 0.3, gamma: 1.0, randomized: None }).unwrap();
        let lat = ell.lattice(&[0.2, 0.2], Mass::Squared, 1e-6).unwrap();
        assert!(lat.nodes[0].1.get(&[0, 0]).is_finite());
        assert!(lat.bounds[0].0 < 0 && lat.bounds[1].0 < 0);
    }

    #[test]
    fn trawl_lattice_counts_cells() {
        let trawl = Kernel::fixed(KernelFamily::Trawl { lower: vec![-1.0], upper: vec![0.0] }).unwrap();
        for &step in &[0.1, 0.05, 0.25] {
            let lat = trawl.lattice(&[step], Mass::Squared, 1e-8).unwrap();
            let leb = lat.g_tilde().sum() * step;
            assert!((leb - 1.0).abs() < 1e-12, "step {step}: {leb}");
        }
    }

    #[test]
    fn tabulated_interpolation() {
        let grid = GridSpec::uniform(1, -1.0, 0.5, 5).unwrap();
        let k = Kernel::fixed(KernelFamily::Tabulated { grid, values: vec![0.0, 1.0, 2.0, 1.0, 0.0] }).unwrap();
        assert!((k.eval(&[], &[0.25]) - 1.5).abs() < 1e-15);
        assert_eq!(k.eval(&[], &[1.5]), 0.0);
        assert_eq!(k.eval(&[], &[1.0]), 0.0);
        let lat = k.lattice(&[0.5], Mass::Squared, 0.0).unwrap();
        // zero edge slabs carry no mass and are trimmed
        assert_eq!(lat.bounds, vec![(-1, 1)]);
        assert_eq!(lat.nodes[0].1.values, vec![1.0, 2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn convolution_is_symmetric(a in prop::collection::vec(0.0f64..2.0, 1..12), b in prop::collection::vec(0.0f64..2.0, 1..12), off_a in -5i64..5, off_b in -5i64..5) {
            let ta = LagTable { steps: vec![0.1], bounds: vec![(off_a, off_a + a.len() as i64 - 1)], values: a };
            let tb = LagTable { steps: vec![0.1], bounds: vec![(off_b, off_b + b.len() as i64 - 1)], values: b };
            let ab = ta.convolve(&tb);
            let ba = tb.convolve(&ta);
            prop_assert_eq!(&ab.bounds, &ba.bounds);
            for (x, y) in ab.values.iter().zip(&ba.values) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
