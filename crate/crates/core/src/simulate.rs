//! Lattice simulation of the volatility field σ², the volatility modulated
//! field X and its conditional variance V, plus Monte Carlo replication.
//!
//! Grids: the target grid T carries X and V. The source grid S is T
//! extended by the lag box of g, and carries σ² and the Gaussian noise. The
//! basis grid U is S extended by the lag box of h and carries the
//! subordinator increments. Every sum is a direct Riemann sum over these
//! lattices.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{Kernel, KernelLattice, LagTable, Mass};
use crate::levy_basis::CharQuadruplet;
use crate::rng::{Purpose, SeedStream};

/// Mass fraction a kernel lattice may drop at its edges.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Volatility,
    Field,
    VarianceV,
}

/// Uniform lattices carry coordinates `grid.coords`; exponential lattices
/// carry their exponentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Uniform,
    Exponential,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: Option<u64>,
    pub replication: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub lattice: LatticeKind,
    pub kind: FieldKind,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// Self-similarity index of a Lamperti-transformed field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<Vec<f64>>,
}

impl FieldSample {
    pub fn new(grid: GridSpec, kind: FieldKind, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if kind == FieldKind::Volatility && values.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("volatility samples must be nonnegative"));
        }
        Ok(FieldSample { grid, lattice: LatticeKind::Uniform, kind, values, provenance, hurst: None })
    }

    pub fn constant(grid: GridSpec, kind: FieldKind, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, kind, vec![value; n], Provenance::default())
    }

    /// Physical coordinates of a lattice point.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let c = self.grid.coords(flat);
        match self.lattice {
            LatticeKind::Uniform => c,
            LatticeKind::Exponential => c.into_iter().map(f64::exp).collect(),
        }
    }

    pub fn value_at(&self, point: &[f64]) -> Option<f64> {
        let p: Vec<f64> = match self.lattice {
            LatticeKind::Uniform => point.to_vec(),
            LatticeKind::Exponential => point.iter().map(|v| v.ln()).collect(),
        };
        self.grid.index_of(&p).map(|idx| self.values[self.grid.flatten(&idx)])
    }

    /// The sub-field on `grid`, which must lie inside this sample's grid.
    pub fn restrict(&self, grid: &GridSpec) -> Result<FieldSample> {
        if !self.grid.covers(grid)? {
            return Err(Error::GridMismatch("sub-grid lies outside the sample grid".into()));
        }
        let off = self.grid.offset_of(grid)?;
        let values = (0..grid.len())
            .map(|i| {
                let idx: Vec<usize> = grid.unflatten(i).iter().zip(&off).map(|(&a, &o)| a + o as usize).collect();
                self.values[self.grid.flatten(&idx)]
            })
            .collect();
        Ok(FieldSample { grid: grid.clone(), values, ..self.clone() })
    }
}

/// Lag-table correlation between two aligned grids:
/// dst(t) = Σ_m w(m) src(t - m).
#[derive(Clone, Debug)]
struct Stencil {
    base: Vec<usize>,
    taps: Vec<(usize, f64)>,
    src_len: usize,
}

impl Stencil {
    fn new(table: &LagTable, dst: &GridSpec, src: &GridSpec) -> Result<Self> {
        let off = src.offset_of(dst)?;
        let src_counts = src.counts();
        let dst_counts = dst.counts();
        for (j, &(lo, hi)) in table.bounds.iter().enumerate() {
            if off[j] - hi < 0 || off[j] + dst_counts[j] as i64 - 1 - lo >= src_counts[j] as i64 {
                return Err(Error::GridMismatch(
                    "source grid does not cover the kernel support around the target grid".into(),
                ));
            }
        }
        let st = src.strides();
        let base = (0..dst.len())
            .map(|i| {
                dst.unflatten(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| (off[j] + t as i64 - table.bounds[j].1) as usize * st[j])
                    .sum()
            })
            .collect();
        let taps = table
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(m, v)| {
                let o: usize = m.iter().enumerate().map(|(j, &mj)| (table.bounds[j].1 - mj) as usize * st[j]).sum();
                (o, v)
            })
            .collect();
        Ok(Stencil { base, taps, src_len: src.len() })
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        self.base.par_iter().map(|&b| self.taps.iter().map(|&(o, w)| w * src[b + o]).sum()).collect()
    }

    /// Adjoint: out(s) = Σ_t a(t) w(t - s).
    fn adjoint(&self, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.src_len];
        for (&b, &av) in self.base.iter().zip(a) {
            if av == 0.0 {
                continue;
            }
            for &(o, w) in &self.taps {
                out[b + o] += w * av;
            }
        }
        out
    }
}

fn scaled(table: &LagTable, c: f64) -> LagTable {
    LagTable { values: table.values.iter().map(|v| v * c).collect(), ..table.clone() }
}

/// σ²(s) = Σ h(y, s - u) L^σ(dy, du) with a driftless subordinator L^σ;
/// the mixing p^σ is the mixing measure of `kernel_h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatilityModel {
    pub kernel_h: Kernel,
    pub basis: CharQuadruplet,
}

impl VolatilityModel {
    pub fn new(kernel_h: Kernel, basis: CharQuadruplet) -> Result<Self> {
        let m = VolatilityModel { kernel_h, basis };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel_h.validate()?;
        self.basis.validate()?;
        if !self.basis.is_driftless_subordinator() {
            return Err(invalid("the volatility basis must be a driftless subordinator"));
        }
        Ok(())
    }

    fn lattice(&self, steps: &[f64], tol: f64) -> Result<KernelLattice> {
        let lat = self.kernel_h.lattice(steps, Mass::Absolute, tol)?;
        if lat.nodes.iter().any(|(_, t)| t.values.iter().any(|v| *v < 0.0)) {
            return Err(invalid("the volatility kernel h must be nonnegative"));
        }
        Ok(lat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Volatility {
    Constant { sigma2: f64 },
    Stochastic(VolatilityModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmmmaModel {
    pub kernel_g: Kernel,
    pub volatility: Volatility,
}

impl VmmmaModel {
    pub fn validate(&self) -> Result<()> {
        self.kernel_g.validate()?;
        match &self.volatility {
            Volatility::Constant { sigma2 } => {
                if !(*sigma2 >= 0.0) || !sigma2.is_finite() {
                    return Err(invalid("constant volatility must be finite and nonnegative"));
                }
            }
            Volatility::Stochastic(v) => {
                v.validate()?;
                if v.kernel_h.dim() != self.kernel_g.dim() {
                    return Err(Error::GridMismatch("g and h have different dimensions".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct VolatilityPlan {
    basis: CharQuadruplet,
    h: KernelLattice,
    basis_grid: GridSpec,
    stencils: Vec<Stencil>,
}

/// A model discretised on a target grid: kernel lattices, derived grids and
/// the stencils that assemble the fields.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub model: VmmmaModel,
    pub target: GridSpec,
    pub source: GridSpec,
    pub g: KernelLattice,
    g_stencils: Vec<Stencil>,
    v_stencil: Stencil,
    vol: Option<VolatilityPlan>,
}

impl Simulator {
    pub fn new(model: VmmmaModel, target: GridSpec, tol: f64) -> Result<Self> {
        model.validate()?;
        if target.dim() != model.kernel_g.dim() {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                model.kernel_g.dim(),
                target.dim()
            )));
        }
        let steps = target.steps();
        let g = model.kernel_g.lattice(&steps, Mass::Squared, tol)?;
        let source = target.extended_by_lags(&g.bounds);
        let g_stencils = g.nodes.iter().map(|(_, t)| Stencil::new(t, &target, &source)).collect::<Result<_>>()?;
        let gt = scaled(&g.g_tilde(), target.cell_volume());
        let v_stencil = Stencil::new(&gt, &target, &source)?;
        let vol = match &model.volatility {
            Volatility::Constant { .. } => None,
            Volatility::Stochastic(v) => {
                let h = v.lattice(&steps, tol)?;
                let basis_grid = source.extended_by_lags(&h.bounds);
                let stencils = h.nodes.iter().map(|(_, t)| Stencil::new(t, &source, &basis_grid)).collect::<Result<_>>()?;
                Some(VolatilityPlan { basis: v.basis, h, basis_grid, stencils })
            }
        };
        Ok(Simulator { model, target, source, g, g_stencils, v_stencil, vol })
    }

    pub fn basis_grid(&self) -> Option<&GridSpec> {
        self.vol.as_ref().map(|v| &v.basis_grid)
    }

    pub fn h(&self) -> Option<&KernelLattice> {
        self.vol.as_ref().map(|v| &v.h)
    }

    pub fn basis(&self) -> Option<&CharQuadruplet> {
        self.vol.as_ref().map(|v| &v.basis)
    }

    /// E σ²(s) on the source grid: κ'(0) Σ p h ΔV, or the constant.
    pub fn mean_sigma2(&self) -> f64 {
        match (&self.model.volatility, &self.vol) {
            (Volatility::Constant { sigma2 }, _) => *sigma2,
            (_, Some(v)) => {
                let dv = self.target.cell_volume();
                let k1 = v.basis.unit_moments().0;
                v.h.nodes.iter().map(|(p, t)| p * t.sum()).sum::<f64>() * k1 * dv
            }
            _ => unreachable!(),
        }
    }

    /// Σ g̃ ΔV, the variance of X per unit volatility.
    pub fn g_tilde_mass(&self) -> f64 {
        self.g.g_tilde().sum() * self.target.cell_volume()
    }

    /// E V(t) = Var X(t).
    pub fn mean_v(&self) -> f64 {
        self.mean_sigma2() * self.g_tilde_mass()
    }

    /// Basis increments on U, one vector per mixing node of h.
    pub fn basis_draws(&self, streams: &SeedStream, replication: u64) -> Result<Vec<Vec<f64>>> {
        let v = self.vol.as_ref().ok_or_else(|| invalid("the model has constant volatility"))?;
        draw_basis(&v.basis, &v.h, &v.basis_grid, streams, replication)
    }

    /// σ² on the source grid from given basis increments.
    pub fn sigma2_from_draws(&self, draws: &[Vec<f64>]) -> Vec<f64> {
        let v = self.vol.as_ref().expect("stochastic volatility");
        let mut out = vec![0.0; self.source.len()];
        for (st, l) in v.stencils.iter().zip(draws) {
            for (o, x) in out.iter_mut().zip(st.apply(l)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|x| *x = x.max(0.0));
        out
    }

    /// σ² on the source grid.
    pub fn volatility(&self, streams: &SeedStream, replication: u64) -> Result<FieldSample> {
        let provenance = Provenance { master_seed: Some(streams.master_seed), replication: Some(replication) };
        let values = match &self.model.volatility {
            Volatility::Constant { sigma2 } => vec![*sigma2; self.source.len()],
            Volatility::Stochastic(_) => self.sigma2_from_draws(&self.basis_draws(streams, replication)?),
        };
        FieldSample::new(self.source.clone(), FieldKind::Volatility, values, provenance)
    }

    fn sigma_on_source(&self, vol: &FieldSample) -> Result<Vec<f64>> {
        if vol.kind != FieldKind::Volatility {
            return Err(invalid("expected a volatility sample"));
        }
        Ok(vol.restrict(&self.source)?.values.iter().map(|v| v.max(0.0).sqrt()).collect())
    }

    /// X on the target grid given σ², using the Gaussian noise of
    /// `replication`.
    pub fn field(&self, vol: &FieldSample, streams: &SeedStream, replication: u64) -> Result<FieldSample> {
        let sigma = self.sigma_on_source(vol)?;
        let dv = self.target.cell_volume();
        let mut out = vec![0.0; self.target.len()];
        for (k, ((p, _), st)) in self.g.nodes.iter().zip(&self.g_stencils).enumerate() {
            let sd = (p * dv).sqrt();
            let mut rng = streams.rng(replication, Purpose::GaussianNoise, k);
            let z: Vec<f64> = sigma
                .iter()
                .map(|s| {
                    let w: f64 = rng.sample(StandardNormal);
                    w * sd * s
                })
                .collect();
            for (o, x) in out.iter_mut().zip(st.apply(&z)) {
                *o += x;
            }
        }
        let provenance = Provenance { master_seed: Some(streams.master_seed), replication: Some(replication) };
        FieldSample::new(self.target.clone(), FieldKind::Field, out, provenance)
    }

    /// V(t) = Σ_s g̃(t - s) σ²(s) ΔV on the target grid.
    pub fn variance(&self, vol: &FieldSample) -> Result<FieldSample> {
        let s2 = vol.restrict(&self.source)?;
        let values = self.v_stencil.apply(&s2.values);
        FieldSample::new(self.target.clone(), FieldKind::VarianceV, values, vol.provenance)
    }

    /// One joint draw of (σ², X).
    pub fn replica(&self, streams: &SeedStream, replication: u64) -> Result<(FieldSample, FieldSample)> {
        let vol = self.volatility(streams, replication)?;
        let x = self.field(&vol, streams, replication)?;
        Ok((vol, x))
    }

    /// Conditional covariance Σ_s a(s) σ²(s) with
    /// a(s) = Σ_x p (Σ_j θ_j g(x, t_j - s))² ΔV, returned as the weight a on
    /// the source grid.
    pub fn quadratic_weight(&self, points: &[usize], thetas: &[f64]) -> Vec<f64> {
        let dv = self.target.cell_volume();
        let mut a = vec![0.0; self.source.len()];
        for ((p, _), st) in self.g.nodes.iter().zip(&self.g_stencils) {
            let mut lin = vec![0.0; self.source.len()];
            for (&t, &th) in points.iter().zip(thetas) {
                if th == 0.0 {
                    continue;
                }
                let b = st.base[t];
                for &(o, w) in &st.taps {
                    lin[b + o] += th * w;
                }
            }
            for (ai, li) in a.iter_mut().zip(&lin) {
                *ai += p * li * li * dv;
            }
        }
        a
    }

    /// Cross weight a(s) = Σ_x p g(x, t - s) g(x, t* - s) ΔV.
    pub fn cross_weight(&self, t: usize, t_star: usize) -> Vec<f64> {
        let dv = self.target.cell_volume();
        let mut a = vec![0.0; self.source.len()];
        for ((p, _), st) in self.g.nodes.iter().zip(&self.g_stencils) {
            let mut u = vec![0.0; self.source.len()];
            let mut v = vec![0.0; self.source.len()];
            for &(o, w) in &st.taps {
                u[st.base[t] + o] += w;
                v[st.base[t_star] + o] += w;
            }
            for ((ai, x), y) in a.iter_mut().zip(&u).zip(&v) {
                *ai += p * x * y * dv;
            }
        }
        a
    }

    /// Pulls a weight on the source grid back to the basis grid, one vector
    /// per mixing node of h: b_y(u) = Σ_s a(s) h(y, s - u).
    pub fn pull_back(&self, a: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.vol.as_ref().map(|v| v.stencils.iter().map(|st| st.adjoint(a)).collect())
    }

    /// Control measure p_y ΔV of one basis cell per mixing node of h.
    pub fn cell_measures(&self) -> Option<Vec<f64>> {
        let dv = self.target.cell_volume();
        self.vol.as_ref().map(|v| v.h.nodes.iter().map(|(p, _)| p * dv).collect())
    }
}

fn draw_basis(
    basis: &CharQuadruplet,
    h: &KernelLattice,
    basis_grid: &GridSpec,
    streams: &SeedStream,
    replication: u64,
) -> Result<Vec<Vec<f64>>> {
    let dv = basis_grid.cell_volume();
    h.nodes
        .iter()
        .enumerate()
        .map(|(k, (p, _))| {
            let mut rng = streams.rng(replication, Purpose::VolatilityBasis, k);
            (0..basis_grid.len()).map(|_| basis.sample_cell_increment(p * dv, &mut rng)).collect()
        })
        .collect()
}

/// σ² on `grid` from basis increments drawn on `extended_grid`.
pub fn simulate_volatility(
    model: &VolatilityModel,
    grid: &GridSpec,
    extended_grid: &GridSpec,
    streams: &SeedStream,
    replication: u64,
) -> Result<FieldSample> {
    model.validate()?;
    let h = model.lattice(&grid.steps(), TRUNCATION_TOL)?;
    let stencils: Vec<Stencil> = h.nodes.iter().map(|(_, t)| Stencil::new(t, grid, extended_grid)).collect::<Result<_>>()?;
    let draws = draw_basis(&model.basis, &h, extended_grid, streams, replication)?;
    let mut values = vec![0.0; grid.len()];
    for (st, l) in stencils.iter().zip(&draws) {
        for (o, x) in values.iter_mut().zip(st.apply(l)) {
            *o += x;
        }
    }
    values.iter_mut().for_each(|x| *x = x.max(0.0));
    let provenance = Provenance { master_seed: Some(streams.master_seed), replication: Some(replication) };
    FieldSample::new(grid.clone(), FieldKind::Volatility, values, provenance)
}

/// X on `grid` given a volatility sample covering g's support around it.
pub fn simulate_vmmma(
    kernel_g: &Kernel,
    vol: &FieldSample,
    grid: &GridSpec,
    streams: &SeedStream,
    replication: u64,
) -> Result<FieldSample> {
    let model = VmmmaModel { kernel_g: kernel_g.clone(), volatility: Volatility::Constant { sigma2: 1.0 } };
    let sim = Simulator::new(model, grid.clone(), TRUNCATION_TOL)?;
    sim.field(vol, streams, replication)
}

/// V(t) = Σ_s g̃(t - s) σ²(s) ΔV at the lattice point `t`.
pub fn compute_v(kernel_g: &Kernel, vol: &FieldSample, t: &[f64]) -> Result<f64> {
    let steps = vol.grid.steps();
    let g = kernel_g.lattice(&steps, Mass::Squared, TRUNCATION_TOL)?;
    let point = GridSpec::from_parts(t, &steps, &vec![1; t.len()])?;
    let gt = scaled(&g.g_tilde(), vol.grid.cell_volume());
    let st = Stencil::new(&gt, &point, &vol.grid)?;
    Ok(st.apply(&vol.values)[0])
}

/// A Monte Carlo estimate with its jackknife standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// |value - target| in units of the standard error (0 when both agree
    /// exactly).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

/// Delete-one jackknife of a smooth function of column means.
pub fn jackknife<F: Fn(&[f64]) -> f64>(rows: &[Vec<f64>], f: F) -> Estimate {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    let mut total = vec![0.0; k];
    for r in rows {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    let mean: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let value = f(&mean);
    if n < 2 {
        return Estimate { value, se: f64::NAN };
    }
    let loo: Vec<f64> = rows
        .iter()
        .map(|r| {
            let m: Vec<f64> = total.iter().zip(r).map(|(t, v)| (t - v) / (n - 1) as f64).collect();
            f(&m)
        })
        .collect();
    let bar = loo.iter().sum::<f64>() / n as f64;
    let ss: f64 = loo.iter().map(|v| (v - bar) * (v - bar)).sum();
    Estimate { value, se: ((n - 1) as f64 / n as f64 * ss).sqrt() }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// What to estimate in `replicate`: moments at the anchor point, lagged
/// second moments, and empirical transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    pub anchor: Vec<f64>,
    #[serde(default)]
    pub lags: Vec<Vec<f64>>,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub laplace_thetas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub lag: Vec<f64>,
    pub covariance: Estimate,
    pub correlation: Estimate,
    pub cov_squares: Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformEstimate {
    pub theta: f64,
    pub value: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_reps: usize,
    pub master_seed: u64,
    pub anchor: Vec<f64>,
    pub mean: Estimate,
    pub variance: Estimate,
    pub excess_kurtosis: Estimate,
    pub mean_v: Estimate,
    pub lags: Vec<LagEstimate>,
    /// E cos(θ X(anchor)).
    pub cf: Vec<TransformEstimate>,
    /// E exp(-θ V(anchor)).
    pub laplace_v: Vec<TransformEstimate>,
}

/// X and V at the given target points, one row per replication:
/// [X(p_1), …, X(p_n), V(p_1), …, V(p_n)].
pub fn sample_points(sim: &Simulator, points: &[usize], n_reps: usize, master_seed: u64) -> Result<Vec<Vec<f64>>> {
    let streams = SeedStream::new(master_seed);
    (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let (vol, x) = sim.replica(&streams, r)?;
            let v = sim.variance(&vol)?;
            let mut row: Vec<f64> = points.iter().map(|&p| x.values[p]).collect();
            row.extend(points.iter().map(|&p| v.values[p]));
            Ok(row)
        })
        .collect()
}

pub fn replicate(sim: &Simulator, config: &ReplicationConfig, n_reps: usize, master_seed: u64) -> Result<MonteCarloSummary> {
    if n_reps < 2 {
        return Err(invalid("at least two replications are needed"));
    }
    let locate = |p: &[f64]| -> Result<usize> {
        sim.target
            .index_of(p)
            .map(|i| sim.target.flatten(&i))
            .ok_or_else(|| Error::GridMismatch(format!("point {p:?} is not a node of the target grid")))
    };
    let anchor = locate(&config.anchor)?;
    let mut points = vec![anchor];
    for lag in &config.lags {
        if lag.len() != config.anchor.len() {
            return Err(Error::GridMismatch("lag and anchor dimensions differ".into()));
        }
        let p: Vec<f64> = config.anchor.iter().zip(lag).map(|(a, h)| a + h).collect();
        points.push(locate(&p)?);
    }
    let raw = sample_points(sim, &points, n_reps, master_seed)?;
    let np = points.len();
    // Columns: x0^1..4, per lag [xh, xh², x0 xh, x0² xh²], cos(θ x0), V0,
    // exp(-θ V0).
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| {
            let x0 = r[0];
            let v0 = r[np];
            let mut row = vec![x0, x0 * x0, x0.powi(3), x0.powi(4)];
            for &xh in &r[1..np] {
                row.extend([xh, xh * xh, x0 * xh, x0 * x0 * xh * xh]);
            }
            row.extend(config.thetas.iter().map(|t| (t * x0).cos()));
            row.push(v0);
            row.extend(config.laplace_thetas.iter().map(|t| (-t * v0).exp()));
            row
        })
        .collect();
    let var = |m: &[f64]| m[1] - m[0] * m[0];
    let mean = jackknife(&rows, |m| m[0]);
    let variance = jackknife(&rows, var);
    let excess_kurtosis = jackknife(&rows, |m| {
        let (m1, m2, m3, m4) = (m[0], m[1], m[2], m[3]);
        let c2 = m2 - m1 * m1;
        let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        if c2 == 0.0 {
            0.0
        } else {
            c4 / (c2 * c2) - 3.0
        }
    });
    let lags = config
        .lags
        .iter()
        .enumerate()
        .map(|(i, lag)| {
            let c = 4 + 4 * i;
            let cov = move |m: &[f64]| m[c + 2] - m[0] * m[c];
            LagEstimate {
                lag: lag.clone(),
                covariance: jackknife(&rows, cov),
                correlation: jackknife(&rows, |m| ratio(cov(m), (var(m) * (m[c + 1] - m[c] * m[c])).sqrt())),
                cov_squares: jackknife(&rows, |m| m[c + 3] - m[1] * m[c + 1]),
            }
        })
        .collect();
    let base = 4 + 4 * config.lags.len();
    let cf = config
        .thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| TransformEstimate { theta, value: jackknife(&rows, |m| m[base + i]) })
        .collect();
    let vcol = base + config.thetas.len();
    let mean_v = jackknife(&rows, |m| m[vcol]);
    let laplace_v = config
        .laplace_thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| TransformEstimate { theta, value: jackknife(&rows, |m| m[vcol + 1 + i]) })
        .collect();
    Ok(MonteCarloSummary {
        n_reps,
        master_seed,
        anchor: config.anchor.clone(),
        mean,
        variance,
        excess_kurtosis,
        mean_v,
        lags,
        cf,
        laplace_v,
    })
}
