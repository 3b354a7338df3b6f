//! Laplace transform of V, the type G characteristic function of X,
//! second and fourth order moments and finite dimensional characteristic
//! functions, all evaluated on the simulation lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{k_tables, Kernel, Mass, DEFAULT_TRUNCATION_TOL};
use crate::levy_basis::CharQuadruplet;
use crate::rng::SeedStream;
use crate::simulate::{jackknife, Estimate, FieldSample, Simulator, Volatility};

/// Noise floor for the sign tests on finite differences.
pub const MONOTONE_FLOOR: f64 = 1e-8;

/// Law of V(t) = Σ_y Σ_u k(y, t - u) L^σ(y, u): a finite sum of scaled
/// independent basis cells, or a constant.
#[derive(Clone, Debug)]
pub enum TypeGLaw {
    Constant { v: f64 },
    Basis {
        basis: CharQuadruplet,
        /// (cell control measure p_y ΔV, nonzero values of k(y, ·)).
        cells: Vec<(f64, Vec<f64>)>,
    },
}

impl TypeGLaw {
    pub fn new(sim: &Simulator) -> Self {
        match (&sim.model.volatility, sim.h(), sim.basis()) {
            (Volatility::Stochastic(_), Some(h), Some(basis)) => {
                let dv = sim.target.cell_volume();
                let cells = k_tables(&sim.g, h)
                    .into_iter()
                    .map(|(p, t)| (p * dv, t.values.into_iter().filter(|v| *v != 0.0).collect()))
                    .collect();
                TypeGLaw::Basis { basis: *basis, cells }
            }
            _ => TypeGLaw::Constant { v: sim.mean_v() },
        }
    }

    /// n-th derivative of Λ_V at θ (n = 0 is Λ_V itself).
    pub fn laplace_v_derivative(&self, n: u32, theta: f64) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("Λ_V needs θ ≥ 0, got {theta}")));
        }
        match self {
            TypeGLaw::Constant { v } => Ok(match n {
                0 => -theta * v,
                1 => -v,
                _ => 0.0,
            }),
            TypeGLaw::Basis { basis, cells } => {
                let mut acc = 0.0;
                for (c, ks) in cells {
                    let mut s = 0.0;
                    for &k in ks {
                        s += (-k).powi(n as i32) * basis.cumulant_derivative(n, -theta * k)?;
                    }
                    acc += c * s;
                }
                Ok(acc)
            }
        }
    }

    /// Λ_V(θ) = log E e^{-θ V}.
    pub fn laplace_v(&self, theta: f64) -> Result<f64> {
        self.laplace_v_derivative(0, theta)
    }

    /// Ψ(ζ) = -Λ_V(ζ).
    pub fn psi(&self, zeta: f64) -> Result<f64> {
        Ok(-self.laplace_v(zeta)?)
    }

    /// Ψ'(ζ) = -Λ_V'(ζ).
    pub fn psi_prime(&self, zeta: f64) -> Result<f64> {
        Ok(-self.laplace_v_derivative(1, zeta)?)
    }

    /// E e^{iθX} = exp(Λ_V(θ²/2)).
    pub fn char_x(&self, theta: f64) -> Result<f64> {
        Ok(self.laplace_v(0.5 * theta * theta)?.exp())
    }

    /// E V = Var X.
    pub fn mean_v(&self) -> f64 {
        -self.laplace_v_derivative(1, 0.0).unwrap_or(f64::NAN)
    }

    pub fn var_v(&self) -> f64 {
        self.laplace_v_derivative(2, 0.0).unwrap_or(f64::NAN)
    }

    /// Excess kurtosis of X: 3 Var V / (E V)².
    pub fn excess_kurtosis_x(&self) -> f64 {
        3.0 * self.var_v() / self.mean_v().powi(2)
    }
}

pub fn laplace_v(sim: &Simulator, theta: f64) -> Result<f64> {
    TypeGLaw::new(sim).laplace_v(theta)
}

pub fn char_x(sim: &Simulator, theta: f64) -> Result<f64> {
    TypeGLaw::new(sim).char_x(theta)
}

/// R_X(h) = E σ² Σ_x p Σ_s g(x, h + s) g(x, s) ΔV on the lattice with the
/// given steps, for integer lattice offsets h.
pub fn covariances_x(kernel_g: &Kernel, e_sigma2: f64, lags: &[Vec<i64>], steps: &[f64]) -> Result<Vec<f64>> {
    if lags.iter().any(|l| l.len() != steps.len()) {
        return Err(Error::GridMismatch("lag and lattice dimensions differ".into()));
    }
    let lat = kernel_g.lattice(steps, Mass::Squared, DEFAULT_TRUNCATION_TOL)?;
    let dv: f64 = steps.iter().product();
    Ok(lags
        .par_iter()
        .map(|lag| {
            let mut acc = 0.0;
            for (p, t) in &lat.nodes {
                let mut s = 0.0;
                for (m, v) in t.iter() {
                    if v == 0.0 {
                        continue;
                    }
                    let shifted: Vec<i64> = m.iter().zip(lag).map(|(a, b)| a + b).collect();
                    s += v * t.get(&shifted);
                }
                acc += p * s;
            }
            e_sigma2 * acc * dv
        })
        .collect())
}

pub fn covariance_x(kernel_g: &Kernel, e_sigma2: f64, lag: &[i64], steps: &[f64]) -> Result<f64> {
    Ok(covariances_x(kernel_g, e_sigma2, &[lag.to_vec()], steps)?[0])
}

/// Correlations at integer lattice offsets; lag 0 gives 1.
pub fn correlations_x(kernel_g: &Kernel, lags: &[Vec<i64>], steps: &[f64]) -> Result<Vec<f64>> {
    let mut all = vec![vec![0; steps.len()]];
    all.extend(lags.iter().cloned());
    let c = covariances_x(kernel_g, 1.0, &all, steps)?;
    if c[0] == 0.0 {
        return Err(Error::Domain("the kernel vanishes on the lattice".into()));
    }
    Ok(c[1..].iter().map(|v| v / c[0]).collect())
}

pub fn correlation_x(kernel_g: &Kernel, lag: &[i64], steps: &[f64]) -> Result<f64> {
    Ok(correlations_x(kernel_g, &[lag.to_vec()], steps)?[0])
}

/// Both terms of Cov(X²(t), X²(t*)) with their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovSquares {
    /// 2 E(Σ_s g g σ² ΔV)².
    pub gaussian_term: Estimate,
    /// Cov(V(t), V(t*)).
    pub volatility_term: Estimate,
    pub total: Estimate,
}

fn check_fourth_moment(sim: &Simulator) -> Result<()> {
    if let Some(b) = sim.basis() {
        let k4 = b.cumulant_derivative(4, 0.0)?;
        if !k4.is_finite() {
            return Err(Error::Numerical("the volatility basis has no finite fourth cumulant".into()));
        }
    }
    Ok(())
}

fn locate(sim: &Simulator, t: &[f64]) -> Result<usize> {
    sim.target
        .index_of(t)
        .map(|i| sim.target.flatten(&i))
        .ok_or_else(|| Error::GridMismatch(format!("point {t:?} is not a node of the target grid")))
}

/// Mean and covariance of the linear functionals Σ_s a(s) σ²(s).
fn linear_moments(sim: &Simulator, a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let es2 = sim.mean_sigma2();
    let ea: f64 = a.iter().sum::<f64>() * es2;
    let eb: f64 = b.iter().sum::<f64>() * es2;
    let cov = match (sim.pull_back(a), sim.pull_back(b), sim.cell_measures(), sim.basis()) {
        (Some(pa), Some(pb), Some(c), Some(basis)) => {
            let k2 = basis.unit_moments().1;
            pa.iter()
                .zip(&pb)
                .zip(&c)
                .map(|((x, y), m)| m * k2 * x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
                .sum()
        }
        _ => 0.0,
    };
    (ea, eb, cov)
}

/// Cov(X²(t), X²(t*)) in closed form on the lattice: the cross weight
/// a(s) and the variance weights are pulled back to the basis cells.
pub fn cov_squares(sim: &Simulator, t: &[f64], t_star: &[f64]) -> Result<CovSquares> {
    check_fourth_moment(sim)?;
    let (i, j) = (locate(sim, t)?, locate(sim, t_star)?);
    let a = sim.cross_weight(i, j);
    let (ec, _, var_c) = linear_moments(sim, &a, &a);
    let wi = sim.cross_weight(i, i);
    let wj = sim.cross_weight(j, j);
    let (_, _, cov_v) = linear_moments(sim, &wi, &wj);
    let g = 2.0 * (var_c + ec * ec);
    let exact = |value| Estimate { value, se: 0.0 };
    Ok(CovSquares { gaussian_term: exact(g), volatility_term: exact(cov_v), total: exact(g + cov_v) })
}

/// The same two terms estimated over volatility replications: the squared
/// conditional covariance is averaged and Cov(V(t), V(t*)) is the sample
/// covariance.
pub fn cov_squares_mc(sim: &Simulator, t: &[f64], t_star: &[f64], n_reps: usize, master_seed: u64) -> Result<CovSquares> {
    check_fourth_moment(sim)?;
    if n_reps < 2 {
        return Err(invalid("at least two replications are needed"));
    }
    let (i, j) = (locate(sim, t)?, locate(sim, t_star)?);
    let a = sim.cross_weight(i, j);
    let streams = SeedStream::new(master_seed);
    let rows: Vec<Vec<f64>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let vol = sim.volatility(&streams, r)?;
            let v = sim.variance(&vol)?;
            let c: f64 = a.iter().zip(&vol.values).map(|(x, y)| x * y).sum();
            let (vi, vj) = (v.values[i], v.values[j]);
            Ok(vec![c * c, vi, vj, vi * vj])
        })
        .collect::<Result<_>>()?;
    let cv = |m: &[f64]| m[3] - m[1] * m[2];
    Ok(CovSquares {
        gaussian_term: jackknife(&rows, |m| 2.0 * m[0]),
        volatility_term: jackknife(&rows, cv),
        total: jackknife(&rows, |m| 2.0 * m[0] + cv(m)),
    })
}

fn merged(points: &[usize], thetas: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
    if points.len() != thetas.len() {
        return Err(invalid("one θ per point is needed"));
    }
    let mut m: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (&p, &t) in points.iter().zip(thetas) {
        *m.entry(p).or_insert(0.0) += t;
    }
    Ok(m.into_iter().unzip())
}

/// E(exp(i Σ θ_j X(t_j)) | σ) = exp(-½ Σ_s a(s) σ²(s)).
pub fn joint_cf_conditional(sim: &Simulator, vol: &FieldSample, points: &[usize], thetas: &[f64]) -> Result<f64> {
    let (p, th) = merged(points, thetas)?;
    let a = sim.quadratic_weight(&p, &th);
    let s2 = vol.restrict(&sim.source)?;
    let q: f64 = a.iter().zip(&s2.values).map(|(x, y)| x * y).sum();
    Ok((-0.5 * q).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CfMode {
    Kumulant,
    Mc { n_reps: usize, master_seed: u64 },
}

/// E exp(i Σ θ_j X(t_j)). Kumulant mode composes the basis log moment
/// generating function with the pulled-back weight; its standard error is
/// zero.
pub fn joint_cf(sim: &Simulator, points: &[usize], thetas: &[f64], mode: CfMode) -> Result<Estimate> {
    match mode {
        CfMode::Kumulant => {
            let (p, th) = merged(points, thetas)?;
            let a = sim.quadratic_weight(&p, &th);
            let log = match (&sim.model.volatility, sim.pull_back(&a), sim.cell_measures(), sim.basis()) {
                (Volatility::Constant { sigma2 }, ..) => -0.5 * sigma2 * a.iter().sum::<f64>(),
                (_, Some(b), Some(c), Some(basis)) => {
                    let mut acc = 0.0;
                    for (y, (bv, m)) in b.iter().zip(&c).enumerate() {
                        let mut s = 0.0;
                        for (u, &w) in bv.iter().enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            s += basis.log_mgf(-0.5 * w).map_err(|e| {
                                Error::Domain(format!("kumulant argument outside its domain at node {y}, cell {u}: {e}"))
                            })?;
                        }
                        acc += m * s;
                    }
                    acc
                }
                _ => unreachable!(),
            };
            Ok(Estimate { value: log.exp(), se: 0.0 })
        }
        CfMode::Mc { n_reps, master_seed } => {
            if n_reps < 2 {
                return Err(invalid("at least two replications are needed"));
            }
            let streams = SeedStream::new(master_seed);
            let rows: Vec<Vec<f64>> = (0..n_reps as u64)
                .into_par_iter()
                .map(|r| Ok(vec![joint_cf_conditional(sim, &sim.volatility(&streams, r)?, points, thetas)?]))
                .collect::<Result<_>>()?;
            Ok(jackknife(&rows, |m| m[0]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    /// Order n of the derivative of Ψ'.
    pub order: u32,
    /// min over the grid of (-1)^n D^n Ψ' by central differences.
    pub worst_margin: f64,
    /// The same minimum from the analytic derivative.
    pub analytic_margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub psi_at_zero: f64,
    pub step: f64,
    pub orders: Vec<OrderCheck>,
    pub pass: bool,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Sign alternation (-1)^n Ψ^{(n+1)} ≥ 0 for n = 0..=max_order on a
/// uniform positive grid, with central differences of step span·1e-3.
pub fn check_complete_monotonicity(law: &TypeGLaw, theta_grid: &[f64], max_order: u32) -> Result<MonotonicityReport> {
    if theta_grid.len() < 2 || theta_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("the θ grid must hold at least two positive points"));
    }
    let d0 = theta_grid[1] - theta_grid[0];
    if theta_grid.windows(2).any(|w| ((w[1] - w[0]) - d0).abs() > 1e-9 * d0.abs().max(1.0) || !(w[1] > w[0])) {
        return Err(invalid("the θ grid must be uniform and increasing"));
    }
    let span = theta_grid[theta_grid.len() - 1] - theta_grid[0];
    let h = span * 1e-3;
    let mut orders = Vec::new();
    for n in 0..=max_order {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut worst = f64::INFINITY;
        let mut analytic = f64::INFINITY;
        for &z in theta_grid {
            // Differences are taken relative to Ψ'(z) so a constant Ψ' has
            // exactly vanishing derivatives.
            let centre = law.psi_prime(z)?;
            let mut fd = if n == 0 { centre } else { 0.0 };
            for k in 0..=n {
                if n == 0 {
                    break;
                }
                let x = z + (f64::from(n) / 2.0 - f64::from(k)) * h;
                let c = binomial(n, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
                fd += c * (law.psi_prime(x.max(0.0))? - centre);
            }
            fd /= h.powi(n as i32);
            worst = worst.min(sign * fd);
            analytic = analytic.min(-sign * law.laplace_v_derivative(n + 1, z)?);
        }
        orders.push(OrderCheck { order: n, worst_margin: worst, analytic_margin: analytic, pass: worst > -MONOTONE_FLOOR });
    }
    let pass = orders.iter().all(|o| o.pass);
    Ok(MonotonicityReport { psi_at_zero: law.psi(0.0)?, step: h, orders, pass })
}
