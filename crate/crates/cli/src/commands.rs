use std::f64::consts::PI;

use serde::Serialize;
use vmmma::analytics::{self, CfMode, MonotonicityReport, TypeGLaw};
use vmmma::fourier::{self, Root};
use vmmma::grid::GridSpec;
use vmmma::lamperti::{self, MssIndex};
use vmmma::quadrature::integrate;
use vmmma::rng::SeedStream;
use vmmma::simulate::{jackknife, replicate, sample_points, Estimate, MonteCarloSummary, Simulator};
use vmmma::Error;

use crate::config::{DesignConfig, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::io::{coord_header, write_csv, write_field, write_json};

/// Monte Carlo checks pass when the estimate is within this many standard
/// errors of the reference.
pub const Z_TOL: f64 = 4.0;
pub const SPECTRAL_TOL: f64 = 1e-5;
const SERIES_TOL: f64 = 1e-14;

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// |value - reference| ≤ tolerance · se.
    ZScore,
    /// |value - reference| ≤ tolerance.
    Absolute,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub se: f64,
    pub tolerance: f64,
    pub criterion: Criterion,
    pub pass: bool,
}

impl Check {
    fn z(name: impl Into<String>, est: Estimate, reference: f64) -> Self {
        Check {
            name: name.into(),
            value: est.value,
            reference,
            se: est.se,
            tolerance: Z_TOL,
            pass: est.z_score(reference) <= Z_TOL,
            criterion: Criterion::ZScore,
        }
    }

    fn abs(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            reference,
            se: 0.0,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
            criterion: Criterion::Absolute,
        }
    }
}

fn say(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn lag_steps(grid: &GridSpec, lag: &[f64]) -> Result<Vec<i64>> {
    if lag.len() != grid.dim() {
        return Err(CliError::Config(format!("lag {lag:?} does not match the grid dimension")));
    }
    lag.iter()
        .zip(grid.steps())
        .map(|(h, s)| {
            let r = h / s;
            if (r - r.round()).abs() > 1e-9 {
                Err(CliError::Config(format!("lag {lag:?} is not a multiple of the grid step")))
            } else {
                Ok(r.round() as i64)
            }
        })
        .collect()
}

fn locate(grid: &GridSpec, p: &[f64]) -> Result<usize> {
    grid.index_of(p)
        .map(|i| grid.flatten(&i))
        .ok_or_else(|| CliError::Config(format!("point {p:?} is not a node of the target grid")))
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    model_hash: String,
    summary: &'a MonteCarloSummary,
}

pub fn simulate(cfg: &ExperimentConfig, quiet: bool) -> Result<()> {
    let sim = cfg.simulator()?;
    let rc = cfg.replication(&sim.target);
    let out = &cfg.output.dir;
    let hash = cfg.model_hash()?;
    let seed = cfg.run.master_seed;
    let streams = SeedStream::new(seed);
    let fields = out.join("fields");
    for r in 0..cfg.run.save_fields as u64 {
        let (vol, x) = sim.replica(&streams, r)?;
        let v = sim.variance(&vol)?;
        write_field(&fields, &format!("x_{r:04}"), &x, &hash)?;
        write_field(&fields, &format!("sigma2_{r:04}"), &vol, &hash)?;
        write_field(&fields, &format!("v_{r:04}"), &v, &hash)?;
    }
    let summary = replicate(&sim, &rc, cfg.run.n_reps, seed)?;
    write_json(&out.join("summary.json"), &SimulateSummary { model_hash: hash, summary: &summary })?;
    say(quiet, &format!("simulate: {} field replications and summary.json written to {}", cfg.run.save_fields, out.display()));
    Ok(())
}

#[derive(Serialize)]
struct DesignSummary {
    root: Root,
    step: f64,
    table_len: usize,
    clipped: usize,
    tail_fraction: f64,
    aliasing_warning: bool,
    roundtrip: Check,
    lags_checked: usize,
    symmetry: Check,
}

/// Designs the kernel and measures how well its spectral density
/// reproduces the normalised table on the interior lags.
fn design_roundtrip(d: &DesignConfig) -> Result<(fourier::DesignedKernel, fourier::SpectralDensity, DesignSummary)> {
    let table = d.table()?;
    if !(d.interior > 0.0 && d.interior <= 1.0) {
        return Err(CliError::Config("design.interior must lie in (0, 1]".into()));
    }
    let designed = fourier::kernel_from_covariance(&table, d.step, d.root)?;
    let gamma = fourier::spectral_from_kernel(&designed.kernel, &designed.grid)?;
    let interior = ((d.interior * table.len() as f64) as usize).max(1);
    let lags: Vec<Vec<f64>> = (0..interior).map(|i| vec![i as f64 * d.step]).collect();
    let recon = fourier::correlation_from_spectral(&gamma, &lags)?;
    let err = recon.iter().zip(&table).map(|(r, t)| (r - t / table[0]).abs()).fold(0.0, f64::max);
    let values = match &designed.kernel.family {
        vmmma::kernels::KernelFamily::Tabulated { values, .. } => values.clone(),
        _ => unreachable!(),
    };
    // Node j sits at (j - n)Δ; its mirror is node 2n - j.
    let m = values.len();
    let sign = if d.root == Root::Even { 1.0 } else { -1.0 };
    let asym = (1..m).map(|j| (values[j] - sign * values[m - j]).abs()).fold(0.0, f64::max);
    let summary = DesignSummary {
        root: d.root,
        step: d.step,
        table_len: table.len(),
        clipped: designed.clipped,
        tail_fraction: gamma.tail_fraction,
        aliasing_warning: gamma.aliasing_warning,
        roundtrip: Check::abs("roundtrip_sup_error", err, 0.0, d.tolerance),
        lags_checked: interior,
        symmetry: Check::abs(if sign > 0.0 { "even_symmetry" } else { "odd_antisymmetry" }, asym, 0.0, 1e-12),
    };
    Ok((designed, gamma, summary))
}

pub fn design_kernel(cfg: &ExperimentConfig, quiet: bool) -> Result<()> {
    let out = &cfg.output.dir;
    let (designed, gamma, summary) = design_roundtrip(cfg.design()?)?;
    let values = match &designed.kernel.family {
        vmmma::kernels::KernelFamily::Tabulated { values, .. } => values,
        _ => unreachable!(),
    };
    let rows = (0..values.len()).map(|i| vec![designed.grid.coords(i)[0], values[i]]);
    write_csv(&out.join("kernel.csv"), &["z1".into(), "value".into()], rows)?;
    let rows = (0..gamma.values.len()).map(|i| vec![gamma.frequency(i)[0], gamma.values[i]]);
    write_csv(&out.join("spectrum.csv"), &["u1".into(), "value".into()], rows)?;
    write_json(&out.join("design.json"), &summary)?;
    say(quiet, &format!("design-kernel: roundtrip error {:.3e} written to {}", summary.roundtrip.value, out.display()));
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    model_hash: String,
    n_reps: usize,
    master_seed: u64,
    anchor: Vec<f64>,
    checks: Vec<Check>,
    monotonicity: MonotonicityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<DesignSummary>,
    pass: bool,
}

pub fn analyze(cfg: &ExperimentConfig, quiet: bool) -> Result<()> {
    let design = cfg.design.as_ref().map(|d| design_roundtrip(d).map(|r| r.2)).transpose()?;
    let sim = cfg.simulator()?;
    let law = TypeGLaw::new(&sim);
    let rc = cfg.replication(&sim.target);
    let run = &cfg.run;
    let out = &cfg.output.dir;
    let s = replicate(&sim, &rc, run.n_reps, run.master_seed)?;
    let steps = sim.target.steps();
    let mut checks = Vec::new();

    let var_x = analytics::covariance_x(&sim.model.kernel_g, sim.mean_sigma2(), &vec![0; steps.len()], &steps)?;
    checks.push(Check::z("mean_x", s.mean, 0.0));
    checks.push(Check::z("variance_x", s.variance, var_x));
    checks.push(Check::z("mean_v", s.mean_v, law.mean_v()));
    checks.push(Check::z("excess_kurtosis_x", s.excess_kurtosis, law.excess_kurtosis_x()));

    let mut cf_rows = Vec::new();
    for t in &s.cf {
        let exact = law.char_x(t.theta)?;
        cf_rows.push(vec![t.theta, exact, t.value.value, t.value.se]);
        checks.push(Check::z(format!("char_x({})", t.theta), t.value, exact));
    }
    let mut lv_rows = Vec::new();
    for t in &s.laplace_v {
        let exact = law.laplace_v(t.theta)?.exp();
        lv_rows.push(vec![t.theta, exact, t.value.value, t.value.se]);
        checks.push(Check::z(format!("laplace_v({})", t.theta), t.value, exact));
    }

    let int_lags: Vec<Vec<i64>> = rc.lags.iter().map(|l| lag_steps(&sim.target, l)).collect::<Result<_>>()?;
    let corr = analytics::correlations_x(&sim.model.kernel_g, &int_lags, &steps)?;
    let mut corr_rows = Vec::new();
    for (l, exact) in s.lags.iter().zip(&corr) {
        let mut row = l.lag.clone();
        row.extend([*exact, l.correlation.value, l.correlation.se]);
        corr_rows.push(row);
        checks.push(Check::z(format!("correlation_x({:?})", l.lag), l.correlation, *exact));
        let t_star: Vec<f64> = rc.anchor.iter().zip(&l.lag).map(|(a, h)| a + h).collect();
        let cs = analytics::cov_squares(&sim, &rc.anchor, &t_star)?;
        checks.push(Check::z(format!("cov_squares({:?})", l.lag), l.cov_squares, cs.total.value));
    }

    let a = locate(&sim.target, &rc.anchor)?;
    for &th in &run.thetas {
        let single = analytics::joint_cf(&sim, &[a], &[th], CfMode::Kumulant)?.value;
        checks.push(Check::abs(format!("joint_cf_n1({th})"), single, law.char_x(th)?, 1e-6));
    }
    if let Some(l) = rc.lags.first() {
        let p: Vec<f64> = rc.anchor.iter().zip(l).map(|(x, h)| x + h).collect();
        let pts = [a, locate(&sim.target, &p)?];
        for (k, &th) in run.thetas.iter().enumerate() {
            let th2 = [th, -0.5 * th];
            let kum = analytics::joint_cf(&sim, &pts, &th2, CfMode::Kumulant)?.value;
            let mode = CfMode::Mc { n_reps: run.n_reps, master_seed: run.master_seed.wrapping_add(1 + k as u64) };
            let mc = analytics::joint_cf(&sim, &pts, &th2, mode)?;
            checks.push(Check::z(format!("joint_cf_n2({th}, {})", th2[1]), mc, kum));
        }
    }

    let monotonicity = analytics::check_complete_monotonicity(&law, &run.monotonicity_thetas, run.max_order)?;
    let pass = checks.iter().all(|c| c.pass) && monotonicity.pass && design.as_ref().is_none_or(|d| d.roundtrip.pass);
    let report = AnalyzeReport {
        model_hash: cfg.model_hash()?,
        n_reps: run.n_reps,
        master_seed: run.master_seed,
        anchor: rc.anchor.clone(),
        checks,
        monotonicity,
        design,
        pass,
    };
    let head = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    write_csv(&out.join("cf.csv"), &head(&["theta", "analytic", "mc", "se"]), cf_rows)?;
    write_csv(&out.join("laplace_v.csv"), &head(&["theta", "analytic", "mc", "se"]), lv_rows)?;
    let mut h = coord_header("h", sim.target.dim());
    h.extend(head(&["analytic", "mc", "se"]));
    write_csv(&out.join("correlation.csv"), &h, corr_rows)?;
    write_json(&out.join("report.json"), &report)?;
    say(quiet, &format!("analyze: {} written to {}", if pass { "all checks pass" } else { "some checks FAIL" }, out.display()));
    Ok(())
}

/// π^{-1} ∫_0^∞ cos(wh) ρ(h) dh for the translation-invariant correlation:
/// Gauss-Kronrod on unit pieces of [0, 40] and the exponential tail
/// ½e^{-Hh} + H e^{(H-1)h} in closed form beyond.
fn rho_fourier(h: &MssIndex, w: f64) -> Result<f64> {
    let hh = h.values()[0];
    let l = 40.0;
    let mut acc = 0.0;
    for k in 0..40 {
        let a = k as f64;
        let f = |x: f64| (w * x).cos() * lamperti::rho_translation_invariant(h, &[x]).unwrap_or(f64::NAN);
        acc += integrate(f, a, a + 1.0, 1e-13, 1e-11)?;
    }
    let tail = |c: f64| (-c * l).exp() * (c * (w * l).cos() - w * (w * l).sin()) / (c * c + w * w);
    acc += 0.5 * tail(hh) + hh * tail(1.0 - hh);
    if !acc.is_finite() {
        return Err(Error::Numerical("ρ inversion is not finite".into()).into());
    }
    Ok(acc / PI)
}

#[derive(Serialize)]
struct LampertiReport {
    model_hash: String,
    hurst: Vec<f64>,
    var_x0: f64,
    n_reps: usize,
    master_seed: u64,
    roundtrip: Check,
    covariance: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral: Option<Check>,
    pass: bool,
}

pub fn lamperti(cfg: &ExperimentConfig, quiet: bool) -> Result<()> {
    let run = &cfg.run;
    let h = MssIndex::new(run.hurst.clone().ok_or_else(|| CliError::Config("run.hurst is required".into()))?)?;
    let sim: Simulator = cfg.simulator()?;
    let d = sim.target.dim();
    if h.dim() != d {
        return Err(CliError::Config(format!("run.hurst has {} entries for a {d}-dimensional grid", h.dim())));
    }
    let out = &cfg.output.dir;
    let hash = cfg.model_hash()?;
    let streams = SeedStream::new(run.master_seed);
    let fields = out.join("fields");
    let mut worst = 0.0f64;
    for r in 0..run.save_fields as u64 {
        let (_, x) = sim.replica(&streams, r)?;
        let y = lamperti::to_mss(&x, &h)?;
        let back = lamperti::from_mss(&y, &h)?;
        for (a, b) in x.values.iter().zip(&back.values) {
            let scale = a.abs().max(f64::MIN_POSITIVE);
            worst = worst.max((a - b).abs() / scale);
        }
        write_field(&fields, &format!("x_{r:04}"), &x, &hash)?;
        write_field(&fields, &format!("y_{r:04}"), &y, &hash)?;
    }

    // Cov(Y(t), Y(s)) with t = e^{anchor}, s = e^{anchor + lag}, lag 0 first.
    let steps = sim.target.steps();
    let anchor = cfg.anchor(&sim.target);
    let mut lags = vec![vec![0.0; d]];
    lags.extend(run.lags.iter().cloned());
    let int_lags: Vec<Vec<i64>> = lags.iter().map(|l| lag_steps(&sim.target, l)).collect::<Result<_>>()?;
    let cov = analytics::covariances_x(&sim.model.kernel_g, sim.mean_sigma2(), &int_lags, &steps)?;
    let var_x0 = cov[0];
    let r_x = |z: &[f64]| {
        let k: Vec<i64> = z.iter().zip(&steps).map(|(v, s)| (v / s).round() as i64).collect();
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        int_lags.iter().position(|l| *l == k || *l == neg).map_or(f64::NAN, |i| cov[i])
    };
    let log_points: Vec<Vec<f64>> =
        lags.iter().map(|l| anchor.iter().zip(l).map(|(a, v)| a + v).collect()).collect();
    let idx: Vec<usize> = log_points.iter().map(|p| locate(&sim.target, p)).collect::<Result<_>>()?;
    let weights: Vec<f64> = log_points.iter().map(|p| h.values().iter().zip(p).map(|(a, b)| a * b).sum::<f64>().exp()).collect();
    let rows = sample_points(&sim, &idx, run.n_reps, run.master_seed)?;
    let t: Vec<f64> = anchor.iter().map(|v| v.exp()).collect();
    let mut cov_rows = Vec::new();
    let mut checks = Vec::new();
    for (i, p) in log_points.iter().enumerate() {
        let s: Vec<f64> = p.iter().map(|v| v.exp()).collect();
        let ys: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let (a, b) = (weights[0] * r[0], weights[i] * r[i]);
                vec![a, b, a * b]
            })
            .collect();
        let mc = jackknife(&ys, |m| m[2] - m[0] * m[1]);
        let exact = lamperti::mss_covariance(r_x, &h, &t, &s)?;
        let incr = lamperti::stat_incr_covariance(&h, var_x0, &t, &s)?;
        let mut row = t.clone();
        row.extend(&s);
        row.extend([exact, mc.value, mc.se, incr]);
        cov_rows.push(row);
        checks.push(Check::z(format!("mss_covariance({t:?}, {s:?})"), mc, exact));
    }
    let mut header = coord_header("t", d);
    header.extend(coord_header("s", d));
    header.extend(["analytic", "mc", "se", "stat_incr"].map(String::from));
    write_csv(&out.join("mss_covariance.csv"), &header, cov_rows)?;

    let spectral = if d == 1 {
        let hh = h.values()[0];
        let mut rows = Vec::new();
        let mut err = 0.0f64;
        for &w in &run.frequencies {
            let series = fourier::selfsim_spectral(hh, w, SERIES_TOL)?;
            let quad = rho_fourier(&h, w)?;
            err = err.max((series - quad).abs());
            rows.push(vec![w, series, quad, (series - quad).abs()]);
        }
        write_csv(&out.join("rho_spectral.csv"), &["w", "series", "quadrature", "abs_error"].map(String::from), rows)?;
        Some(Check::abs("spectral_series_vs_quadrature", err, 0.0, SPECTRAL_TOL))
    } else {
        None
    };

    let roundtrip = Check::abs("lamperti_roundtrip_relative_error", worst, 0.0, 1e-12);
    let pass = roundtrip.pass && checks.iter().all(|c| c.pass) && spectral.as_ref().is_none_or(|c| c.pass);
    let report = LampertiReport {
        model_hash: hash,
        hurst: h.values().to_vec(),
        var_x0,
        n_reps: run.n_reps,
        master_seed: run.master_seed,
        roundtrip,
        covariance: checks,
        spectral,
        pass,
    };
    write_json(&out.join("lamperti.json"), &report)?;
    say(quiet, &format!("lamperti: {} written to {}", if pass { "all checks pass" } else { "some checks FAIL" }, out.display()));
    Ok(())
}
