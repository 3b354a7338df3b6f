//! Spectral densities of kernels, correlations from spectra, kernel design
//! from a target covariance, and the spectral density of the stationary
//! process behind a self-similar field with stationary increments.
//!
//! Continuous transforms F(u) = (2π)^{-1/2} ∫ f(z) e^{-iuz} dz are replaced
//! by step-weighted sums over a window of M (even) lattice points, with the
//! frequency lattice u_k = (k - M/2 + 1/2) Δu, Δu = 2π/(MΔ). The half-step
//! shift keeps the frequency lattice symmetric about 0 without a zero bin,
//! and the pair of sums is an exact inverse pair.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{strides, Axis, GridSpec};
use crate::kernels::{Kernel, KernelFamily};
use crate::levy_basis::MixingMeasure;

/// Transform values below this are a Bochner violation.
pub const NEGATIVE_TOL: f64 = 1e-8;
/// Kernel energy outside the window above which aliasing is reported.
pub const ALIASING_TOL: f64 = 1e-6;

/// Symmetric, half-shifted frequency lattice of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    pub step: f64,
    pub count: usize,
}

impl FrequencyAxis {
    pub fn new(step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) || count == 0 || count % 2 != 0 {
            return Err(invalid("frequency axes need a positive step and an even count"));
        }
        Ok(FrequencyAxis { step, count })
    }

    /// Dual of a lag axis with `count` points of spacing `step`.
    pub fn dual_of(step: f64, count: usize) -> Result<Self> {
        Self::new(2.0 * PI / (count as f64 * step), count)
    }

    pub fn freq(&self, k: usize) -> f64 {
        (k as f64 - self.count as f64 / 2.0 + 0.5) * self.step
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.freq(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralTag {
    SelfSimilarSeries { hurst: f64 },
    Tabulated,
}

/// Nonnegative, even spectral density tabulated on a frequency lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub axes: Vec<FrequencyAxis>,
    /// Row-major over the frequency lattice.
    pub values: Vec<f64>,
    pub tag: SpectralTag,
    /// Window of the kernel the density was computed from, if any.
    pub lag_grid: Option<GridSpec>,
    /// Relative kernel energy beyond the window.
    pub tail_fraction: f64,
    pub aliasing_warning: bool,
}

impl SpectralDensity {
    /// Tabulates `f` on the frequency lattice.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(axes: Vec<FrequencyAxis>, f: F, tag: SpectralTag) -> Result<Self> {
        let counts: Vec<usize> = axes.iter().map(|a| a.count).collect();
        let n: usize = counts.iter().product();
        let st = strides(&counts);
        let mut values = Vec::with_capacity(n);
        let mut u = vec![0.0; axes.len()];
        for flat in 0..n {
            for (j, a) in axes.iter().enumerate() {
                u[j] = a.freq((flat / st[j]) % a.count);
            }
            let v = f(&u);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("spectral density value {v} at {u:?} is not a finite nonnegative number")));
            }
            values.push(v);
        }
        Ok(SpectralDensity { axes, values, tag, lag_grid: None, tail_fraction: 0.0, aliasing_warning: false })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let counts: Vec<usize> = self.axes.iter().map(|a| a.count).collect();
        let st = strides(&counts);
        self.axes.iter().enumerate().map(|(j, a)| a.freq((flat / st[j]) % a.count)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    /// ∫ γ(u) du as a lattice sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Multilinear interpolation; zero outside the lattice.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let origin: Vec<f64> = self.axes.iter().map(|a| a.freq(0)).collect();
        let grid = GridSpec {
            axes: self
                .axes
                .iter()
                .zip(&origin)
                .map(|(a, &o)| Axis { origin: o, step: a.step, count: a.count })
                .collect(),
        };
        let k = Kernel { family: KernelFamily::Tabulated { grid, values: self.values.clone() }, mixing: MixingMeasure::dirac(vec![]) };
        k.eval(&[], u)
    }

    /// Largest |γ(u) - γ(-u)| over the lattice.
    pub fn asymmetry(&self) -> f64 {
        let n = self.values.len();
        // Reversing every axis maps u to -u, which for row-major order with
        // symmetric axes is reversal of the flat index.
        (0..n).map(|i| (self.values[i] - self.values[n - 1 - i]).abs()).fold(0.0, f64::max)
    }
}

fn axis_windows(grid: &GridSpec) -> Result<Vec<FrequencyAxis>> {
    grid.axes.iter().map(|a| FrequencyAxis::dual_of(a.step, a.count)).collect()
}

// In-place transform along every axis of a row-major array.
fn transform(data: &mut [Complex64], grid: &GridSpec, forward: bool) {
    let counts = grid.counts();
    let st = strides(&counts);
    let mut planner = FftPlanner::new();
    for (j, axis) in grid.axes.iter().enumerate() {
        let m = axis.count;
        let fft = if forward { planner.plan_fft_forward(m) } else { planner.plan_fft_inverse(m) };
        let freq = FrequencyAxis::dual_of(axis.step, m).expect("validated window");
        let sign = if forward { -1.0 } else { 1.0 };
        // e^{∓2πi s j/M} with s = 1/2 - M/2, reduced to (-1)^j e^{∓iπj/M}
        let pre: Vec<Complex64> = (0..m)
            .map(|i| {
                let alt = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::from_polar(alt, sign * PI * i as f64 / m as f64)
            })
            .collect();
        let post: Vec<Complex64> = (0..m).map(|k| Complex64::from_polar(1.0, sign * freq.freq(k) * axis.origin)).collect();
        let scale = if forward { axis.step } else { freq.step } / (2.0 * PI).sqrt();
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let outer = data.len() / m;
        for o in 0..outer {
            // index of the first element of this line
            let hi = o / st[j];
            let lo = o % st[j];
            let base = hi * st[j] * m + lo;
            if forward {
                for i in 0..m {
                    line[i] = data[base + i * st[j]] * pre[i];
                }
                fft.process(&mut line);
                for k in 0..m {
                    data[base + k * st[j]] = line[k] * post[k] * scale;
                }
            } else {
                for k in 0..m {
                    line[k] = data[base + k * st[j]] * post[k];
                }
                fft.process(&mut line);
                for i in 0..m {
                    data[base + i * st[j]] = line[i] * pre[i] * scale;
                }
            }
        }
    }
}

fn check_window(grid: &GridSpec) -> Result<()> {
    if grid.axes.iter().any(|a| a.count % 2 != 0 || a.count < 2) {
        return Err(invalid("Fourier windows need an even number of points per axis"));
    }
    Ok(())
}

/// Forward transform of real samples on `grid`.
pub fn forward(samples: &[f64], grid: &GridSpec) -> Result<Vec<Complex64>> {
    check_window(grid)?;
    if samples.len() != grid.len() {
        return Err(Error::GridMismatch("sample count does not match the window".into()));
    }
    let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, grid, true);
    Ok(data)
}

/// Inverse of [`forward`], back onto `grid`.
pub fn inverse(spectrum: &[Complex64], grid: &GridSpec) -> Result<Vec<Complex64>> {
    check_window(grid)?;
    if spectrum.len() != grid.len() {
        return Err(Error::GridMismatch("spectrum size does not match the window".into()));
    }
    let mut data = spectrum.to_vec();
    transform(&mut data, grid, false);
    Ok(data)
}

/// γ(u) = Σ p |ĝ(x, u)|² from the kernel sampled on the window `grid`.
pub fn spectral_from_kernel(kernel: &Kernel, grid: &GridSpec) -> Result<SpectralDensity> {
    check_window(grid)?;
    if kernel.dim() != grid.dim() {
        return Err(Error::GridMismatch("kernel and window dimensions differ".into()));
    }
    let axes = axis_windows(grid)?;
    let mut values = vec![0.0; grid.len()];
    let inside = kernel.sample_on(grid);
    for ((_, p), samples) in kernel.mixing.nodes().iter().zip(&inside) {
        let spec = forward(samples, grid)?;
        for (v, c) in values.iter_mut().zip(&spec) {
            *v += p * c.norm_sqr();
        }
    }
    let energy = |g: &GridSpec, tables: &[Vec<f64>]| -> f64 {
        kernel.mixing.nodes().iter().zip(tables).map(|((_, p), t)| p * t.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() * g.cell_volume()
    };
    let wide = grid.dilated();
    let e_in = energy(grid, &inside);
    let e_wide = energy(&wide, &kernel.sample_on(&wide));
    let tail_fraction = if e_wide > 0.0 { ((e_wide - e_in) / e_wide).max(0.0) } else { 0.0 };
    Ok(SpectralDensity {
        axes,
        values,
        tag: SpectralTag::Tabulated,
        lag_grid: Some(grid.clone()),
        tail_fraction,
        aliasing_warning: tail_fraction > ALIASING_TOL,
    })
}

/// Correlation Σ γ(u) cos(u·h) / Σ γ(u) at each lag.
pub fn correlation_from_spectral(gamma: &SpectralDensity, lags: &[Vec<f64>]) -> Result<Vec<f64>> {
    let total: f64 = gamma.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("spectral density has no mass".into()));
    }
    let freqs: Vec<(Vec<f64>, f64)> = gamma
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (gamma.frequency(i), *v))
        .collect();
    lags.iter()
        .map(|h| {
            if h.len() != gamma.dim() {
                return Err(Error::GridMismatch("lag dimension differs from the spectrum".into()));
            }
            if h.iter().all(|v| *v == 0.0) {
                return Ok(1.0);
            }
            let s: f64 = freqs.iter().map(|(u, v)| v * u.iter().zip(h).map(|(a, b)| a * b).sum::<f64>().cos()).sum();
            Ok(s / total)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Root {
    Even,
    Odd,
}

/// A designed kernel with its window and the normalised spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignedKernel {
    pub kernel: Kernel,
    pub grid: GridSpec,
    /// Transform of R/R(0) on the dual lattice, after clipping.
    pub spectrum: Vec<f64>,
    pub clipped: usize,
}

fn design_1d(table: &[f64], step: f64, root: Root) -> Result<(GridSpec, Vec<f64>, Vec<f64>, usize)> {
    let n = table.len();
    if n < 2 {
        return Err(invalid("covariance table needs at least two lags"));
    }
    if !(step > 0.0) {
        return Err(invalid("lag step must be positive"));
    }
    let r0 = table[0];
    if !(r0 > 0.0) || table.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotCovariance(format!("R(0) = {r0} must be positive and finite")));
    }
    let m = 2 * n;
    let grid = GridSpec::new(vec![Axis::new(-(n as f64) * step, step, m)?])?;
    // z_0 = -nΔ has no mirror image in the window and is left at zero.
    let samples: Vec<f64> = (0..m)
        .map(|j| {
            let lag = (j as i64 - n as i64).unsigned_abs() as usize;
            if lag < n {
                table[lag] / r0
            } else {
                0.0
            }
        })
        .collect();
    let spec = forward(&samples, &grid)?;
    let freq = FrequencyAxis::dual_of(step, m)?;
    let mut clipped = 0;
    let mut gamma = Vec::with_capacity(m);
    for (k, c) in spec.iter().enumerate() {
        let v = c.re;
        if v < -NEGATIVE_TOL {
            return Err(Error::NotCovariance(format!(
                "transform is {v:.3e} at frequency {:.4}; not a covariance function",
                freq.freq(k)
            )));
        }
        if v < 0.0 {
            clipped += 1;
        }
        gamma.push(v.max(0.0));
    }
    let c = (2.0 * PI).powf(-0.25);
    let root_spec: Vec<Complex64> = gamma
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let a = g.sqrt() * c;
            match root {
                Root::Even => Complex64::new(a, 0.0),
                Root::Odd => Complex64::new(0.0, -freq.freq(k).signum() * a),
            }
        })
        .collect();
    let f = inverse(&root_spec, &grid)?;
    let values: Vec<f64> = f.iter().map(|c| c.re * r0.sqrt()).collect();
    Ok((grid, values, gamma, clipped))
}

/// Kernel whose moving average has covariance R, from a one-sided table
/// R(0), R(Δ), …, R((n-1)Δ). The table is mirrored onto a window of 2n
/// points; the kernel is the inverse transform of the even or odd square
/// root of the spectrum.
pub fn kernel_from_covariance(table: &[f64], step: f64, root: Root) -> Result<DesignedKernel> {
    let (grid, values, spectrum, clipped) = design_1d(table, step, root)?;
    let kernel = Kernel::fixed(KernelFamily::Tabulated { grid: grid.clone(), values })?;
    Ok(DesignedKernel { kernel, grid, spectrum, clipped })
}

/// Tensor-product design for a separable covariance R(h) = Π R_j(h_j).
pub fn kernel_from_separable_covariance(tables: &[(Vec<f64>, f64)], root: Root) -> Result<DesignedKernel> {
    if tables.is_empty() {
        return Err(invalid("need at least one axis"));
    }
    let parts: Vec<_> = tables.iter().map(|(t, s)| design_1d(t, *s, root)).collect::<Result<_>>()?;
    let axes: Vec<Axis> = parts.iter().map(|p| p.0.axes[0].clone()).collect();
    let grid = GridSpec::new(axes)?;
    let counts = grid.counts();
    let st = strides(&counts);
    let mut values = vec![1.0; grid.len()];
    let mut spectrum = vec![1.0; grid.len()];
    for (flat, (v, s)) in values.iter_mut().zip(spectrum.iter_mut()).enumerate() {
        for (j, p) in parts.iter().enumerate() {
            let i = (flat / st[j]) % counts[j];
            *v *= p.1[i];
            *s *= p.2[i];
        }
    }
    let clipped = parts.iter().map(|p| p.3).sum();
    let kernel = Kernel::fixed(KernelFamily::Tabulated { grid: grid.clone(), values })?;
    Ok(DesignedKernel { kernel, grid, spectrum, clipped })
}

/// (1/2π) Σ_k C(2H, k) (-1)^{k-1} (k - H) / ((k - H)² + w²), summed until
/// five consecutive terms fall below `tol` past k = 2H + 2.
pub fn selfsim_spectral(hurst: f64, w: f64, tol: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::Domain(format!("H = {hurst} must lie in (0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let a = 2.0 * hurst;
    let mut binom = 1.0;
    let mut sum = 0.0;
    let mut small = 0;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let d = kf - hurst;
        let term = binom * sign * d / (d * d + w * w);
        sum += term;
        if term.abs() < tol {
            small += 1;
        } else {
            small = 0;
        }
        if small >= 5 && kf > a + 2.0 {
            break;
        }
        if k > 50_000_000 {
            return Err(Error::Numerical("spectral series did not converge".into()));
        }
        binom *= (a - kf) / (kf + 1.0);
        k += 1;
    }
    Ok(sum / (2.0 * PI))
}

/// Tabulation of [`selfsim_spectral`] on a frequency lattice.
pub fn selfsim_density(hurst: f64, axis: FrequencyAxis, tol: f64) -> Result<SpectralDensity> {
    let values = axis
        .freqs()
        .iter()
        .map(|&w| {
            let v = selfsim_spectral(hurst, w, tol)?;
            if v < -NEGATIVE_TOL {
                return Err(Error::Numerical(format!("spectral series is {v:.3e} at w = {w}")));
            }
            Ok(v.max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectralDensity {
        axes: vec![axis],
        values,
        tag: SpectralTag::SelfSimilarSeries { hurst },
        lag_grid: None,
        tail_fraction: 0.0,
        aliasing_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(step: f64, count: usize, origin: f64) -> GridSpec {
        GridSpec::new(vec![Axis::new(origin, step, count).unwrap()]).unwrap()
    }

    #[test]
    fn transform_pair_is_exact() {
        let grid = GridSpec::new(vec![Axis::new(-1.3, 0.1, 16).unwrap(), Axis::new(0.2, 0.25, 8).unwrap()]).unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let spec = forward(&f, &grid).unwrap();
        let back = inverse(&spec, &grid).unwrap();
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
        // Parseval
        let du: f64 = axis_windows(&grid).unwrap().iter().map(|a| a.step).product();
        let lhs: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() * du;
        let rhs: f64 = f.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn transform_matches_direct_sum() {
        let grid = window(0.3, 10, -1.4);
        let f: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        let spec = forward(&f, &grid).unwrap();
        let freq = FrequencyAxis::dual_of(0.3, 10).unwrap();
        for k in 0..10 {
            let u = freq.freq(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in f.iter().enumerate() {
                let z = grid.axes[0].coord(j);
                acc += Complex64::from_polar(*v, -u * z);
            }
            acc *= 0.3 / (2.0 * PI).sqrt();
            assert!((acc - spec[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn supou_spectrum() {
        let step = 0.005;
        let grid = window(step, 1 << 15, -(1 << 14) as f64 * step);
        let k = Kernel::sup_ou(1.0).unwrap();
        let s = spectral_from_kernel(&k, &grid).unwrap();
        assert!(s.asymmetry() < 1e-10);
        assert!(!s.aliasing_warning);
        let ratio = s.eval(&[0.0]) / s.eval(&[1.0]);
        assert!((ratio - 2.0).abs() < 1e-2, "{ratio}");
        // 1/(2π(1+u²)) at u = 0 up to the O(Δ) jump bias
        assert!((s.eval(&[0.0]) - 1.0 / (2.0 * PI)).abs() < 1e-2 / (2.0 * PI));
        let rho = correlation_from_spectral(&s, &[vec![0.0], vec![1.0], vec![200.0 * step]]).unwrap();
        assert_eq!(rho[0], 1.0);
        assert!((rho[1] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((rho[2] - (-1.0f64).exp()).abs() < 1e-9);
        // Plancherel against Σ g̃ Δz
        let plancherel = s.integral();
        let direct: f64 = (0..grid.len()).map(|i| k.g_tilde(&grid.coords(i))).sum::<f64>() * step;
        assert!((plancherel - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn zero_kernel_spectrum() {
        let grid = window(0.1, 64, -3.2);
        let k = Kernel::fixed(KernelFamily::Tabulated { grid: grid.clone(), values: vec![0.0; 64] }).unwrap();
        let s = spectral_from_kernel(&k, &grid).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
        assert!(correlation_from_spectral(&s, &[vec![1.0]]).is_err());
    }

    #[test]
    fn cauchy_spectrum_gives_exponential_correlation() {
        let axis = FrequencyAxis::new(0.005, 400_000).unwrap();
        let s = SpectralDensity::from_fn(vec![axis], |u| 2.0 / PI / (1.0 + 4.0 * u[0] * u[0]), SpectralTag::Tabulated).unwrap();
        let rho = correlation_from_spectral(&s, &[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(rho[0], 1.0);
        // truncation beyond |u| = 1000 leaves about 1/(1000π)
        assert!((rho[1] - (-1.0f64).exp()).abs() < 5e-4, "{}", rho[1]);
    }

    fn roundtrip(table: &[f64], step: f64, root: Root) -> (DesignedKernel, Vec<f64>) {
        let d = kernel_from_covariance(table, step, root).unwrap();
        let s = spectral_from_kernel(&d.kernel, &d.grid).unwrap();
        let lags: Vec<Vec<f64>> = (0..table.len()).map(|m| vec![m as f64 * step]).collect();
        (d, correlation_from_spectral(&s, &lags).unwrap())
    }

    #[test]
    fn design_roundtrip_gaussian_and_exponential() {
        let step = 0.05;
        let n = 600;
        let gauss: Vec<f64> = (0..n).map(|m| 2.0 * (-0.5 * (m as f64 * step).powi(2)).exp()).collect();
        let expo: Vec<f64> = (0..n).map(|m| (-(m as f64 * step)).exp()).collect();
        for table in [&gauss, &expo] {
            let (even, re) = roundtrip(table, step, Root::Even);
            let (odd, ro) = roundtrip(table, step, Root::Odd);
            let interior = (0.8 * n as f64) as usize;
            for m in 0..interior {
                assert!((re[m] - table[m] / table[0]).abs() < 1e-3, "even lag {m}");
                assert!((ro[m] - re[m]).abs() < 1e-10, "odd vs even lag {m}");
            }
            // symmetry of the designed kernels about z = 0
            let vals = |d: &DesignedKernel| match &d.kernel.family {
                KernelFamily::Tabulated { values, .. } => values.clone(),
                _ => unreachable!(),
            };
            let (ve, vo) = (vals(&even), vals(&odd));
            let c = n; // index of z = 0
            for j in 1..n {
                assert!((ve[c + j] - ve[c - j]).abs() < 1e-10);
                assert!((vo[c + j] + vo[c - j]).abs() < 1e-10);
            }
            assert!(vo[c].abs() < 1e-10);
        }
        // the even root of a Gaussian covariance is Gaussian: f ∝ e^{-z²}
        let d = kernel_from_covariance(&gauss, step, Root::Even).unwrap();
        let f0 = d.kernel.eval(&[], &[0.0]);
        for &z in &[0.5, 1.0, 1.5] {
            assert!((d.kernel.eval(&[], &[z]) / f0 - (-z * z).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_covariance() {
        let table: Vec<f64> = (0..200).map(|m| if m <= 20 { 1.0 } else { 0.0 }).collect();
        let err = kernel_from_covariance(&table, 0.05, Root::Even).unwrap_err();
        assert!(matches!(err, Error::NotCovariance(_)));
        assert!(err.to_string().contains("not a covariance"));
    }

    #[test]
    fn separable_design() {
        let step = 0.1;
        let t1: Vec<f64> = (0..200).map(|m| (-(m as f64 * step)).exp()).collect();
        let t2: Vec<f64> = (0..100).map(|m| (-0.5 * (m as f64 * step).powi(2)).exp()).collect();
        let d = kernel_from_separable_covariance(&[(t1.clone(), step), (t2.clone(), step)], Root::Even).unwrap();
        let s = spectral_from_kernel(&d.kernel, &d.grid).unwrap();
        let rho = correlation_from_spectral(&s, &[vec![0.3, 0.2], vec![1.0, 0.5]]).unwrap();
        assert!((rho[0] - t1[3] * t2[2]).abs() < 1e-3);
        assert!((rho[1] - t1[10] * t2[5]).abs() < 1e-3);
    }

    #[test]
    fn selfsim_half_matches_closed_form() {
        for i in 0..=400 {
            let w = -10.0 + 0.05 * i as f64;
            let v = selfsim_spectral(0.5, w, 1e-14).unwrap();
            let exact = 2.0 / PI / (1.0 + 4.0 * w * w);
            assert!((v - exact).abs() < 1e-8, "w={w}");
        }
        assert!((selfsim_spectral(0.5, 0.0, 1e-14).unwrap() - 2.0 / PI).abs() < 1e-12);
        assert!((selfsim_spectral(0.5, 1.0, 1e-14).unwrap() - 2.0 / (5.0 * PI)).abs() < 1e-12);
        assert!(selfsim_spectral(1.0, 0.0, 1e-10).is_err());
        assert!(selfsim_spectral(0.0, 0.0, 1e-10).is_err());
    }

    #[test]
    fn selfsim_nonnegative() {
        for h in 1..=9 {
            let hurst = h as f64 / 10.0;
            for i in 0..200 {
                let w = -10.0 + 0.1 * i as f64;
                assert!(selfsim_spectral(hurst, w, 1e-12).unwrap() >= -1e-12, "H={hurst} w={w}");
            }
        }
    }
}
