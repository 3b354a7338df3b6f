//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use vmmma::analytics::{self, CfMode, TypeGLaw};
use vmmma::fourier::{self, Root};
use vmmma::grid::GridSpec;
use vmmma::kernels::{Kernel, KernelFamily};
use vmmma::lamperti::{self, MssIndex};
use vmmma::levy_basis::{CharQuadruplet, LevyFamily};
use vmmma::quadrature::integrate;
use vmmma::simulate::{
    jackknife, replicate, sample_points, ReplicationConfig, Simulator, VmmmaModel, Volatility, VolatilityModel,
    TRUNCATION_TOL,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gamma_volatility() -> Volatility {
    let basis = CharQuadruplet::subordinator(LevyFamily::Gamma { shape: 1.0, rate: 1.0 }).unwrap();
    Volatility::Stochastic(VolatilityModel::new(Kernel::sup_ou(1.0).unwrap(), basis).unwrap())
}

/// supOU rate 1 field with supOU rate 1 / Gamma(1, 1) volatility.
fn reference(step: f64, count: usize) -> Simulator {
    let model = VmmmaModel { kernel_g: Kernel::sup_ou(1.0).unwrap(), volatility: gamma_volatility() };
    Simulator::new(model, GridSpec::uniform(1, 0.0, step, count).unwrap(), TRUNCATION_TOL).unwrap()
}

fn deterministic(step: f64, count: usize) -> Simulator {
    let model = VmmmaModel { kernel_g: Kernel::sup_ou(1.0).unwrap(), volatility: Volatility::Constant { sigma2: 1.0 } };
    Simulator::new(model, GridSpec::uniform(1, 0.0, step, count).unwrap(), TRUNCATION_TOL).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..401 {
        let w = -10.0 + 0.05 * i as f64;
        let v = fourier::selfsim_spectral(0.5, w, 1e-15).unwrap();
        let exact = 2.0 / (PI * (1.0 + 4.0 * w * w));
        worst = worst.max((v - exact).abs());
    }
    outcome(worst < 1e-8, format!("max |error| {worst:.2e} over 401 points"))
}

/// ρ(h) = cosh(Hh) - 2^{2H-1} sinh^{2H}(h/2) as written, for moderate h.
fn rho_direct(hh: f64, h: f64) -> f64 {
    (hh * h).cosh() - 2f64.powf(2.0 * hh - 1.0) * (h / 2.0).sinh().powf(2.0 * hh)
}

/// π^{-1} ∫_0^∞ cos(wh) ρ(h) dh: quadrature on [0, L] and, beyond L, the
/// three leading exponentials of ρ integrated in closed form.
fn rho_fourier_oracle(hh: f64, w: f64) -> f64 {
    let l = 15.0;
    let mut acc = 0.0;
    for k in 0..30 {
        let a = 0.5 * k as f64;
        acc += integrate(|x| (w * x).cos() * rho_direct(hh, x), a, a + 0.5, 1e-13, 1e-11).unwrap();
    }
    let tail = |c: f64| (-c * l).exp() * (c * (w * l).cos() - w * (w * l).sin()) / (c * c + w * w);
    acc += 0.5 * tail(hh) + hh * tail(1.0 - hh) - 0.5 * hh * (2.0 * hh - 1.0) * tail(2.0 - hh);
    acc / PI
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for hh in [0.2, 0.5, 0.8] {
        for i in 0..41 {
            let w = -5.0 + 0.25 * i as f64;
            let series = fourier::selfsim_spectral(hh, w, 1e-14).unwrap();
            worst = worst.max((series - rho_fourier_oracle(hh, w)).abs());
        }
    }
    outcome(worst < 1e-5, format!("max |series - quadrature| {worst:.2e}, H in {{0.2, 0.5, 0.8}}, 41 frequencies each"))
}

fn criterion_3() -> Outcome {
    let step = 0.05;
    let n = 400;
    let cases: [(&str, Box<dyn Fn(f64) -> f64>); 2] =
        [("gaussian", Box::new(|h: f64| (-h * h / 2.0).exp())), ("exponential", Box::new(|h: f64| (-h.abs()).exp()))];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, r) in cases.iter() {
        let table: Vec<f64> = (0..n).map(|i| r(i as f64 * step)).collect();
        let interior = (0.8 * n as f64) as usize;
        let lags: Vec<Vec<f64>> = (0..interior).map(|i| vec![i as f64 * step]).collect();
        let mut recon = Vec::new();
        for root in [Root::Even, Root::Odd] {
            let d = fourier::kernel_from_covariance(&table, step, root).unwrap();
            let gamma = fourier::spectral_from_kernel(&d.kernel, &d.grid).unwrap();
            recon.push(fourier::correlation_from_spectral(&gamma, &lags).unwrap());
        }
        let err = lags.iter().zip(&recon[0]).map(|(l, v)| (v - r(l[0])).abs()).fold(0.0, f64::max);
        let diff = recon[0].iter().zip(&recon[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pass &= err < 1e-3 && diff < 1e-10;
        details.push(format!("{name}: sup error {err:.2e}, even vs odd {diff:.2e}"));
    }
    outcome(pass, details.join("; "))
}

fn criterion_4() -> Outcome {
    let cfg = ReplicationConfig {
        anchor: vec![0.0],
        lags: vec![vec![0.5], vec![1.0], vec![2.0]],
        thetas: vec![],
        laplace_thetas: vec![],
    };
    let mut pass = true;
    let mut details = Vec::new();
    for (name, sim) in [("unit", deterministic(0.25, 9)), ("gamma", reference(0.25, 9))] {
        let s = replicate(&sim, &cfg, 10_000, 404).unwrap();
        let z: Vec<f64> = s.lags.iter().map(|l| l.correlation.z_score((-l.lag[0]).exp())).collect();
        pass &= z.iter().all(|v| *v < 4.0);
        details.push(format!("{name} |z| = {:.2}/{:.2}/{:.2}", z[0], z[1], z[2]));
    }
    outcome(pass, format!("{} at h = 0.5/1/2, 10^4 replications", details.join(", ")))
}

fn criterion_5() -> Outcome {
    let thetas = vec![0.5, 1.0, 2.0];
    let cfg = ReplicationConfig { anchor: vec![0.5], lags: vec![], thetas: thetas.clone(), laplace_thetas: vec![] };
    let sv = reference(0.1, 11);
    let law = TypeGLaw::new(&sv);
    let s = replicate(&sv, &cfg, 20_000, 505).unwrap();
    let mut pass = true;
    let mut z = Vec::new();
    for (e, &th) in s.cf.iter().zip(&thetas) {
        let v = e.value.z_score(law.char_x(th).unwrap());
        pass &= v < 4.0;
        z.push(format!("{v:.2}"));
    }
    let k = s.excess_kurtosis;
    let sv_ok = k.value > 3.0 * k.se;
    let det = replicate(&deterministic(0.1, 11), &cfg, 20_000, 506).unwrap().excess_kurtosis;
    let det_ok = det.value.abs() < 3.0 * det.se;
    outcome(
        pass && sv_ok && det_ok,
        format!(
            "CF |z| = {} at θ = 0.5/1/2; excess kurtosis {:.3} ± {:.3} (stochastic, analytic {:.3}), {:.3} ± {:.3} (deterministic)",
            z.join("/"),
            k.value,
            k.se,
            law.excess_kurtosis_x(),
            det.value,
            det.se
        ),
    )
}

fn criterion_6() -> Outcome {
    let law = TypeGLaw::new(&reference(0.1, 11));
    let grid: Vec<f64> = (0..40).map(|i| 0.1 + 0.1 * i as f64).collect();
    let r = analytics::check_complete_monotonicity(&law, &grid, 4).unwrap();
    let margins: Vec<String> = r.orders.iter().map(|o| format!("{:.1e}", o.worst_margin)).collect();
    outcome(r.pass && r.psi_at_zero.abs() < 1e-10, format!("worst margins by order 0..4: {}", margins.join(", ")))
}

fn criterion_7() -> Outcome {
    let sim = reference(0.1, 11);
    let law = TypeGLaw::new(&sim);
    let mut pass = true;
    let mut z = Vec::new();
    for (k, th) in [[1.0, 1.0], [0.5, -1.5], [2.0, 0.7]].iter().enumerate() {
        let kum = analytics::joint_cf(&sim, &[2, 7], th, CfMode::Kumulant).unwrap().value;
        let mc = analytics::joint_cf(&sim, &[2, 7], th, CfMode::Mc { n_reps: 10_000, master_seed: 700 + k as u64 }).unwrap();
        let v = mc.z_score(kum);
        pass &= v < 4.0;
        z.push(format!("{v:.2}"));
    }
    let mut worst = 0.0f64;
    for th in [0.5, 1.0, 2.0] {
        let kum = analytics::joint_cf(&sim, &[4], &[th], CfMode::Kumulant).unwrap().value;
        worst = worst.max((kum - law.char_x(th).unwrap()).abs());
    }
    pass &= worst < 1e-6;
    outcome(pass, format!("n = 2 kumulant vs mc |z| = {}; n = 1 vs char_X {worst:.1e}", z.join("/")))
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();

    // Roundtrip on a simulated field.
    let step = 2f64.ln() / 4.0;
    let sim = reference(step, 9);
    let (_, x) = sim.replica(&streams(808), 0).unwrap();
    let mut worst = 0.0f64;
    for hh in [0.3, 0.5, 0.7] {
        let h = MssIndex::new(vec![hh]).unwrap();
        let back = lamperti::from_mss(&lamperti::to_mss(&x, &h).unwrap(), &h).unwrap();
        for (a, b) in x.values.iter().zip(&back.values) {
            if *a != 0.0 {
                worst = worst.max(((a - b) / a).abs());
            }
        }
    }
    pass &= worst < 1e-12;
    details.push(format!("roundtrip {worst:.1e}"));

    // Var Y(2t)/Var Y(t) and Var Y(4t)/Var Y(t) at t = 1: lattice indices
    // 0, 4 and 8 of the log grid.
    let rows = sample_points(&sim, &[0, 4, 8], 10_000, 809).unwrap();
    let mut z = Vec::new();
    for hh in [0.3, 0.5, 0.7] {
        let h = MssIndex::new(vec![hh]).unwrap();
        let ys: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let y: Vec<f64> = [0usize, 1, 2].iter().map(|&k| {
                    let t = (sim.target.coords([0, 4, 8][k])[0]).exp();
                    t.powf(h.values()[0]) * r[k]
                }).collect();
                vec![y[0], y[0] * y[0], y[1], y[1] * y[1], y[2], y[2] * y[2]]
            })
            .collect();
        for (a, c) in [(2.0f64, 2usize), (4.0, 4)] {
            let ratio = jackknife(&ys, |m| (m[c + 1] - m[c] * m[c]) / (m[1] - m[0] * m[0]));
            let v = ratio.z_score(a.powf(2.0 * hh));
            pass &= v < 4.0;
            z.push(format!("{v:.2}"));
        }
    }
    details.push(format!("variance ratio |z| = {}", z.join("/")));

    let h = MssIndex::new(vec![0.5]).unwrap();
    let mut incr_worst = 0.0f64;
    for &(t, s) in &[(3.0, 2.0), (1.0, 4.0), (0.3, 0.7), (5.5, 5.5)] {
        let v = lamperti::stat_incr_covariance(&h, 1.3, &[t], &[s]).unwrap();
        incr_worst = incr_worst.max((v - f64::min(t, s) * 1.3).abs() / (f64::min(t, s) * 1.3));
    }
    let exact_example = lamperti::stat_incr_covariance(&h, 1.0, &[3.0], &[2.0]).unwrap() == 2.0;
    pass &= exact_example && incr_worst <= 2.0 * f64::EPSILON;
    details.push(format!("min(t, s) identity: (3, 2) exact {exact_example}, worst relative {incr_worst:.1e}"));

    let rho0 = lamperti::rho_translation_invariant(&MssIndex::new(vec![0.3, 0.6]).unwrap(), &[0.0, 0.0]).unwrap();
    pass &= rho0 == 1.0 && lamperti::rho_translation_invariant(&h, &[0.0]).unwrap() == 1.0;
    details.push(format!("ρ(0) = {rho0}"));
    outcome(pass, details.join("; "))
}

fn streams(seed: u64) -> vmmma::rng::SeedStream {
    vmmma::rng::SeedStream::new(seed)
}

fn criterion_9() -> Outcome {
    let g = Kernel::fixed(KernelFamily::HyperbolicGreen { alpha: 1.0, beta: 1.0, gamma: 0.0, randomized: None }).unwrap();
    let model = VmmmaModel { kernel_g: g, volatility: Volatility::Constant { sigma2: 1.0 } };
    let sim = Simulator::new(model, GridSpec::uniform(2, 0.0, 0.25, 32).unwrap(), TRUNCATION_TOL).unwrap();
    let lags = vec![vec![0.5, 0.0], vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, -0.5]];
    let cfg = ReplicationConfig { anchor: vec![3.0, 3.0], lags, thetas: vec![], laplace_thetas: vec![] };
    let s = replicate(&sim, &cfg, 5_000, 909).unwrap();
    let z: Vec<f64> =
        s.lags.iter().map(|l| l.correlation.z_score((-l.lag[0].abs() - l.lag[1].abs()).exp())).collect();
    outcome(
        z.iter().all(|v| *v < 4.0),
        format!("|z| = {} at 4 lags, 32x32 grid, 5000 replications", z.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join("/")),
    )
}

fn criterion_10() -> Outcome {
    let sim = reference(0.1, 11);
    let cfg = ReplicationConfig { anchor: vec![0.0], lags: vec![vec![0.5], vec![1.0]], thetas: vec![], laplace_thetas: vec![] };
    let s = replicate(&sim, &cfg, 40_000, 1010).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for l in &s.lags {
        let exact = analytics::cov_squares(&sim, &[0.0], &l.lag).unwrap().total.value;
        let semi = analytics::cov_squares_mc(&sim, &[0.0], &l.lag, 10_000, 1011).unwrap().total;
        let z = l.cov_squares.z_score(exact);
        let zs = semi.z_score(exact);
        pass &= z < 4.0 && zs < 4.0;
        details.push(format!(
            "h = {}: MC {:.4} ± {:.4}, two-term {exact:.4} (|z| {z:.2}), volatility-replication estimate |z| {zs:.2}",
            l.lag[0], l.cov_squares.value, l.cov_squares.se
        ));
    }
    outcome(pass, details.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("spectral series closed form", criterion_1, Duration::from_secs(1)),
        ("series vs quadrature", criterion_2, Duration::from_secs(10)),
        ("Fourier roundtrip", criterion_3, Duration::from_secs(60)),
        ("MC correlation invariance to volatility", criterion_4, Duration::from_secs(120)),
        ("type G law", criterion_5, Duration::from_secs(120)),
        ("complete monotonicity", criterion_6, Duration::from_secs(60)),
        ("finite dimensional consistency", criterion_7, Duration::from_secs(120)),
        ("Lamperti suite", criterion_8, Duration::from_secs(120)),
        ("Green's function correlations", criterion_9, Duration::from_secs(600)),
        ("covariance of squares", criterion_10, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
