//! Special functions used by the Green's-function kernels and the Lévy
//! families: modified Bessel K0 and K1, Bessel J0, the exponential integral
//! E1 and a log-complementary error function that stays finite far in the
//! tail.

use std::f64::consts::{FRAC_PI_4, PI};

pub use statrs::function::erf::{erf, erfc};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const K_CROSSOVER: f64 = 2.0;
const J_CROSSOVER: f64 = 8.0;
const J_ASYMPTOTIC: f64 = 30.0;

/// Modified Bessel function of the second kind, order 0. Infinite at 0,
/// NaN for negative arguments.
pub fn bessel_k0(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= K_CROSSOVER {
        k_series(x).0
    } else {
        k_continued_fraction(x).0
    }
}

/// Modified Bessel function of the second kind, order 1.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= K_CROSSOVER {
        k_series(x).1
    } else {
        k_continued_fraction(x).1
    }
}

// Ascending series for (K0, K1):
//   K0 = -(ln(x/2) + γ) I0 + Σ H_k q^k / (k!)^2
//   K1 = 1/x + ln(x/2) I1 - (x/4) Σ (H_k + H_{k+1} - 2γ) q^k / (k!(k+1)!)
// with q = x²/4 and H_k the harmonic numbers.
fn k_series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let ln_half = (0.5 * x).ln();

    let mut i0 = 0.0;
    let mut i1 = 0.0;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut t0 = 1.0; // q^k / (k!)^2
    let mut t1 = 1.0; // q^k / (k!(k+1)!)
    let mut harmonic = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            t0 *= q / (kf * kf);
            t1 *= q / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        let harmonic_next = harmonic + 1.0 / (kf + 1.0);
        i0 += t0;
        i1 += t1;
        s0 += harmonic * t0;
        s1 += (harmonic + harmonic_next - 2.0 * EULER_GAMMA) * t1;
        if t0 < 1e-18 * i0 && t1 < 1e-18 * i1 {
            break;
        }
    }
    let i1 = 0.5 * x * i1;
    let k0 = -(ln_half + EULER_GAMMA) * i0 + s0;
    let k1 = 1.0 / x + ln_half * i1 - 0.25 * x * s1;
    (k0, k1)
}

// Steed's evaluation of Temme's continued fraction CF2 for (K0, K1),
// convergent and fast for x ≥ 2.
fn k_continued_fraction(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..10_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Bessel function of the first kind, order 0.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < J_CROSSOVER {
        j0_series(ax)
    } else if ax < J_ASYMPTOTIC {
        j0_miller(ax)
    } else {
        j0_asymptotic(ax)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

// Miller's backward recurrence normalised by J0 + 2 Σ J_{2k} = 1.
fn j0_miller(x: f64) -> f64 {
    let start = 2 * ((x + 40.0 + 10.0 * x.sqrt()) as usize / 2);
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // `cur` now holds J_{k-1}
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if k == 1 {
            j0 = cur;
        }
        if cur.abs() > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += j0;
    j0 / norm
}

fn j0_asymptotic(x: f64) -> f64 {
    // P ~ Σ (-1)^m a_{2m} / x^{2m}, Q ~ Σ (-1)^m a_{2m+1} / x^{2m+1},
    // a_k = Π_{j≤k} (0 - (2j-1)^2) / (k! 8^k).
    let mut p = 0.0;
    let mut qsum = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= -(odd * odd) / (k as f64 * 8.0 * x);
        }
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => qsum += term,
            2 => p -= term,
            _ => qsum -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let phase = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * phase.cos() - qsum * phase.sin())
}

/// Exponential integral E1(x) = ∫_x^∞ e^{-t}/t dt for x > 0.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..100 {
            let kf = k as f64;
            term *= -x / kf;
            let add = -term / kf;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// ln erfc(x), accurate where erfc underflows.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        // erfc(x) = e^{-x²}/(x√π) · (1 - 1/(2x²) + 3/(4x⁴) - 15/(8x⁶) + …)
        let inv = 1.0 / (2.0 * x * x);
        let mut series = 1.0;
        let mut term = 1.0;
        for k in 1..6 {
            term *= -((2 * k - 1) as f64) * inv;
            series += term;
        }
        -x * x - (x * PI.sqrt()).ln() + series.ln()
    }
}

/// Generalised binomial coefficients C(a, k) for k = 0..n, by the product
/// recurrence C(a, k+1) = C(a, k) (a - k) / (k + 1).
pub fn binomial_series(a: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut c = 1.0;
    out.push(c);
    for k in 0..n {
        c *= (a - k as f64) / (k as f64 + 1.0);
        out.push(c);
    }
    out
}
