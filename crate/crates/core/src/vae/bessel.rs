//! Log-domain modified Bessel functions of the first kind.
//!
//! Below `ASYMPTOTIC_THRESHOLD` the ascending series is summed with the
//! leading `(x/2)^nu` factored out, so `log I_nu` stays finite down to
//! `x = 0`. Above it, Hankel's large-argument expansion covers the low
//! orders (`4 nu^2 <= x`), Debye's uniform expansion covers large orders,
//! and the remaining band falls back to the (always convergent) series.

use std::f64::consts::PI;

pub const ASYMPTOTIC_THRESHOLD: f64 = 20.0;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    let t = x + 7.5;
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `log sum_k (x^2/4)^k / (k! Gamma(nu + k + 1))`, i.e. `log I_nu(x)` with the
/// `(x/2)^nu` factor removed. Finite for every `x >= 0`.
pub fn log_series_core(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    // Terms peak near k* ~ x/2; sum relative to the first term then rescale.
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        term *= q / (k * (nu + k));
        sum += term;
        if sum > 1e250 {
            log_scale += sum.ln();
            term /= sum;
            sum = 1.0;
        }
        if term < sum * 1e-17 && k > 0.5 * x {
            break;
        }
    }
    log_scale + sum.ln() - ln_gamma(nu + 1.0)
}

fn log_hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0f64;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * x);
        if next.abs() >= term.abs() || next == 0.0 {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        k += 1.0;
    }
    x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
}

fn log_debye(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = (1.0 + z * z).sqrt();
    let t = 1.0 / root;
    let eta = root + (z / (1.0 + root)).ln();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0;
    let u3 = t * t2 * (30375.0 - 369_603.0 * t2 + 765_765.0 * t2 * t2 - 425_425.0 * t2 * t2 * t2)
        / 414_720.0;
    let u4 = t2
        * t2
        * (4_465_125.0 - 94_121_676.0 * t2 + 349_922_430.0 * t2.powi(2)
            - 446_185_740.0 * t2.powi(3)
            + 185_910_725.0 * t2.powi(4))
        / 39_813_120.0;
    let series = 1.0 + u1 / nu + u2 / nu.powi(2) + u3 / nu.powi(3) + u4 / nu.powi(4);
    nu * eta - 0.5 * (2.0 * PI * nu).ln() - 0.5 * root.ln() + series.ln()
}

/// `log I_nu(x)` for `nu >= 0`, `x >= 0`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x >= ASYMPTOTIC_THRESHOLD {
        if 4.0 * nu * nu <= x {
            return log_hankel(nu, x);
        }
        if nu >= 10.0 {
            return log_debye(nu, x);
        }
    }
    nu * (0.5 * x).ln() + log_series_core(nu, x)
}

/// `I_{nu+1}(x) / I_nu(x)`, with the `x -> 0` limit handled by the series.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < ASYMPTOTIC_THRESHOLD {
        return 0.5 * x * (log_series_core(nu + 1.0, x) - log_series_core(nu, x)).exp();
    }
    (log_bessel_i(nu + 1.0, x) - log_bessel_i(nu, x)).exp()
}
