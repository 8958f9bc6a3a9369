//! Gamma and lower incomplete gamma functions.
//!
//! The lower incomplete gamma uses the power series for `b < a + 1` and a
//! modified-Lentz continued fraction for the upper tail otherwise.

use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the complete gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Complete gamma function for `x > 0`.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Lower incomplete gamma `∫_0^b t^{a-1} e^{-t} dt`.
///
/// `b = f64::INFINITY` yields the complete gamma function.
pub fn lower_incomplete_gamma(a: f64, b: f64) -> Result<f64> {
    let p = regularized_lower_gamma(a, b)?;
    Ok(p * gamma(a))
}

/// Regularized lower incomplete gamma `P(a, b) = γ(a, b) / Γ(a)`.
pub fn regularized_lower_gamma(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(b >= 0.0) {
        return Err(Error::domain(format!("incomplete gamma needs b >= 0, got {b}")));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    if b.is_infinite() {
        return Ok(1.0);
    }
    let log_prefactor = -b + a * b.ln() - ln_gamma(a);
    if b < a + 1.0 {
        Ok(log_prefactor.exp() * series(a, b))
    } else {
        Ok(1.0 - log_prefactor.exp() * upper_continued_fraction(a, b))
    }
}

// Σ_n b^n / (a (a+1) … (a+n))
fn series(a: f64, b: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= b / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

// 1 / (b + 1 - a - 1(1-a) / (b + 3 - a - 2(2-a) / (b + 5 - a - …)))
fn upper_continued_fraction(a: f64, b: f64) -> f64 {
    let mut bn = b + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / bn;
    let mut h = d;
    for n in 1..MAX_ITER {
        let an = -(n as f64) * (n as f64 - a);
        bn += 2.0;
        d = an * d + bn;
        if d.abs() < TINY {
            d = TINY;
        }
        c = bn + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
