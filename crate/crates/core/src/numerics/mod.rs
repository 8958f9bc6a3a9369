//! Scalar numerical utilities shared by the analytic model and the optimizers.

mod gamma;
mod quad;

pub use gamma::{gamma, ln_gamma, lower_incomplete_gamma, regularized_lower_gamma};
pub use quad::{integrate, Quadrature, QuadratureSpec};

use crate::error::{Error, Result};
use std::f64::consts::PI;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 2.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "path-loss exponent must exceed 2 for the interference integral to converge, got {alpha}"
        )))
    }
}

/// `∫_0^{upper} q / (1 + s^{p/(p-1)}) ds` with `p = α/2`, `q = 1/(p-1)`.
///
/// This is `∫_{upper^{-(1/(p-1))}}^∞ du / (1 + u^p)` after `u = s^{-q}`, which
/// maps the infinite tail onto a finite interval with a bounded integrand.
fn mapped_tail(alpha: f64, upper: f64, spec: QuadratureSpec) -> f64 {
    let p = alpha / 2.0;
    let q = 1.0 / (p - 1.0);
    let k = p / (p - 1.0);
    let f = |s: f64| q / (1.0 + s.powf(k));
    if upper <= 1.0 {
        integrate(f, 0.0, upper, spec).value
    } else {
        // The integrand bends sharply at s = 1 when α is close to 2.
        integrate(f, 0.0, 1.0, spec).value + integrate(f, 1.0, upper, spec).value
    }
}

/// Interference coefficient of same-group D2D interferers,
/// `γ^{2/α} ∫_{γ^{-2/α}}^∞ du / (1 + u^{α/2})`.
pub fn theta_interference(alpha: f64, gamma_th: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(gamma_th >= 0.0) {
        return Err(Error::domain(format!("SIR threshold must be >= 0, got {gamma_th}")));
    }
    if gamma_th == 0.0 {
        return Ok(0.0);
    }
    let p = alpha / 2.0;
    // Lower limit a = γ^{-1/p} maps to s = a^{-(p-1)} = γ^{1 - 1/p}.
    let upper = gamma_th.powf(1.0 - 1.0 / p);
    Ok(gamma_th.powf(1.0 / p) * mapped_tail(alpha, upper, QuadratureSpec::default()))
}

/// `∫_0^∞ du / (1 + u^{α/2}) = (2π/α) / sin(2π/α)`.
pub fn full_line_integral(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let w = 2.0 * PI / alpha;
    Ok(w / w.sin())
}

/// Quadrature evaluation of [`full_line_integral`]: `[0, 1]` directly plus the
/// mapped tail over `[1, ∞)`.
pub fn full_line_integral_quadrature(alpha: f64, spec: QuadratureSpec) -> Result<f64> {
    check_alpha(alpha)?;
    let p = alpha / 2.0;
    let head = integrate(|u: f64| 1.0 / (1.0 + u.powf(p)), 0.0, 1.0, spec).value;
    Ok(head + mapped_tail(alpha, 1.0, spec))
}

/// Interference coefficient of the underlaid base stations,
/// `(γ p_B/p_t)^{2/α} ∫_0^∞ du / (1 + u^{α/2})`.
pub fn theta_bs(alpha: f64, gamma_th: f64, power_ratio: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(gamma_th >= 0.0) {
        return Err(Error::domain(format!("SIR threshold must be >= 0, got {gamma_th}")));
    }
    if !(power_ratio > 0.0) {
        return Err(Error::domain(format!("power ratio must be > 0, got {power_ratio}")));
    }
    Ok((gamma_th * power_ratio).powf(2.0 / alpha) * full_line_integral(alpha)?)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]`.
///
/// When three probes show `f(lo) < f(mid) < f(hi)` and `f` still rises over
/// the last `tol` before `hi`, the function is taken as increasing and `hi`
/// is returned. Otherwise a golden-section search locates the maximizer to
/// within `tol`; the endpoints compete with the interior result and ties go
/// to the leftmost point.
pub fn bisect_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::domain(format!("bisect_max needs lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("bisect_max needs tol > 0, got {tol}")));
    }
    let f_lo = f(lo);
    let f_hi = f(hi);
    let f_mid = f(0.5 * (lo + hi));
    if f_lo < f_mid && f_mid < f_hi && f(hi - tol.min(0.5 * (hi - lo))) < f_hi {
        return Ok(hi);
    }

    let mut best = (lo, f_lo);
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx > best.1 || (fx == best.1 && x < best.0) {
            *best = (x, fx);
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    consider(hi, f_hi, &mut best);
    Ok(best.0)
}

/// Euclidean projection of `z` onto `{c : Σ c = total, 0 ≤ c ≤ caps}`.
pub fn project_capped_simplex(z: &[f64], caps: &[f64], total: f64) -> Result<Vec<f64>> {
    let cap_sum: f64 = caps.iter().sum();
    if z.len() != caps.len() || total < 0.0 || total > cap_sum * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::domain(format!(
            "cannot project onto the capped simplex with total {total} and caps summing to {cap_sum}"
        )));
    }
    let mass = |shift: f64| -> f64 {
        z.iter()
            .zip(caps)
            .map(|(&zi, &ci)| (zi - shift).clamp(0.0, ci))
            .sum()
    };
    // mass is nonincreasing in the shift; bracket the root.
    let mut lo = z.iter().zip(caps).map(|(zi, ci)| zi - ci).fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (lo.abs() + hi.abs()) {
            break;
        }
    }
    let shift = 0.5 * (lo + hi);
    let mut c: Vec<f64> = z
        .iter()
        .zip(caps)
        .map(|(&zi, &ci)| (zi - shift).clamp(0.0, ci))
        .collect();
    // Spread the rounding residue over coordinates strictly inside their box.
    let residue = total - c.iter().sum::<f64>();
    let free: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0 && c[i] < caps[i]).collect();
    if !free.is_empty() {
        let each = residue / free.len() as f64;
        for i in free {
            c[i] = (c[i] + each).clamp(0.0, caps[i]);
        }
    }
    Ok(c)
}
