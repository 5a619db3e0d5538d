//! Gamma-distribution helpers on top of statrs' incomplete gamma functions.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::normal::std_normal_quantile_sat;

pub use statrs::function::gamma::ln_gamma as lgamma;

/// P(G ≤ x) for G ~ Gamma(shape, scale).
pub fn gamma_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    gamma_lr(shape, x / scale)
}

/// P(G > x) for G ~ Gamma(shape, scale), accurate in the upper tail.
pub fn gamma_sf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    gamma_ur(shape, x / scale)
}

pub fn gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Inverse of [`gamma_cdf`] in `x` for p ∈ (0, 1).
pub fn gamma_quantile(p: f64, shape: f64, scale: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let a = shape;
    // Wilson–Hilferty start
    let z = std_normal_quantile_sat(p);
    let c = 1.0 / (9.0 * a);
    let mut x = a * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0) || !x.is_finite() {
        x = (p * (ln_gamma(a + 1.0)).exp()).powf(1.0 / a).max(1e-300);
    }
    let lg = ln_gamma(a);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let f = if p < 0.5 {
            gamma_lr(a, x) - p
        } else {
            (1.0 - p) - gamma_ur(a, x)
        };
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if f == 0.0 {
            break;
        }
        let dens = ((a - 1.0) * x.ln() - x - lg).exp();
        let step = f / dens;
        if step.abs() <= 1e-15 * x {
            break;
        }
        let mut xn = x - step;
        if !(xn > lo && xn < hi) || !xn.is_finite() {
            xn = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * x.max(lo) + 1.0
            };
        }
        if xn == x {
            break;
        }
        x = xn;
    }
    x * scale
}
