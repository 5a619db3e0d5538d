use crate::error::{Error, Result};

/// Solve `f(x) = target` for a nondecreasing `f` on `[lo, hi]`.
///
/// Bisection safeguarded Illinois (regula falsi) steps; stops when
/// `|f(x) − target| < 1e-9·tol_scale` or the bracket is narrower than 1e-12.
pub fn find_root_increasing<F: FnMut(f64) -> f64>(
    f: F,
    target: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    find_root_increasing_tol(f, target, lo, hi, 1e-9, 1e-12)
}

pub fn find_root_increasing_tol<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    lo: f64,
    hi: f64,
    ftol: f64,
    xtol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa > 0.0 || fb < 0.0 || fa.is_nan() || fb.is_nan() {
        return Err(Error::BadBracket { lo, hi });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let width = b - a;
        if width < xtol {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        // keep secant steps well inside the bracket, otherwise bisect
        if !(x > a + 0.01 * width && x < b - 0.01 * width) {
            x = 0.5 * (a + b);
        }
        let fx = f(x) - target;
        if fx.is_nan() {
            return Err(Error::NoConvergence);
        }
        if fx.abs() < ftol {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}
