//! Rectangle probabilities of standard multivariate normal vectors, dim ≤ 4.

use super::corr::CorrelationMatrix;
use super::normal::{bvn_rectangle, std_normal_cdf, std_normal_quantile_sat};
use super::quadrature::integrate_adaptive;
use crate::error::{Error, Result};

/// P(lower < Z ≤ upper) for Z ~ N(0, corr). Bounds may be infinite.
pub fn mvn_rectangle(lower: &[f64], upper: &[f64], corr: &CorrelationMatrix) -> Result<f64> {
    let d = corr.dim();
    if lower.len() != d || upper.len() != d {
        return Err(Error::LengthMismatch(lower.len().max(upper.len()), d));
    }
    if d > 4 {
        return Err(Error::UnsupportedDimension(d));
    }
    if lower
        .iter()
        .zip(upper)
        .any(|(a, b)| a.is_nan() || b.is_nan())
    {
        return Err(Error::Domain("NaN rectangle bound".into()));
    }
    Ok(rect(lower, upper, &corr.rows(), 1e-11))
}

/// Same as [`mvn_rectangle`] on a raw correlation array (validity assumed).
pub(crate) fn rect(a: &[f64], b: &[f64], r: &[Vec<f64>], tol: f64) -> f64 {
    let d = a.len();
    if a.iter().zip(b).any(|(x, y)| x >= y) {
        return 0.0;
    }
    // drop coordinates that impose no constraint
    let active: Vec<usize> = (0..d)
        .filter(|&i| !(a[i] == f64::NEG_INFINITY && b[i] == f64::INFINITY))
        .collect();
    if active.len() < d {
        let a2: Vec<f64> = active.iter().map(|&i| a[i]).collect();
        let b2: Vec<f64> = active.iter().map(|&i| b[i]).collect();
        let r2: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| active.iter().map(|&j| r[i][j]).collect())
            .collect();
        return rect(&a2, &b2, &r2, tol);
    }
    match d {
        0 => 1.0,
        1 => uni(a[0], b[0]),
        2 => bvn_rectangle(a[0], b[0], a[1], b[1], r[0][1]).max(0.0),
        _ => {
            // condition on the coordinate with the smallest marginal probability
            let k = (0..d)
                .min_by(|&i, &j| uni(a[i], b[i]).total_cmp(&uni(a[j], b[j])))
                .unwrap();
            let rest: Vec<usize> = (0..d).filter(|&i| i != k).collect();
            let s: Vec<f64> = rest
                .iter()
                .map(|&i| (1.0 - r[i][k] * r[i][k]).max(1e-20).sqrt())
                .collect();
            let rc: Vec<Vec<f64>> = rest
                .iter()
                .enumerate()
                .map(|(p, &i)| {
                    rest.iter()
                        .enumerate()
                        .map(|(q, &j)| {
                            if p == q {
                                1.0
                            } else {
                                ((r[i][j] - r[i][k] * r[j][k]) / (s[p] * s[q])).clamp(-1.0, 1.0)
                            }
                        })
                        .collect()
                })
                .collect();
            let wa = std_normal_cdf(a[k]);
            let wb = std_normal_cdf(b[k]);
            let mut la = vec![0.0; rest.len()];
            let mut ub = vec![0.0; rest.len()];
            let inner_tol = tol * 0.1;
            integrate_adaptive(
                |w| {
                    let z = std_normal_quantile_sat(w);
                    for (p, &i) in rest.iter().enumerate() {
                        let m = r[i][k] * z;
                        la[p] = (a[i] - m) / s[p];
                        ub[p] = (b[i] - m) / s[p];
                    }
                    rect(&la, &ub, &rc, inner_tol)
                },
                wa,
                wb,
                tol,
            )
            .max(0.0)
        }
    }
}

fn uni(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    // difference taken in the tail where it is most accurate
    if a > 0.0 {
        (std_normal_cdf(-a) - std_normal_cdf(-b)).max(0.0)
    } else {
        (std_normal_cdf(b) - std_normal_cdf(a)).max(0.0)
    }
}
