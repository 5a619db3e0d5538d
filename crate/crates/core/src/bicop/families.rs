//! Unrotated one-parameter families on the open unit square.
//!
//! Arguments are carried as [`Pt`] pairs (x, 1 − x) so reflections used by the
//! rotated families lose no precision in either tail. All families here are
//! exchangeable, so h1(u, v) = h2(v, u).

use crate::numerics::normal::{bvn_cdf, std_normal_cdf, std_normal_quantile_sat};
use crate::numerics::quadrature::{gauss_legendre, integrate_gl};
use std::sync::OnceLock;

use super::FamilyName;

/// A probability and its complement.
#[derive(Debug, Clone, Copy)]
pub(super) struct Pt {
    pub p: f64,
    pub q: f64,
}

impl Pt {
    pub fn new(x: f64) -> Self {
        let p = x.clamp(super::CLAMP, 1.0 - super::CLAMP);
        Self { p, q: 1.0 - p }
    }

    pub fn flip(self) -> Self {
        Self {
            p: self.q,
            q: self.p,
        }
    }

    fn ln_p(self) -> f64 {
        if self.p < 0.5 {
            self.p.ln()
        } else {
            (-self.q).ln_1p()
        }
    }

    fn ln_q(self) -> f64 {
        if self.q < 0.5 {
            self.q.ln()
        } else {
            (-self.p).ln_1p()
        }
    }

    fn z(self) -> f64 {
        if self.p < 0.5 {
            std_normal_quantile_sat(self.p)
        } else {
            -std_normal_quantile_sat(self.q)
        }
    }
}

#[inline]
fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn softplus(a: f64) -> f64 {
    if a > 35.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

/// ln(eᶻ − 1) for z > 0.
#[inline]
fn ln_expm1(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else {
        z.exp_m1().ln()
    }
}

pub(super) fn cdf(f: FamilyName, t: f64, u: Pt, v: Pt) -> f64 {
    match f {
        FamilyName::Independence => u.p * v.p,
        FamilyName::Gaussian => bvn_cdf(u.z(), v.z(), t),
        FamilyName::Frank => {
            let a = (-t * u.p).exp_m1();
            let b = (-t * v.p).exp_m1();
            let c = (-t).exp_m1();
            -(a * b / c).ln_1p() / t
        }
        FamilyName::Clayton => (-clayton_ln_s(t, u.ln_p(), v.ln_p()) / t).exp(),
        FamilyName::Gumbel => (-gumbel_w(t, -u.ln_p(), -v.ln_p())).exp(),
        FamilyName::Joe => -(joe_ln_s(t, u.ln_q(), v.ln_q()) / t).exp_m1(),
    }
}

/// Survival copula Ĉ(u, v) = u + v − 1 + C(1 − u, 1 − v).
pub(super) fn survival_cdf(f: FamilyName, t: f64, u: Pt, v: Pt) -> f64 {
    match f {
        FamilyName::Independence | FamilyName::Gaussian | FamilyName::Frank => cdf(f, t, u, v),
        FamilyName::Clayton => u.p + v.p + (-clayton_ln_s(t, u.ln_q(), v.ln_q()) / t).exp_m1(),
        FamilyName::Gumbel => u.p + v.p + (-gumbel_w(t, -u.ln_q(), -v.ln_q())).exp_m1(),
        FamilyName::Joe => u.p + v.p - (joe_ln_s(t, u.ln_p(), v.ln_p()) / t).exp(),
    }
}

/// (∂C/∂v, 1 − ∂C/∂v): the conditional cdf of U given V = v and its complement.
pub(super) fn h2(f: FamilyName, t: f64, u: Pt, v: Pt) -> (f64, f64) {
    let from_log = |l: f64| (l.exp(), -l.exp_m1());
    let (h, hc) = match f {
        FamilyName::Independence => (u.p, u.q),
        FamilyName::Gaussian => {
            let m = (u.z() - t * v.z()) / (1.0 - t * t).sqrt();
            (std_normal_cdf(m), std_normal_cdf(-m))
        }
        FamilyName::Frank => {
            let a = (-t * u.p).exp_m1();
            let b = (-t * v.p).exp_m1();
            let c = (-t).exp_m1();
            let den = c + a * b;
            (
                (-t * v.p).exp() * a / den,
                (-t * u.p).exp() * (-t * u.q).exp_m1() / den,
            )
        }
        FamilyName::Clayton => {
            // ln h = −(1 + 1/θ)·ln(1 + v^θ (u^{−θ} − 1))
            let (lu, lv) = (u.ln_p(), v.ln_p());
            from_log(-(1.0 + 1.0 / t) * softplus(t * lv + ln_expm1(-t * lu)))
        }
        FamilyName::Gumbel => {
            // ln h = −y(e^ℓ − 1) + (1 − θ)ℓ with ℓ = ln(w / y)
            let (x, y) = (-u.ln_p(), -v.ln_p());
            let l = softplus(t * (x.ln() - y.ln())) / t;
            from_log(-y * l.exp_m1() + (1.0 - t) * l)
        }
        FamilyName::Joe => {
            // h = (1 + ξ)^{1/θ − 1}(1 − ū^θ), ξ = ū^θ(1 − v̄^θ)/v̄^θ
            let (lub, lvb) = (u.ln_q(), v.ln_q());
            let a = (t * lub).exp();
            let ln_xi = t * lub + (-(t * lvb).exp()).ln_1p() - t * lvb;
            from_log((1.0 / t - 1.0) * softplus(ln_xi) + (-a).ln_1p())
        }
    };
    (h.clamp(0.0, 1.0), hc.clamp(0.0, 1.0))
}

pub(super) fn ln_pdf(f: FamilyName, t: f64, u: Pt, v: Pt) -> f64 {
    match f {
        FamilyName::Independence => 0.0,
        FamilyName::Gaussian => {
            let (x, y) = (u.z(), v.z());
            let s = 1.0 - t * t;
            -0.5 * s.ln() - (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * s)
        }
        FamilyName::Frank => {
            let a = (-t * u.p).exp_m1();
            let b = (-t * v.p).exp_m1();
            let c = (-t).exp_m1();
            let den = c + a * b;
            (-t * c).ln() - t * (u.p + v.p) - 2.0 * den.abs().ln()
        }
        FamilyName::Clayton => {
            let (lu, lv) = (u.ln_p(), v.ln_p());
            let ls = clayton_ln_s(t, lu, lv);
            (1.0 + t).ln() + (-t - 1.0) * (lu + lv) + (-1.0 / t - 2.0) * ls
        }
        FamilyName::Gumbel => {
            let (x, y) = (-u.ln_p(), -v.ln_p());
            let w = gumbel_w(t, x, y);
            -w + (t - 1.0) * (x.ln() + y.ln())
                + x
                + y
                + (1.0 - 2.0 * t) * w.ln()
                + (w + t - 1.0).ln()
        }
        FamilyName::Joe => {
            let (lub, lvb) = (u.ln_q(), v.ln_q());
            let ls = joe_ln_s(t, lub, lvb);
            (1.0 / t - 2.0) * ls + (t - 1.0) * (lub + lvb) + (t - 1.0 + ls.exp()).ln()
        }
    }
}

/// Closed-form solution of h2(u, v) = p for u, where one exists.
pub(super) fn h2_inverse_closed(f: FamilyName, t: f64, p: f64, v: Pt) -> Option<f64> {
    match f {
        FamilyName::Independence => Some(p),
        FamilyName::Gaussian => {
            let x = std_normal_quantile_sat(p);
            Some(std_normal_cdf(t * v.z() + (1.0 - t * t).sqrt() * x))
        }
        FamilyName::Frank => {
            let e = (-t * v.p).exp();
            let c = (-t).exp_m1();
            Some((-(p * c / (p + (1.0 - p) * e)).ln_1p() / t).clamp(0.0, 1.0))
        }
        FamilyName::Clayton => {
            // u = (1 + v^{−θ}(p^{−θ/(1+θ)} − 1))^{−1/θ}
            let g = (-t / (1.0 + t) * p.ln()).exp_m1();
            let a = -t * v.ln_p() + g.ln();
            Some((-softplus(a) / t).exp())
        }
        FamilyName::Gumbel | FamilyName::Joe => None,
    }
}

fn clayton_ln_s(t: f64, lu: f64, lv: f64) -> f64 {
    // ln(u^{−θ} + v^{−θ} − 1)
    let (a, b) = (-t * lu, -t * lv);
    let m = a.max(b);
    if m < 1.0 {
        return (a.exp_m1() + b.exp_m1()).ln_1p();
    }
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

fn gumbel_w(t: f64, x: f64, y: f64) -> f64 {
    // (x^θ + y^θ)^{1/θ}
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == 0.0 {
        return 0.0;
    }
    hi * ((lo / hi).powf(t).ln_1p() / t).exp()
}

fn joe_ln_s(t: f64, lub: f64, lvb: f64) -> f64 {
    // ln(ū^θ + v̄^θ − ū^θ v̄^θ) = ln(a + b(1 − a))
    let la = t * lub;
    let lb = t * lvb;
    logaddexp(la, lb + (-la.exp()).ln_1p())
}

pub(super) fn tau(f: FamilyName, t: f64) -> f64 {
    match f {
        FamilyName::Independence => 0.0,
        FamilyName::Gaussian => std::f64::consts::FRAC_2_PI * t.asin(),
        FamilyName::Clayton => t / (t + 2.0),
        FamilyName::Gumbel => 1.0 - 1.0 / t,
        FamilyName::Frank => {
            if t.abs() < 1e-8 {
                return 0.0;
            }
            let a = t.abs();
            let tau = 1.0 - 4.0 / a * (1.0 - debye1(a));
            tau.copysign(t)
        }
        FamilyName::Joe => joe_tau(t),
    }
}

/// Debye function D₁(x) = (1/x)∫₀ˣ s/(eˢ − 1) ds for x > 0.
pub(crate) fn debye1(x: f64) -> f64 {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let rule = RULE.get_or_init(|| gauss_legendre(32));
    let g = |s: f64| if s == 0.0 { 1.0 } else { s / s.exp_m1() };
    let panels = (x / 5.0).ceil().max(1.0) as usize;
    let h = x / panels as f64;
    let total: f64 = (0..panels)
        .map(|k| integrate_gl(g, k as f64 * h, (k + 1) as f64 * h, rule))
        .sum();
    total / x
}

/// Kendall's τ of the Joe copula: 1 + 2/(2 − θ)·(ψ(2) − ψ(2/θ + 1)).
fn joe_tau(t: f64) -> f64 {
    use statrs::function::gamma::digamma;
    if t <= 1.0 {
        return 0.0;
    }
    if (t - 2.0).abs() < 1e-6 {
        // removable singularity at θ = 2, where τ = 2 − π²/6
        let at2 = 2.0 - std::f64::consts::PI * std::f64::consts::PI / 6.0;
        let d = 1e-5;
        let right = 1.0 + 2.0 / (2.0 - (2.0 + d)) * (digamma(2.0) - digamma(2.0 / (2.0 + d) + 1.0));
        return at2 + (right - at2) / d * (t - 2.0);
    }
    1.0 + 2.0 / (2.0 - t) * (digamma(2.0) - digamma(2.0 / t + 1.0))
}
