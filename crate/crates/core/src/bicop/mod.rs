//! Bivariate one-parameter copulas with rotations.

mod families;

use families::Pt;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::roots::find_root_increasing_tol;

/// Interior clamp applied to copula arguments.
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyName {
    Independence,
    Gaussian,
    Frank,
    Clayton,
    Gumbel,
    Joe,
}

impl FamilyName {
    fn as_str(self) -> &'static str {
        match self {
            FamilyName::Independence => "independence",
            FamilyName::Gaussian => "gaussian",
            FamilyName::Frank => "frank",
            FamilyName::Clayton => "clayton",
            FamilyName::Gumbel => "gumbel",
            FamilyName::Joe => "joe",
        }
    }
}

/// A family together with a rotation in degrees (0, 90, 180 or 270).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CopulaFamily {
    pub name: FamilyName,
    pub rotation: u16,
}

impl CopulaFamily {
    pub const INDEPENDENCE: CopulaFamily = CopulaFamily {
        name: FamilyName::Independence,
        rotation: 0,
    };

    pub fn new(name: FamilyName, rotation: u16) -> Result<Self> {
        let ok = match (name, rotation) {
            (_, r) if ![0, 90, 180, 270].contains(&r) => false,
            (FamilyName::Independence, r) => r == 0,
            (FamilyName::Gaussian | FamilyName::Frank, r) => r == 0 || r == 180,
            _ => true,
        };
        if !ok {
            return Err(Error::UnknownFamily(format!(
                "{}{}",
                name.as_str(),
                rotation
            )));
        }
        Ok(Self { name, rotation })
    }

    /// Default candidate set for tree-wise selection.
    pub fn default_candidates() -> Vec<CopulaFamily> {
        use FamilyName::*;
        [
            (Independence, 0),
            (Gaussian, 0),
            (Frank, 0),
            (Clayton, 0),
            (Clayton, 180),
            (Gumbel, 180),
            (Joe, 180),
        ]
        .into_iter()
        .map(|(n, r)| CopulaFamily {
            name: n,
            rotation: r,
        })
        .collect()
    }

    pub fn is_independence(&self) -> bool {
        self.name == FamilyName::Independence
    }

    /// Number of free parameters.
    pub fn n_params(&self) -> usize {
        usize::from(!self.is_independence())
    }

    /// Open interval searched when fitting θ.
    pub fn fit_bounds(&self) -> (f64, f64) {
        match self.name {
            FamilyName::Independence => (0.0, 0.0),
            FamilyName::Gaussian => (-0.9999, 0.9999),
            FamilyName::Frank => (-50.0, 50.0),
            FamilyName::Clayton => (1e-4, 50.0),
            FamilyName::Gumbel | FamilyName::Joe => (1.0, 50.0),
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        if !theta.is_finite() {
            return false;
        }
        match self.name {
            FamilyName::Independence => true,
            FamilyName::Gaussian => theta > -1.0 && theta < 1.0,
            FamilyName::Frank => theta != 0.0,
            FamilyName::Clayton => theta > 0.0,
            FamilyName::Gumbel | FamilyName::Joe => theta >= 1.0,
        }
    }

    /// Sign of τ induced by the rotation.
    fn tau_sign(&self) -> f64 {
        if self.rotation == 90 || self.rotation == 270 {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rotation == 0 {
            write!(f, "{}", self.name.as_str())
        } else {
            write!(f, "{}{}", self.name.as_str(), self.rotation)
        }
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let split = lower
            .find(|c: char| c.is_ascii_digit())
            .unwrap_or(lower.len());
        let (base, rot) = lower.split_at(split);
        let name = match base {
            "independence" | "indep" => FamilyName::Independence,
            "gaussian" | "normal" => FamilyName::Gaussian,
            "frank" => FamilyName::Frank,
            "clayton" => FamilyName::Clayton,
            "gumbel" => FamilyName::Gumbel,
            "joe" => FamilyName::Joe,
            _ => return Err(Error::UnknownFamily(s.to_string())),
        };
        let rotation = if rot.is_empty() {
            0
        } else {
            rot.parse::<u16>()
                .map_err(|_| Error::UnknownFamily(s.to_string()))?
        };
        CopulaFamily::new(name, rotation).map_err(|_| Error::UnknownFamily(s.to_string()))
    }
}

impl TryFrom<String> for CopulaFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CopulaFamily> for String {
    fn from(f: CopulaFamily) -> Self {
        f.to_string()
    }
}

/// A family with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCopula", into = "RawCopula")]
pub struct BivariateCopula {
    family: CopulaFamily,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCopula {
    family: CopulaFamily,
    theta: f64,
}

impl TryFrom<RawCopula> for BivariateCopula {
    type Error = Error;
    fn try_from(r: RawCopula) -> Result<Self> {
        BivariateCopula::new(r.family, r.theta)
    }
}

impl From<BivariateCopula> for RawCopula {
    fn from(c: BivariateCopula) -> Self {
        RawCopula {
            family: c.family,
            theta: c.theta,
        }
    }
}

impl BivariateCopula {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        if !family.contains(theta) {
            return Err(Error::ParameterOutOfDomain {
                family: family.to_string(),
                theta,
            });
        }
        let theta = if family.is_independence() { 0.0 } else { theta };
        Ok(Self { family, theta })
    }

    pub fn independence() -> Self {
        Self {
            family: CopulaFamily::INDEPENDENCE,
            theta: 0.0,
        }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// True for the independence family and for parameters at which the family
    /// reduces to it (Gumbel/Joe θ = 1, Frank θ → 0, Gaussian ρ = 0).
    pub fn is_independence(&self) -> bool {
        match self.family.name {
            FamilyName::Independence => true,
            FamilyName::Gaussian => self.theta == 0.0,
            FamilyName::Frank => self.theta.abs() < 1e-10,
            FamilyName::Gumbel | FamilyName::Joe => self.theta == 1.0,
            FamilyName::Clayton => false,
        }
    }

    /// Rotation actually applied: Gaussian and Frank are radially symmetric.
    fn rot(&self) -> u16 {
        match self.family.name {
            FamilyName::Gaussian | FamilyName::Frank => 0,
            _ => self.family.rotation,
        }
    }

    /// C(u, v). Exact on the boundary of the unit square.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        if self.is_independence() {
            return u * v;
        }
        let (n, t) = (self.family.name, self.theta);
        let (pu, pv) = (Pt::new(u), Pt::new(v));
        let c = match self.rot() {
            0 => families::cdf(n, t, pu, pv),
            90 => v - families::cdf(n, t, pu.flip(), pv),
            180 => families::survival_cdf(n, t, pu, pv),
            _ => u - families::cdf(n, t, pu, pv.flip()),
        };
        c.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.ln_pdf(u, v).exp()
    }

    pub fn ln_pdf(&self, u: f64, v: f64) -> f64 {
        if self.is_independence() {
            return 0.0;
        }
        let (n, t) = (self.family.name, self.theta);
        let (u, v) = (Pt::new(u), Pt::new(v));
        match self.rot() {
            0 => families::ln_pdf(n, t, u, v),
            90 => families::ln_pdf(n, t, u.flip(), v),
            180 => families::ln_pdf(n, t, u.flip(), v.flip()),
            _ => families::ln_pdf(n, t, u, v.flip()),
        }
    }

    /// (h2, 1 − h2) at interior points.
    fn h2_pair(&self, u: Pt, v: Pt) -> (f64, f64) {
        let (n, t) = (self.family.name, self.theta);
        let swap = |(a, b): (f64, f64)| (b, a);
        match self.rot() {
            0 => families::h2(n, t, u, v),
            90 => swap(families::h2(n, t, u.flip(), v)),
            180 => swap(families::h2(n, t, u.flip(), v.flip())),
            _ => families::h2(n, t, u, v.flip()),
        }
    }

    /// (h1, 1 − h1) at interior points.
    fn h1_pair(&self, u: Pt, v: Pt) -> (f64, f64) {
        let (n, t) = (self.family.name, self.theta);
        let swap = |(a, b): (f64, f64)| (b, a);
        match self.rot() {
            0 => families::h2(n, t, v, u),
            90 => families::h2(n, t, v, u.flip()),
            180 => swap(families::h2(n, t, v.flip(), u.flip())),
            _ => swap(families::h2(n, t, v.flip(), u)),
        }
    }

    /// ∂C/∂u: the conditional cdf of V at v given U = u.
    pub fn h1(&self, u: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return v;
        }
        self.h1_pair(Pt::new(u), Pt::new(v)).0
    }

    /// ∂C/∂v: the conditional cdf of U at u given V = v.
    pub fn h2(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return u;
        }
        self.h2_pair(Pt::new(u), Pt::new(v)).0
    }

    /// Solve h1(u, v) = p for v.
    pub fn h1_inverse(&self, p: f64, u: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return p;
        }
        let pu = Pt::new(u);
        if self.rot() == 0 {
            if let Some(v) = families::h2_inverse_closed(self.family.name, self.theta, p, pu) {
                return v;
            }
        }
        solve_increasing(|v| (self.h1_pair(pu, Pt::new(v)), self.pdf(u, v)), p)
    }

    /// Solve h2(u, v) = p for u.
    pub fn h2_inverse(&self, p: f64, v: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return p;
        }
        let pv = Pt::new(v);
        if self.rot() == 0 {
            if let Some(u) = families::h2_inverse_closed(self.family.name, self.theta, p, pv) {
                return u;
            }
        }
        solve_increasing(|u| (self.h2_pair(Pt::new(u), pv), self.pdf(u, v)), p)
    }

    /// Kendall's τ.
    pub fn tau(&self) -> f64 {
        self.family.tau_sign() * families::tau(self.family.name, self.theta)
    }

    /// `n` draws of (U, V): U uniform, V = h1⁻¹(W | U) with W uniform.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                let w: f64 = rng.sample(Open01);
                (u, self.h1_inverse(w, u))
            })
            .collect()
    }
}

/// Safeguarded Newton solve of g(x) = p on [0, 1] for nondecreasing g, where
/// `eval` returns ((g, 1 − g), g').
fn solve_increasing<E: Fn(f64) -> ((f64, f64), f64)>(eval: E, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = p.clamp(1e-6, 1.0 - 1e-6);
    for _ in 0..200 {
        let ((g, gc), d) = eval(x);
        let r = if p <= 0.5 { g - p } else { (1.0 - p) - gc };
        if r == 0.0 {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let scale = x.min(1.0 - x).max(CLAMP);
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        let step = r / d;
        let mut xn = x - step;
        if !(xn > lo && xn < hi) || !xn.is_finite() {
            xn = if lo == 0.0 && hi < 0.5 {
                hi * 1e-3
            } else if hi == 1.0 && lo > 0.5 {
                1.0 - (1.0 - lo) * 1e-3
            } else {
                0.5 * (lo + hi)
            };
            if !(xn > lo && xn < hi) {
                xn = 0.5 * (lo + hi);
            }
        } else if step.abs() <= 4.0 * f64::EPSILON * scale {
            return xn;
        }
        x = xn;
    }
    x
}

/// Parameter of `family` with Kendall's τ equal to `tau`.
pub fn theta_from_tau(family: CopulaFamily, tau: f64) -> Result<f64> {
    let unattainable = || Error::UnattainableTau {
        family: family.to_string(),
        tau,
    };
    if !(tau > -1.0 && tau < 1.0) {
        return Err(unattainable());
    }
    let t = tau * family.tau_sign();
    match family.name {
        FamilyName::Independence => {
            if tau == 0.0 {
                Ok(0.0)
            } else {
                Err(unattainable())
            }
        }
        FamilyName::Gaussian => Ok((std::f64::consts::FRAC_PI_2 * t).sin()),
        FamilyName::Clayton => {
            if t <= 0.0 {
                return Err(unattainable());
            }
            Ok(2.0 * t / (1.0 - t))
        }
        FamilyName::Gumbel => {
            if t < 0.0 {
                return Err(unattainable());
            }
            Ok(1.0 / (1.0 - t))
        }
        FamilyName::Frank => {
            if t == 0.0 {
                return Err(unattainable());
            }
            let a = t.abs();
            let mut hi = 10.0;
            while families::tau(FamilyName::Frank, hi) < a {
                hi *= 2.0;
                if hi > 1e7 {
                    return Err(unattainable());
                }
            }
            let th = find_root_increasing_tol(
                |x| families::tau(FamilyName::Frank, x),
                a,
                1e-9,
                hi,
                1e-13,
                1e-13,
            )?;
            Ok(th.copysign(t))
        }
        FamilyName::Joe => {
            if t < 0.0 {
                return Err(unattainable());
            }
            if t == 0.0 {
                return Ok(1.0);
            }
            let mut hi = 10.0;
            while families::tau(FamilyName::Joe, hi) < t {
                hi *= 2.0;
                if hi > 1e7 {
                    return Err(unattainable());
                }
            }
            find_root_increasing_tol(
                |x| families::tau(FamilyName::Joe, x),
                t,
                1.0,
                hi,
                1e-13,
                1e-13,
            )
        }
    }
}

#[cfg(test)]
mod tests;
