//! Per-outcome regression margins: zero/one inflated counts, the two-part
//! semi-continuous mixture, and a plain Gamma regression for continuous data.

mod fit;

pub use fit::{chisq_gof, fit_marginal, GofTable, MarginalFit, Terms};

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::dvine::Cond;
use crate::error::{Error, Result};
use crate::numerics::special::{gamma_cdf, gamma_ln_pdf, gamma_quantile};

/// Name of the intercept coefficient.
pub const INTERCEPT: &str = "intercept";

/// Measurement scale of an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Continuous,
    Discrete,
    Semicontinuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountBase {
    Poisson,
    NegBin2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inflation {
    None,
    Zero,
    One,
    ZeroOne,
}

/// Shipped marginal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarginalFamily {
    Poisson,
    Nb2,
    Zip,
    Zinb,
    Oip,
    Oinb,
    Zoip,
    Zoinb,
    LogitGamma,
    Gamma,
}

const FAMILY_NAMES: [(MarginalFamily, &str); 10] = [
    (MarginalFamily::Poisson, "poisson"),
    (MarginalFamily::Nb2, "nb2"),
    (MarginalFamily::Zip, "zip"),
    (MarginalFamily::Zinb, "zinb"),
    (MarginalFamily::Oip, "oip"),
    (MarginalFamily::Oinb, "oinb"),
    (MarginalFamily::Zoip, "zoip"),
    (MarginalFamily::Zoinb, "zoinb"),
    (MarginalFamily::LogitGamma, "logit-gamma"),
    (MarginalFamily::Gamma, "gamma"),
];

impl MarginalFamily {
    pub fn scale(self) -> Scale {
        match self {
            MarginalFamily::LogitGamma => Scale::Semicontinuous,
            MarginalFamily::Gamma => Scale::Continuous,
            _ => Scale::Discrete,
        }
    }

    pub fn base(self) -> Option<CountBase> {
        use MarginalFamily::*;
        match self {
            Poisson | Zip | Oip | Zoip => Some(CountBase::Poisson),
            Nb2 | Zinb | Oinb | Zoinb => Some(CountBase::NegBin2),
            LogitGamma | Gamma => None,
        }
    }

    pub fn inflation(self) -> Inflation {
        use MarginalFamily::*;
        match self {
            Zip | Zinb => Inflation::Zero,
            Oip | Oinb => Inflation::One,
            Zoip | Zoinb => Inflation::ZeroOne,
            _ => Inflation::None,
        }
    }

    /// Whether the family carries a shape/dispersion parameter.
    pub fn has_shape(self) -> bool {
        !matches!(self.base(), Some(CountBase::Poisson))
    }

    /// Whether the family has a logit component for a zero mass.
    pub fn has_zero(self) -> bool {
        matches!(self.inflation(), Inflation::Zero | Inflation::ZeroOne)
            || self == MarginalFamily::LogitGamma
    }

    pub fn has_one(self) -> bool {
        matches!(self.inflation(), Inflation::One | Inflation::ZeroOne)
    }
}

impl fmt::Display for MarginalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = FAMILY_NAMES
            .iter()
            .find(|(m, _)| m == self)
            .map(|(_, s)| *s)
            .unwrap_or("?");
        f.write_str(name)
    }
}

impl FromStr for MarginalFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        FAMILY_NAMES
            .iter()
            .find(|(_, n)| *n == key)
            .map(|(m, _)| *m)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

impl TryFrom<String> for MarginalFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MarginalFamily> for String {
    fn from(f: MarginalFamily) -> Self {
        f.to_string()
    }
}

/// Regression coefficients keyed by covariate name, intercept first.
pub type Coefficients = IndexMap<String, f64>;

/// Builds a coefficient map from an intercept and named slopes.
pub fn coefficients(intercept: f64, slopes: &[(&str, f64)]) -> Coefficients {
    let mut c = Coefficients::new();
    c.insert(INTERCEPT.to_string(), intercept);
    for (n, v) in slopes {
        c.insert((*n).to_string(), *v);
    }
    c
}

/// A fitted or specified marginal regression.
///
/// `mean` is on the log scale of λ or μ. `zero` and `one` are multinomial
/// logits of the inflation masses (for `logit-gamma`, `zero` is the logit of
/// the zero mass q). `shape` is the NB2 dispersion φ or the Gamma shape α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub family: MarginalFamily,
    pub mean: Coefficients,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one: Option<Coefficients>,
}

impl Marginal {
    /// Checks that the components present match the family.
    pub fn validate(&self) -> Result<()> {
        let f = self.family;
        let bad = |m: &str| {
            Err(Error::Config {
                field: format!("marginal.{f}"),
                message: m.to_string(),
            })
        };
        if f.has_shape() != self.shape.is_some() {
            return bad("shape parameter presence does not match the family");
        }
        if let Some(s) = self.shape {
            if !(s > 0.0 && s.is_finite()) {
                return bad("shape parameter must be positive");
            }
        }
        if f.has_zero() != self.zero.is_some() || f.has_one() != self.one.is_some() {
            return bad("inflation components do not match the family");
        }
        let all = [Some(&self.mean), self.zero.as_ref(), self.one.as_ref()];
        for c in all.into_iter().flatten() {
            if c.get_index(0).map(|(k, _)| k.as_str()) != Some(INTERCEPT) {
                return bad("coefficient list must start with the intercept");
            }
            if c.values().any(|v| v.is_nan()) {
                return bad("coefficients must not be NaN");
            }
        }
        Ok(())
    }

    pub fn scale(&self) -> Scale {
        self.family.scale()
    }

    /// Unconstrained parameter vector: mean coefficients, ln shape, zero and
    /// one logits.
    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.mean.values().copied().collect();
        p.extend(self.shape.map(f64::ln));
        for c in [&self.zero, &self.one].into_iter().flatten() {
            p.extend(c.values().copied());
        }
        p
    }

    /// Copy with the parameters replaced from a vector laid out as [`Marginal::params`].
    pub fn with_params(&self, p: &[f64]) -> Marginal {
        let mut m = self.clone();
        let mut it = p.iter().copied();
        for v in m.mean.values_mut() {
            *v = it.next().expect("parameter vector too short");
        }
        if let Some(s) = m.shape.as_mut() {
            *s = it.next().expect("parameter vector too short").exp();
        }
        for c in [&mut m.zero, &mut m.one].into_iter().flatten() {
            for v in c.values_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        }
        m
    }

    /// Resolves covariate names against a row schema.
    pub fn bind(&self, schema: &[String]) -> Result<BoundMarginal<'_>> {
        let idx = |c: &Coefficients| -> Result<Vec<Option<usize>>> {
            c.keys()
                .map(|k| {
                    if k == INTERCEPT {
                        Ok(None)
                    } else {
                        schema.iter().position(|s| s == k).map(Some).ok_or_else(|| {
                            Error::Data(format!("covariate `{k}` missing from data"))
                        })
                    }
                })
                .collect()
        };
        Ok(BoundMarginal {
            m: self,
            mean: idx(&self.mean)?,
            zero: self.zero.as_ref().map(idx).transpose()?,
            one: self.one.as_ref().map(idx).transpose()?,
        })
    }
}

/// A marginal with covariate positions resolved.
#[derive(Debug, Clone)]
pub struct BoundMarginal<'a> {
    m: &'a Marginal,
    mean: Vec<Option<usize>>,
    zero: Option<Vec<Option<usize>>>,
    one: Option<Vec<Option<usize>>>,
}

fn linear(c: &Coefficients, idx: &[Option<usize>], row: &[f64]) -> f64 {
    c.values()
        .zip(idx)
        .map(|(b, i)| b * i.map_or(1.0, |i| row[i]))
        .sum()
}

impl BoundMarginal<'_> {
    pub fn marginal(&self) -> &Marginal {
        self.m
    }

    /// Distribution of the outcome at one covariate row.
    pub fn dist(&self, row: &[f64]) -> Dist {
        let m = self.m;
        let eta = linear(&m.mean, &self.mean, row);
        let mu = eta.exp();
        let ez = match (&m.zero, &self.zero) {
            (Some(c), Some(i)) => Some(linear(c, i, row)),
            _ => None,
        };
        let eo = match (&m.one, &self.one) {
            (Some(c), Some(i)) => Some(linear(c, i, row)),
            _ => None,
        };
        match m.family.scale() {
            Scale::Discrete => {
                let (p0, p1) = inflation_probs(ez, eo);
                Dist::Count(CountDist {
                    p0,
                    p1,
                    mean: mu,
                    phi: m
                        .shape
                        .filter(|_| m.family.base() == Some(CountBase::NegBin2)),
                })
            }
            Scale::Semicontinuous => Dist::SemiContinuous(SemiDist {
                q: logistic(ez.unwrap_or(f64::NEG_INFINITY)),
                mean: mu,
                alpha: m.shape.unwrap_or(1.0),
            }),
            Scale::Continuous => Dist::Gamma(GammaDist {
                mean: mu,
                alpha: m.shape.unwrap_or(1.0),
            }),
        }
    }
}

/// Multinomial-logit masses (p⁰, p¹) from optional linear predictors.
pub(crate) fn inflation_probs(ez: Option<f64>, eo: Option<f64>) -> (f64, f64) {
    let a = ez.unwrap_or(f64::NEG_INFINITY);
    let b = eo.unwrap_or(f64::NEG_INFINITY);
    let m = a.max(b).max(0.0);
    let (ea, eb, e0) = ((a - m).exp(), (b - m).exp(), (-m).exp());
    let d = e0 + ea + eb;
    (ea / d, eb / d)
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-level outcome distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Count(CountDist),
    SemiContinuous(SemiDist),
    Gamma(GammaDist),
}

impl Dist {
    pub fn scale(&self) -> Scale {
        match self {
            Dist::Count(_) => Scale::Discrete,
            Dist::SemiContinuous(_) => Scale::Semicontinuous,
            Dist::Gamma(_) => Scale::Continuous,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Dist::Count(d) => d.cdf(y.floor() as i64),
            Dist::SemiContinuous(d) => d.cdf(y),
            Dist::Gamma(d) => d.cdf(y),
        }
    }

    /// Probability mass (atoms) or density at `y`.
    pub fn density(&self, y: f64) -> f64 {
        self.cond(y).dens
    }

    pub fn ln_density(&self, y: f64) -> f64 {
        match self {
            Dist::Count(d) => d.pmf(y as i64).ln(),
            Dist::SemiContinuous(d) => {
                if y <= 0.0 {
                    d.q.ln()
                } else {
                    (-d.q).ln_1p() + gamma_ln_pdf(y, d.alpha, d.mean / d.alpha)
                }
            }
            Dist::Gamma(d) => gamma_ln_pdf(y, d.alpha, d.mean / d.alpha),
        }
    }

    /// Marginal evaluation at an observed value.
    pub fn cond(&self, y: f64) -> Cond {
        match self {
            Dist::Count(d) => {
                let k = y as i64;
                Cond {
                    cdf: d.cdf(k),
                    left: d.cdf(k - 1),
                    dens: d.pmf(k),
                    atom: true,
                }
            }
            Dist::SemiContinuous(d) => {
                if y <= 0.0 {
                    Cond {
                        cdf: d.q,
                        left: 0.0,
                        dens: d.q,
                        atom: true,
                    }
                } else {
                    let c = d.cdf(y);
                    Cond {
                        cdf: c,
                        left: c,
                        dens: (1.0 - d.q) * gamma_ln_pdf(y, d.alpha, d.mean / d.alpha).exp(),
                        atom: false,
                    }
                }
            }
            Dist::Gamma(d) => {
                let c = d.cdf(y);
                Cond {
                    cdf: c,
                    left: c,
                    dens: gamma_ln_pdf(y, d.alpha, d.mean / d.alpha).exp(),
                    atom: false,
                }
            }
        }
    }

    /// Smallest y with F(y) ≥ u.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Dist::Count(d) => d.quantile(u) as f64,
            Dist::SemiContinuous(d) => d.quantile(u),
            Dist::Gamma(d) => d.quantile(u),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Dist::Count(d) => d.p1 + (1.0 - d.p0 - d.p1) * d.mean,
            Dist::SemiContinuous(d) => (1.0 - d.q) * d.mean,
            Dist::Gamma(d) => d.mean,
        }
    }
}

/// Zero/one inflated Poisson (φ = None) or NB2 count distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDist {
    pub p0: f64,
    pub p1: f64,
    pub mean: f64,
    pub phi: Option<f64>,
}

impl CountDist {
    pub fn poisson(lambda: f64) -> Self {
        Self {
            p0: 0.0,
            p1: 0.0,
            mean: lambda,
            phi: None,
        }
    }

    /// Base (uninflated) pmf.
    pub fn base_pmf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let yf = y as f64;
        let mu = self.mean;
        match self.phi {
            None => {
                if mu == 0.0 {
                    return if y == 0 { 1.0 } else { 0.0 };
                }
                (yf * mu.ln() - mu - ln_gamma(yf + 1.0)).exp()
            }
            Some(phi) => {
                let lp = (phi / (phi + mu)).ln();
                let lq = if mu == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (mu / (phi + mu)).ln()
                };
                let ly = if y == 0 { 0.0 } else { yf * lq };
                (ln_gamma(yf + phi) - ln_gamma(phi) - ln_gamma(yf + 1.0) + phi * lp + ly).exp()
            }
        }
    }

    pub fn base_cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let yf = y as f64;
        match self.phi {
            None => {
                if self.mean == 0.0 {
                    1.0
                } else {
                    gamma_ur(yf + 1.0, self.mean)
                }
            }
            Some(phi) => beta_reg(phi, yf + 1.0, phi / (phi + self.mean)),
        }
    }

    pub fn pmf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let w = 1.0 - self.p0 - self.p1;
        let extra = match y {
            0 => self.p0,
            1 => self.p1,
            _ => 0.0,
        };
        extra + w * self.base_pmf(y)
    }

    pub fn cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let w = 1.0 - self.p0 - self.p1;
        let extra = if y >= 1 { self.p0 + self.p1 } else { self.p0 };
        (extra + w * self.base_cdf(y)).min(1.0)
    }

    /// Forward scan with doubling, then bisection.
    pub fn quantile(&self, u: f64) -> i64 {
        if self.cdf(0) >= u {
            return 0;
        }
        let (mut lo, mut hi) = (0i64, 1i64);
        while self.cdf(hi) < u {
            lo = hi;
            if hi >= 1 << 40 {
                return hi;
            }
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn variance(&self) -> f64 {
        let w = 1.0 - self.p0 - self.p1;
        let mu = self.mean;
        let v = mu + self.phi.map_or(0.0, |p| mu * mu / p);
        let m1 = self.p1 + w * mu;
        let m2 = self.p1 + w * (v + mu * mu);
        m2 - m1 * m1
    }
}

/// Zero mass q mixed with a Gamma(α, μ/α) severity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiDist {
    pub q: f64,
    pub mean: f64,
    pub alpha: f64,
}

impl SemiDist {
    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        if y == 0.0 {
            return self.q;
        }
        self.q + (1.0 - self.q) * gamma_cdf(y, self.alpha, self.mean / self.alpha)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        if u <= self.q {
            return 0.0;
        }
        gamma_quantile(
            ((u - self.q) / (1.0 - self.q)).min(1.0),
            self.alpha,
            self.mean / self.alpha,
        )
    }
}

/// Gamma regression outcome with mean μ and shape α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaDist {
    pub mean: f64,
    pub alpha: f64,
}

impl GammaDist {
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        gamma_cdf(y, self.alpha, self.mean / self.alpha)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        gamma_quantile(u, self.alpha, self.mean / self.alpha)
    }
}
