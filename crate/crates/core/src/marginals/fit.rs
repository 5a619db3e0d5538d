//! Stage-one maximum likelihood for the marginal regressions.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{
    BoundMarginal, Coefficients, CountBase, Dist, Marginal, MarginalFamily, Scale, INTERCEPT,
};
use crate::error::{Error, Result};
use crate::numerics::{hessian, minimize, minimize_scalar, Bound, Method, OptimizerProblem};

/// Covariates entering each linear predictor. `inflation` defaults to `mean`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Terms {
    pub mean: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<Vec<String>>,
}

impl Terms {
    pub fn new(mean: &[&str]) -> Self {
        Self {
            mean: mean.iter().map(|s| s.to_string()).collect(),
            inflation: None,
        }
    }

    pub fn inflation_terms(&self) -> &[String] {
        self.inflation.as_deref().unwrap_or(&self.mean)
    }
}

/// A fitted marginal with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub model: Marginal,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub n_params: usize,
    /// Inverse-Hessian standard errors keyed like `mean.x1`, `shape`, `zero.intercept`.
    pub se: IndexMap<String, f64>,
    pub converged: bool,
    /// Some logit coefficient ended within 1 of its ±20 cap.
    pub boundary: bool,
}

const LOGIT_CAP: f64 = 20.0;

/// Column-major design matrix of a linear predictor.
struct Design {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl Design {
    fn new(terms: &[String], schema: &[String], rows: &[f64], keep: &[usize]) -> Result<Self> {
        let p = schema.len();
        let mut names = vec![INTERCEPT.to_string()];
        let mut cols = vec![vec![1.0; keep.len()]];
        for t in terms {
            if t == INTERCEPT {
                continue;
            }
            let j = schema
                .iter()
                .position(|s| s == t)
                .ok_or_else(|| Error::Data(format!("covariate `{t}` missing from data")))?;
            names.push(t.clone());
            cols.push(keep.iter().map(|&i| rows[i * p + j]).collect());
        }
        let d = Self { names, cols };
        d.check_rank()?;
        Ok(d)
    }

    fn k(&self) -> usize {
        self.cols.len()
    }

    fn check_rank(&self) -> Result<()> {
        let n = self.cols[0].len();
        let k = self.k();
        if n < k {
            return Err(Error::RankDeficient(format!(
                "{n} observations for {k} coefficients"
            )));
        }
        let x = DMatrix::from_fn(n, k, |i, j| self.cols[j][i]);
        let sv = x.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if !(lo > 1e-10 * hi) {
            return Err(Error::RankDeficient(format!("columns {:?}", self.names)));
        }
        Ok(())
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for (c, b) in self.cols.iter().zip(beta) {
            s += c[i] * b;
        }
        s
    }

    fn coefficients(&self, beta: &[f64]) -> Coefficients {
        self.names
            .iter()
            .cloned()
            .zip(beta.iter().copied())
            .collect()
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One block of parameters optimised together.
struct Block {
    argmin: Vec<f64>,
    nll: f64,
    cov: Option<DMatrix<f64>>,
    converged: bool,
}

fn optimise<F: FnMut(&[f64]) -> f64>(
    mut nll: F,
    init: Vec<f64>,
    bounds: Vec<Bound>,
) -> Result<Block> {
    let res = minimize(
        OptimizerProblem::new(&mut nll, init, bounds)
            .method(Method::Bfgs)
            .tolerance(1e-10),
    )?;
    let h = hessian(&mut nll, &res.argmin);
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let cov = m.cholesky().map(|c| c.inverse());
    Ok(Block {
        argmin: res.argmin,
        nll: res.value,
        cov,
        converged: res.converged,
    })
}

fn se_of(b: &Block, i: usize) -> f64 {
    b.cov
        .as_ref()
        .map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt())
}

/// Maximum likelihood fit of `family` under independence across observations.
///
/// `rows` holds one covariate row per observation, laid out by `schema`.
pub fn fit_marginal(
    family: MarginalFamily,
    terms: &Terms,
    schema: &[String],
    rows: &[f64],
    ys: &[f64],
) -> Result<MarginalFit> {
    let n = ys.len();
    if n == 0 {
        return Err(Error::Empty("no observations for the marginal fit".into()));
    }
    if rows.len() != n * schema.len() {
        return Err(Error::LengthMismatch(rows.len(), n * schema.len()));
    }
    if let Some(i) = ys.iter().position(|y| !y.is_finite() || *y < 0.0) {
        return Err(Error::Data(format!(
            "observation {i} is negative or not finite"
        )));
    }
    match family.scale() {
        Scale::Discrete => {
            if let Some(i) = ys.iter().position(|y| y.fract() != 0.0) {
                return Err(Error::Data(format!(
                    "count observation {i} is not integral"
                )));
            }
            fit_count(family, terms, schema, rows, ys)
        }
        Scale::Semicontinuous => fit_semi(terms, schema, rows, ys),
        Scale::Continuous => {
            if let Some(i) = ys.iter().position(|y| *y <= 0.0) {
                return Err(Error::Data(format!(
                    "gamma observation {i} is not positive"
                )));
            }
            let all: Vec<usize> = (0..n).collect();
            let (b, d) = fit_gamma_part(&terms.mean, schema, rows, ys, &all)?;
            let k = d.k();
            let mut se = IndexMap::new();
            for (i, name) in d.names.iter().enumerate() {
                se.insert(format!("mean.{name}"), se_of(&b, i));
            }
            let alpha = b.argmin[k].exp();
            se.insert("shape".into(), alpha * se_of(&b, k));
            let model = Marginal {
                family,
                mean: d.coefficients(&b.argmin[..k]),
                shape: Some(alpha),
                zero: None,
                one: None,
            };
            Ok(finish(model, -b.nll, n, k + 1, se, b.converged, false))
        }
    }
}

fn finish(
    model: Marginal,
    loglik: f64,
    n: usize,
    k: usize,
    se: IndexMap<String, f64>,
    converged: bool,
    boundary: bool,
) -> MarginalFit {
    MarginalFit {
        model,
        loglik,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        n_obs: n,
        n_params: k,
        se,
        converged,
        boundary,
    }
}

fn fit_count(
    family: MarginalFamily,
    terms: &Terms,
    schema: &[String],
    rows: &[f64],
    ys: &[f64],
) -> Result<MarginalFit> {
    let n = ys.len();
    let all: Vec<usize> = (0..n).collect();
    let dm = Design::new(&terms.mean, schema, rows, &all)?;
    let nb = family.base() == Some(CountBase::NegBin2);
    let dz = if family.has_zero() {
        Some(Design::new(terms.inflation_terms(), schema, rows, &all)?)
    } else {
        None
    };
    let d1 = if family.has_one() {
        Some(Design::new(terms.inflation_terms(), schema, rows, &all)?)
    } else {
        None
    };
    let km = dm.k();
    let kz = dz.as_ref().map_or(0, Design::k);
    let k1 = d1.as_ref().map_or(0, Design::k);
    let off_phi = km;
    let off_z = km + usize::from(nb);
    let off_1 = off_z + kz;
    let npar = off_1 + k1;

    let yi: Vec<i64> = ys.iter().map(|y| *y as i64).collect();
    let lfact: Vec<f64> = ys.iter().map(|y| ln_gamma(y + 1.0)).collect();
    let nll = |p: &[f64]| -> f64 {
        let phi = if nb { p[off_phi].exp() } else { 0.0 };
        let lgphi = if nb { ln_gamma(phi) } else { 0.0 };
        let mut total = 0.0;
        for i in 0..n {
            let eta = dm.eta(&p[..km], i);
            let mu = eta.exp();
            let y = ys[i];
            let lbase = if nb {
                let lpm = (phi + mu).ln();
                ln_gamma(y + phi) - lgphi - lfact[i]
                    + phi * (phi.ln() - lpm)
                    + if yi[i] == 0 { 0.0 } else { y * (eta - lpm) }
            } else {
                y * eta - mu - lfact[i]
            };
            let a = dz
                .as_ref()
                .map_or(f64::NEG_INFINITY, |d| d.eta(&p[off_z..off_z + kz], i));
            let b = d1
                .as_ref()
                .map_or(f64::NEG_INFINITY, |d| d.eta(&p[off_1..off_1 + k1], i));
            let m = a.max(b).max(0.0);
            let lnd = m + ((-m).exp() + (a - m).exp() + (b - m).exp()).ln();
            let lw = -lnd;
            let l = match yi[i] {
                0 => logaddexp(a - lnd, lw + lbase),
                1 => logaddexp(b - lnd, lw + lbase),
                _ => lw + lbase,
            };
            total -= l;
        }
        total
    };

    let ybar = ys.iter().sum::<f64>() / n as f64;
    let mut init = vec![0.0; npar];
    init[0] = ybar.max(1e-3).ln();
    let mut bounds = vec![Bound::Free; npar];
    if nb {
        let var = ys.iter().map(|y| (y - ybar).powi(2)).sum::<f64>() / n as f64;
        let phi0 = if var > ybar * 1.05 {
            ybar * ybar / (var - ybar)
        } else {
            10.0
        };
        init[off_phi] = phi0.clamp(0.05, 100.0).ln();
    }
    for j in off_z..npar {
        bounds[j] = Bound::Interval(-LOGIT_CAP, LOGIT_CAP);
    }
    if kz > 0 {
        init[off_z] = -2.0;
    }
    if k1 > 0 {
        init[off_1] = -2.0;
    }
    let b = optimise(nll, init, bounds)?;
    let p = &b.argmin;

    let mut se = IndexMap::new();
    for (i, name) in dm.names.iter().enumerate() {
        se.insert(format!("mean.{name}"), se_of(&b, i));
    }
    let shape = nb.then(|| p[off_phi].exp());
    if let Some(phi) = shape {
        se.insert("shape".into(), phi * se_of(&b, off_phi));
    }
    if let Some(d) = &dz {
        for (i, name) in d.names.iter().enumerate() {
            se.insert(format!("zero.{name}"), se_of(&b, off_z + i));
        }
    }
    if let Some(d) = &d1 {
        for (i, name) in d.names.iter().enumerate() {
            se.insert(format!("one.{name}"), se_of(&b, off_1 + i));
        }
    }
    let boundary = p[off_z..].iter().any(|c| c.abs() > LOGIT_CAP - 1.0);
    let model = Marginal {
        family,
        mean: dm.coefficients(&p[..km]),
        shape,
        zero: dz.as_ref().map(|d| d.coefficients(&p[off_z..off_z + kz])),
        one: d1.as_ref().map(|d| d.coefficients(&p[off_1..off_1 + k1])),
    };
    Ok(finish(model, -b.nll, n, npar, se, b.converged, boundary))
}

/// Gamma regression with log link on the rows in `keep`; parameters (γ, ln α).
fn fit_gamma_part(
    terms: &[String],
    schema: &[String],
    rows: &[f64],
    ys: &[f64],
    keep: &[usize],
) -> Result<(Block, Design)> {
    let d = Design::new(terms, schema, rows, keep)?;
    let k = d.k();
    let y: Vec<f64> = keep.iter().map(|&i| ys[i]).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = y.len();
    let nll = |p: &[f64]| -> f64 {
        let la = p[k];
        let a = la.exp();
        let c = a * la - ln_gamma(a);
        let mut total = 0.0;
        for i in 0..m {
            let eta = d.eta(&p[..k], i);
            total -= c - a * eta + (a - 1.0) * ly[i] - a * y[i] * (-eta).exp();
        }
        total
    };
    let x = DMatrix::from_fn(m, k, |i, j| d.cols[j][i]);
    let mut beta = vec![0.0; k];
    beta[0] = (y.iter().sum::<f64>() / m as f64).ln();
    let q = |b: &[f64]| -> f64 {
        (0..m)
            .map(|i| {
                let e = d.eta(b, i);
                e + y[i] * (-e).exp()
            })
            .sum()
    };
    let mut qb = q(&beta);
    let mut converged = false;
    for _ in 0..200 {
        let w: Vec<f64> = (0..m).map(|i| y[i] * (-d.eta(&beta, i)).exp()).collect();
        let g = DVector::from_fn(k, |j, _| {
            (0..m).map(|i| x[(i, j)] * (1.0 - w[i])).sum::<f64>()
        });
        let h = DMatrix::from_fn(k, k, |a, c| {
            (0..m).map(|i| x[(i, a)] * x[(i, c)] * w[i]).sum::<f64>()
        });
        let Some(step) = h.cholesky().map(|c| c.solve(&g)) else {
            break;
        };
        let mut t = 1.0;
        let mut next = beta.clone();
        let mut qn = f64::INFINITY;
        for _ in 0..60 {
            for j in 0..k {
                next[j] = beta[j] - t * step[j];
            }
            qn = q(&next);
            if qn <= qb {
                break;
            }
            t *= 0.5;
        }
        if !(qn <= qb) {
            converged = step.amax() < 1e-8;
            break;
        }
        let dmax = t * step.amax();
        beta = next;
        qb = qn;
        if dmax < 1e-12 * (1.0 + beta.iter().fold(0.0_f64, |a, v| a.max(v.abs()))) {
            converged = true;
            break;
        }
    }
    let mut p = beta.clone();
    p.push(0.0);
    let (la, _) = minimize_scalar(
        |la| {
            p[k] = la;
            nll(&p)
        },
        -10.0,
        25.0,
        1e-12,
    );
    p[k] = la;
    let value = nll(&p);
    let h = hessian(nll, &p);
    let cov = DMatrix::from_fn(k + 1, k + 1, |i, j| h[i][j])
        .cholesky()
        .map(|c| c.inverse());
    let b = Block {
        argmin: p,
        nll: value,
        cov,
        converged: converged && la > -9.0 && la < 24.0,
    };
    Ok((b, d))
}

fn fit_semi(terms: &Terms, schema: &[String], rows: &[f64], ys: &[f64]) -> Result<MarginalFit> {
    let n = ys.len();
    let all: Vec<usize> = (0..n).collect();
    let dz = Design::new(terms.inflation_terms(), schema, rows, &all)?;
    let kz = dz.k();
    let zero: Vec<bool> = ys.iter().map(|y| *y == 0.0).collect();
    let nll = |p: &[f64]| -> f64 {
        let mut total = 0.0;
        for (i, &z) in zero.iter().enumerate() {
            let eta = dz.eta(p, i);
            total += if z { softplus(-eta) } else { softplus(eta) };
        }
        total
    };
    let n0 = zero.iter().filter(|z| **z).count();
    let mut init = vec![0.0; kz];
    let frac = (n0 as f64 + 0.5) / (n as f64 + 1.0);
    init[0] = (frac / (1.0 - frac)).ln();
    let bz = optimise(nll, init, vec![Bound::Interval(-LOGIT_CAP, LOGIT_CAP); kz])?;

    let pos: Vec<usize> = (0..n).filter(|&i| !zero[i]).collect();
    if pos.is_empty() {
        return Err(Error::Data(
            "no positive observations for the severity part".into(),
        ));
    }
    let (bg, dm) = fit_gamma_part(&terms.mean, schema, rows, ys, &pos)?;
    let km = dm.k();

    let mut se = IndexMap::new();
    for (i, name) in dm.names.iter().enumerate() {
        se.insert(format!("mean.{name}"), se_of(&bg, i));
    }
    let alpha = bg.argmin[km].exp();
    se.insert("shape".into(), alpha * se_of(&bg, km));
    for (i, name) in dz.names.iter().enumerate() {
        se.insert(format!("zero.{name}"), se_of(&bz, i));
    }
    let boundary = bz.argmin.iter().any(|c| c.abs() > LOGIT_CAP - 1.0);
    let model = Marginal {
        family: MarginalFamily::LogitGamma,
        mean: dm.coefficients(&bg.argmin[..km]),
        shape: Some(alpha),
        zero: Some(dz.coefficients(&bz.argmin)),
        one: None,
    };
    let loglik = -(bz.nll + bg.nll);
    Ok(finish(
        model,
        loglik,
        n,
        kz + km + 1,
        se,
        bz.converged && bg.converged,
        boundary,
    ))
}

/// Observed and expected frequencies over count categories with the chi-square statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofTable {
    pub labels: Vec<String>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
}

/// Pearson chi-square over categories 0, 1, …, `top − 1` and `≥ top`, where the
/// expected count is the sum of model probabilities over observations. Tail
/// categories with expected count below 1 are pooled into their neighbour.
pub fn chisq_gof(m: &BoundMarginal<'_>, rows: &[f64], ys: &[f64], top: usize) -> Result<GofTable> {
    if m.marginal().scale() != Scale::Discrete {
        return Err(Error::Scale(
            "chi-square table needs a count marginal".into(),
        ));
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::Empty(
            "no observations for the chi-square table".into(),
        ));
    }
    let p = rows.len() / n;
    let mut observed = vec![0.0; top + 1];
    let mut expected = vec![0.0; top + 1];
    for (i, &y) in ys.iter().enumerate() {
        let d = match m.dist(&rows[i * p..(i + 1) * p]) {
            Dist::Count(d) => d,
            _ => unreachable!(),
        };
        observed[(y as usize).min(top)] += 1.0;
        let mut acc = 0.0;
        for (k, e) in expected.iter_mut().enumerate().take(top) {
            let pk = d.pmf(k as i64);
            *e += pk;
            acc += pk;
        }
        expected[top] += (1.0 - acc).max(0.0);
    }
    let mut labels: Vec<String> = (0..top).map(|k| k.to_string()).collect();
    labels.push(format!(">={top}"));
    while expected.len() > 1 && *expected.last().unwrap() < 1.0 {
        let (e, o) = (expected.pop().unwrap(), observed.pop().unwrap());
        labels.pop();
        let last = expected.len() - 1;
        expected[last] += e;
        observed[last] += o;
        labels[last] = format!(">={last}");
    }
    if expected.iter().any(|e| *e <= 0.0) {
        return Err(Error::Data("a category has zero expected count".into()));
    }
    let statistic = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    Ok(GofTable {
        labels,
        observed,
        expected,
        statistic,
    })
}
