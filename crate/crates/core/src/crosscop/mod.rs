//! The Gaussian copula joining the outcomes within a period, applied to each
//! outcome's conditional distribution given its own history.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bicop::{BivariateCopula, CopulaFamily, FamilyName};
use crate::dvine::{pair_joint, Cond, FLOOR};
use crate::error::{Error, Result};
use crate::numerics::corr::pair_indices;
use crate::numerics::mvn::rect;
use crate::numerics::normal::std_normal_quantile_sat;
use crate::numerics::par::ordered_sum;
use crate::numerics::{minimize_scalar, CorrelationMatrix};

const TOL: f64 = 1e-11;

/// J-variate Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorrelationMatrix", into = "CorrelationMatrix")]
pub struct GaussianCrossCopula {
    corr: CorrelationMatrix,
    inv_minus_i: DMatrix<f64>,
    ln_det: f64,
}

impl TryFrom<CorrelationMatrix> for GaussianCrossCopula {
    type Error = Error;
    fn try_from(c: CorrelationMatrix) -> Result<Self> {
        Self::new(c)
    }
}

impl From<GaussianCrossCopula> for CorrelationMatrix {
    fn from(g: GaussianCrossCopula) -> Self {
        g.corr
    }
}

fn quantiles(u: &[f64]) -> Vec<f64> {
    u.iter()
        .map(|&p| {
            if p <= 0.0 {
                f64::NEG_INFINITY
            } else if p >= 1.0 {
                f64::INFINITY
            } else {
                std_normal_quantile_sat(p)
            }
        })
        .collect()
}

impl GaussianCrossCopula {
    pub fn new(corr: CorrelationMatrix) -> Result<Self> {
        let d = corr.dim();
        let chol = corr.matrix().cholesky().ok_or(Error::SingularCorrelation)?;
        let ln_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let inv_minus_i = chol.inverse() - DMatrix::identity(d, d);
        Ok(Self {
            corr,
            inv_minus_i,
            ln_det,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(CorrelationMatrix::identity(dim)).expect("identity is positive definite")
    }

    pub fn corr(&self) -> &CorrelationMatrix {
        &self.corr
    }

    pub fn dim(&self) -> usize {
        self.corr.dim()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::LengthMismatch(u.len(), self.dim()));
        }
        Ok(())
    }

    /// ln c(u) = −½ ln|R| − ½ zᵀ(R⁻¹ − I)z.
    pub fn ln_density(&self, u: &[f64]) -> Result<f64> {
        self.check(u)?;
        if u.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Domain("copula density needs u in (0,1)".into()));
        }
        let z = DVector::from_vec(quantiles(u));
        Ok(-0.5 * self.ln_det - 0.5 * (z.transpose() * &self.inv_minus_i * &z)[(0, 0)])
    }

    pub fn density(&self, u: &[f64]) -> Result<f64> {
        Ok(self.ln_density(u)?.exp())
    }

    /// P(lower < U ≤ upper).
    pub fn rectangle(&self, lower: &[f64], upper: &[f64]) -> Result<f64> {
        self.check(lower)?;
        self.check(upper)?;
        if self.dim() > 4 {
            return Err(Error::UnsupportedDimension(self.dim()));
        }
        if lower
            .iter()
            .zip(upper)
            .any(|(a, b)| !(0.0 <= *a && a <= b && *b <= 1.0))
        {
            return Err(Error::Domain(
                "rectangle needs 0 ≤ lower ≤ upper ≤ 1".into(),
            ));
        }
        Ok(rect(&quantiles(lower), &quantiles(upper), &self.corr.rows(), TOL).max(0.0))
    }

    /// C(u).
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.rectangle(&vec![0.0; u.len()], u)
    }

    /// ∂^{|L|}/∂u_L of P(lower_c < U_c ≤ upper_c, U_L ≤ upper_L), with the
    /// coordinates in `cont` differentiated at `upper`.
    pub fn mixed_rectangle(&self, lower: &[f64], upper: &[f64], cont: &[usize]) -> Result<f64> {
        self.check(lower)?;
        self.check(upper)?;
        let d = self.dim();
        if cont.is_empty() {
            return Err(Error::Domain(
                "no differentiated coordinates; use the rectangle".into(),
            ));
        }
        if cont.len() == d {
            return Err(Error::Domain(
                "all coordinates differentiated; use the density".into(),
            ));
        }
        if cont
            .iter()
            .any(|&i| i >= d || !(upper[i] > 0.0 && upper[i] < 1.0))
        {
            return Err(Error::Domain(
                "differentiated coordinates need u in (0,1)".into(),
            ));
        }
        let rest: Vec<usize> = (0..d).filter(|i| !cont.contains(i)).collect();
        let r = self.corr.matrix();
        let sub =
            |a: &[usize], b: &[usize]| DMatrix::from_fn(a.len(), b.len(), |i, j| r[(a[i], b[j])]);
        let r_ll = sub(cont, cont);
        let r_cl = sub(&rest, cont);
        let r_cc = sub(&rest, &rest);
        let chol = r_ll.clone().cholesky().ok_or(Error::SingularCorrelation)?;
        let z_l = DVector::from_iterator(
            cont.len(),
            cont.iter().map(|&i| std_normal_quantile_sat(upper[i])),
        );
        // copula density of the differentiated margins
        let w = chol.solve(&z_l);
        let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let quad = z_l.dot(&w) - z_l.dot(&z_l);
        let ln_c = -0.5 * ln_det - 0.5 * quad;
        // conditional normal of the rest
        let mu = &r_cl * &w;
        let sigma = &r_cc - &r_cl * chol.solve(&r_cl.transpose());
        let k = rest.len();
        let sd: Vec<f64> = (0..k).map(|i| sigma[(i, i)].max(1e-300).sqrt()).collect();
        let lo = quantiles(&rest.iter().map(|&i| lower[i]).collect::<Vec<_>>());
        let hi = quantiles(&rest.iter().map(|&i| upper[i]).collect::<Vec<_>>());
        let a: Vec<f64> = (0..k).map(|i| (lo[i] - mu[i]) / sd[i]).collect();
        let b: Vec<f64> = (0..k).map(|i| (hi[i] - mu[i]) / sd[i]).collect();
        let rc: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else {
                            sigma[(i, j)] / (sd[i] * sd[j])
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(ln_c.exp() * rect(&a, &b, &rc, TOL).max(0.0))
    }

    /// ∂^{|L|}C/∂u_L at `u`.
    pub fn mixed_partial(&self, u: &[f64], cont: &[usize]) -> Result<f64> {
        self.mixed_rectangle(&vec![0.0; u.len()], u, cont)
    }

    /// Log of the joint density/mass of one period's cross-section, each
    /// outcome given its own history.
    pub fn period_loglik(&self, conds: &[Cond]) -> Result<f64> {
        self.period_loglik_counted(conds, &mut 0)
    }

    /// [`GaussianCrossCopula::period_loglik`], counting terms that hit the floor.
    pub fn period_loglik_counted(&self, conds: &[Cond], floored: &mut usize) -> Result<f64> {
        if conds.len() != self.dim() {
            return Err(Error::LengthMismatch(conds.len(), self.dim()));
        }
        if self.corr.is_identity() {
            return Ok(conds.iter().map(|c| c.dens.max(FLOOR).ln()).sum());
        }
        let cont: Vec<usize> = (0..conds.len()).filter(|&i| !conds[i].atom).collect();
        let dens: f64 = cont.iter().map(|&i| conds[i].dens.max(FLOOR).ln()).sum();
        let upper: Vec<f64> = conds
            .iter()
            .map(|c| {
                if c.atom {
                    c.cdf
                } else {
                    c.cdf.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
                }
            })
            .collect();
        let lower: Vec<f64> = conds.iter().map(|c| c.left).collect();
        if cont.len() == conds.len() {
            return Ok(dens + self.ln_density(&upper)?);
        }
        let term = if cont.is_empty() {
            self.rectangle(&lower, &upper)?
        } else {
            self.mixed_rectangle(&lower, &upper, &cont)?
        };
        if term < FLOOR {
            *floored += 1;
        }
        Ok(dens + term.max(FLOOR).ln())
    }

    /// Σ over outcome pairs of the bivariate period terms.
    pub fn pairwise_loglik(&self, conds: &[Cond]) -> f64 {
        pair_indices(self.dim())
            .map(|(i, j)| {
                let c = gaussian(self.corr.get(i, j));
                pair_joint(&c, &conds[i], &conds[j]).max(FLOOR).ln()
            })
            .sum()
    }
}

fn gaussian(rho: f64) -> BivariateCopula {
    let fam = CopulaFamily::new(FamilyName::Gaussian, 0).expect("gaussian family");
    BivariateCopula::new(fam, rho).unwrap_or_else(|_| BivariateCopula::independence())
}

/// Composite log-likelihood of one outcome pair at correlation ρ.
pub fn pair_composite_loglik(rho: f64, pairs: &[(Cond, Cond)]) -> f64 {
    let c = gaussian(rho);
    ordered_sum(pairs, |(a, b)| pair_joint(&c, a, b).max(FLOOR).ln())
}

/// Pairwise composite-likelihood estimate of the cross correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFit {
    pub copula: GaussianCrossCopula,
    /// Per-pair maximisers before the positive-definiteness projection.
    pub raw: Vec<f64>,
    /// Composite log-likelihood per pair at the raw maximisers.
    pub pair_loglik: Vec<f64>,
}

/// Maximises each pair's composite likelihood over ρ and projects the result
/// to a valid correlation matrix. `obs[n][j]` is outcome `j` of observation `n`.
pub fn fit_pairwise(obs: &[Vec<Cond>], dim: usize) -> Result<CrossFit> {
    if obs.is_empty() {
        return Err(Error::Empty("no observations for the cross copula".into()));
    }
    if let Some(bad) = obs.iter().find(|o| o.len() != dim) {
        return Err(Error::LengthMismatch(bad.len(), dim));
    }
    let mut raw = Vec::new();
    let mut pair_loglik = Vec::new();
    for (i, j) in pair_indices(dim) {
        let pairs: Vec<(Cond, Cond)> = obs.iter().map(|o| (o[i], o[j])).collect();
        let (rho, nll) =
            minimize_scalar(|r| -pair_composite_loglik(r, &pairs), -0.9999, 0.9999, 1e-7);
        raw.push(rho);
        pair_loglik.push(-nll);
    }
    let corr = CorrelationMatrix::project_pairs(dim, &raw, 1e-6)?;
    Ok(CrossFit {
        copula: GaussianCrossCopula::new(corr)?,
        raw,
        pair_loglik,
    })
}

#[cfg(test)]
mod tests;
