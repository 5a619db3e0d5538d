//! The full model: one marginal and one D-vine per outcome, joined within each
//! period by a Gaussian copula.

mod covariates;
mod fit;
pub mod presets;

pub use covariates::{CovariateKind, CovariateLevel, CovariateSpec};
pub use fit::{
    fit_stagewise, parametric_bootstrap, BootstrapResult, FitReport, FitSpec, OutcomeSpec,
    StageTiming, MAX_FAILED_FRACTION, MIN_BOOTSTRAP,
};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::crosscop::GaussianCrossCopula;
use crate::data::PanelDataset;
use crate::dvine::{Cond, DVineModel, Workspace};
use crate::error::{Error, Result};
use crate::marginals::{BoundMarginal, Dist, Marginal};
use crate::numerics::corr::pair_indices;
use crate::numerics::normal::std_normal_cdf;
use crate::numerics::par::ordered_map;
use crate::numerics::rng::stream;

/// Marginal regression and temporal vine of one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub name: String,
    pub marginal: Marginal,
    pub vine: DVineModel,
}

/// J outcome models and the cross-outcome Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    outcomes: Vec<OutcomeModel>,
    cross: GaussianCrossCopula,
}

/// Log-likelihood with the number of floored terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Loglik {
    pub value: f64,
    pub floored: usize,
}

impl JointModel {
    pub fn new(outcomes: Vec<OutcomeModel>, cross: GaussianCrossCopula) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Empty("model has no outcomes".into()));
        }
        if cross.dim() != outcomes.len() {
            return Err(Error::LengthMismatch(cross.dim(), outcomes.len()));
        }
        for (k, o) in outcomes.iter().enumerate() {
            o.marginal.validate()?;
            if o.vine.scale() != o.marginal.scale() {
                return Err(Error::Scale(format!(
                    "outcome `{}`: vine and marginal scales differ",
                    o.name
                )));
            }
            if outcomes[..k].iter().any(|p| p.name == o.name) {
                return Err(Error::Data(format!("duplicate outcome `{}`", o.name)));
            }
        }
        Ok(Self { outcomes, cross })
    }

    /// Same marginals with independence vines and identity correlation.
    pub fn independence(&self) -> Self {
        let outcomes = self
            .outcomes
            .iter()
            .map(|o| OutcomeModel {
                vine: DVineModel::independence(o.vine.scale(), o.vine.trees().len()),
                ..o.clone()
            })
            .collect();
        Self {
            outcomes,
            cross: GaussianCrossCopula::identity(self.dim()),
        }
    }

    pub fn outcomes(&self) -> &[OutcomeModel] {
        &self.outcomes
    }

    pub fn cross(&self) -> &GaussianCrossCopula {
        &self.cross
    }

    pub fn dim(&self) -> usize {
        self.outcomes.len()
    }

    /// Named parameters: marginal coefficients, tree parameters and correlations.
    pub fn parameters(&self) -> IndexMap<String, f64> {
        let mut out = IndexMap::new();
        for o in &self.outcomes {
            let m = &o.marginal;
            for (k, v) in &m.mean {
                out.insert(format!("{}.mean.{k}", o.name), *v);
            }
            if let Some(s) = m.shape {
                out.insert(format!("{}.shape", o.name), s);
            }
            for (part, c) in [("zero", &m.zero), ("one", &m.one)] {
                for (k, v) in c.iter().flatten() {
                    out.insert(format!("{}.{part}.{k}", o.name), *v);
                }
            }
            for (k, c) in o.vine.trees().iter().enumerate() {
                out.insert(format!("{}.tree{}", o.name, k + 1), c.theta());
            }
        }
        for (i, j) in pair_indices(self.dim()) {
            out.insert(
                format!("rho.{}.{}", self.outcomes[i].name, self.outcomes[j].name),
                self.cross.corr().get(i, j),
            );
        }
        out
    }

    /// Positions in `data` of the model's outcomes.
    pub fn outcome_positions(&self, data: &PanelDataset) -> Result<Vec<usize>> {
        self.outcomes
            .iter()
            .map(|o| {
                data.outcome_index(&o.name)
                    .ok_or_else(|| Error::Data(format!("outcome `{}` missing from data", o.name)))
            })
            .collect()
    }

    /// Marginals with covariate names resolved against `schema`.
    pub fn bind(&self, schema: &[String]) -> Result<Vec<BoundMarginal<'_>>> {
        self.outcomes
            .iter()
            .map(|o| o.marginal.bind(schema))
            .collect()
    }

    /// Log-likelihood of one period's cross-section from the per-outcome
    /// conditionals given each outcome's history.
    pub fn period_loglik(&self, conds: &[Cond], floored: &mut usize) -> Result<f64> {
        self.cross.period_loglik_counted(conds, floored)
    }

    /// Filled workspaces of one subject's observed history.
    pub fn history<'m>(
        &'m self,
        bound: &[BoundMarginal<'_>],
        data: &PanelDataset,
        pos: &[usize],
        i: usize,
    ) -> Vec<Workspace<'m>> {
        let mut ws: Vec<Workspace<'m>> = self.outcomes.iter().map(|o| o.vine.workspace()).collect();
        for t in 0..data.n_periods() {
            for (j, w) in ws.iter_mut().enumerate() {
                let d = bound[j].dist(data.row(i, pos[j], t));
                w.push(d.cond(data.value(i, pos[j], t)));
            }
        }
        ws
    }

    fn subject_loglik(
        &self,
        bound: &[BoundMarginal<'_>],
        data: &PanelDataset,
        pos: &[usize],
        i: usize,
    ) -> Result<Loglik> {
        let ws = self.history(bound, data, pos, i);
        let mut floored: usize = ws.iter().map(Workspace::floored).sum();
        let mut total = 0.0;
        let mut conds = vec![Cond::continuous(0.5, 1.0); self.dim()];
        for t in 0..data.n_periods() {
            for (j, w) in ws.iter().enumerate() {
                conds[j] = w.conditional(t);
            }
            total += self.period_loglik(&conds, &mut floored)?;
        }
        Ok(Loglik {
            value: total,
            floored,
        })
    }

    /// Σ over subjects and periods of the period log-likelihoods.
    pub fn total_loglik(&self, data: &PanelDataset) -> Result<Loglik> {
        let pos = self.outcome_positions(data)?;
        let bound = self.bind(data.schema())?;
        let subjects: Vec<usize> = (0..data.n_subjects()).collect();
        let parts = ordered_map(&subjects, |&i| self.subject_loglik(&bound, data, &pos, i));
        let mut out = Loglik::default();
        for p in parts {
            let p = p?;
            out.value += p.value;
            out.floored += p.floored;
        }
        Ok(out)
    }

    /// Per-subject conditionals f(y_t | own history) for every period,
    /// in subject-major order; each entry holds one value per outcome.
    pub fn conditionals(&self, data: &PanelDataset) -> Result<Vec<Vec<Cond>>> {
        let pos = self.outcome_positions(data)?;
        let bound = self.bind(data.schema())?;
        let subjects: Vec<usize> = (0..data.n_subjects()).collect();
        let per = ordered_map(&subjects, |&i| {
            let ws = self.history(&bound, data, &pos, i);
            (0..data.n_periods())
                .map(|t| ws.iter().map(|w| w.conditional(t)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        });
        Ok(per.into_iter().flatten().collect())
    }

    /// Correlated uniforms u = Φ(Lz) for one period.
    pub fn draw_uniforms<R: Rng + ?Sized>(&self, l: &DMatrix<f64>, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let z: f64 = (0..=i).map(|k| l[(i, k)] * e[k]).sum();
            *o = std_normal_cdf(z);
        }
    }

    /// Lower Cholesky factor of the cross correlation.
    pub fn cross_factor(&self) -> DMatrix<f64> {
        self.cross
            .corr()
            .matrix()
            .cholesky()
            .expect("correlation is positive definite")
            .l()
    }

    /// New values for every cell of `design`, drawn period by period by
    /// conditional inversion of correlated uniforms. Subject `i` uses the
    /// stream keyed `[1, i]` under `seed`.
    pub fn simulate_values(&self, design: &PanelDataset, seed: u64) -> Result<PanelDataset> {
        let pos = self.outcome_positions(design)?;
        let bound = self.bind(design.schema())?;
        let l = self.cross_factor();
        let (nj, nt) = (design.n_outcomes(), design.n_periods());
        let subjects: Vec<usize> = (0..design.n_subjects()).collect();
        let per = ordered_map(&subjects, |&i| {
            let mut rng = stream(seed, &[1, i as u64]);
            let mut ws: Vec<Workspace<'_>> =
                self.outcomes.iter().map(|o| o.vine.workspace()).collect();
            let mut vals = vec![0.0; nj * nt];
            let mut u = vec![0.0; self.dim()];
            for t in 0..nt {
                self.draw_uniforms(&l, &mut rng, &mut u);
                for (j, w) in ws.iter_mut().enumerate() {
                    let d: Dist = bound[j].dist(design.row(i, pos[j], t));
                    let y = w.next_quantile(&d, u[j]);
                    w.push(d.cond(y));
                    vals[pos[j] * nt + t] = y;
                }
            }
            vals
        });
        design.with_values(per.into_iter().flatten().collect())
    }
}

/// Draws covariates from `specs` and values from `model` for `n_subjects`
/// subjects observed at periods 1..=`periods`.
pub fn simulate_dataset(
    model: &JointModel,
    n_subjects: usize,
    periods: usize,
    specs: &[CovariateSpec],
    seed: u64,
) -> Result<PanelDataset> {
    let names: Vec<String> = model.outcomes().iter().map(|o| o.name.clone()).collect();
    let design = covariates::design(&names, n_subjects, periods, specs, seed)?;
    model.simulate_values(&design, seed)
}
