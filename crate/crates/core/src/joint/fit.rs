//! Three-stage estimation and the parametric bootstrap.

use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{JointModel, OutcomeModel};
use crate::crosscop::{fit_pairwise, CrossFit, GaussianCrossCopula};
use crate::data::PanelDataset;
use crate::dvine::{fit_dvine, Cond, DVineFit, DVineModel, FitOptions};
use crate::error::{Error, Result};
use crate::marginals::{fit_marginal, Marginal, MarginalFamily, MarginalFit, Terms};
use crate::numerics::par::{ordered_map, ordered_sum};
use crate::numerics::rng::child_seed;
use crate::numerics::stats::std_dev;
use crate::numerics::{minimize, Bound, Method, OptimizerProblem};

/// Families and candidates of one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub family: MarginalFamily,
    pub terms: Terms,
    #[serde(default)]
    pub vine: FitOptions,
}

/// What to fit for each outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub outcomes: Vec<OutcomeSpec>,
    /// Re-estimate each outcome's marginal and vine parameters jointly after
    /// the sequential fit of stages one and two.
    #[serde(default)]
    pub joint_margins: bool,
}

impl FitSpec {
    /// Copy whose vines are refitted with the families selected in `model`.
    pub fn with_selected_families(&self, model: &JointModel) -> Self {
        let mut s = self.clone();
        for (o, m) in s.outcomes.iter_mut().zip(model.outcomes()) {
            o.vine = FitOptions::fixed(m.vine.trees().iter().map(|c| c.family()).collect());
        }
        s
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub marginals: f64,
    pub vines: f64,
    pub cross: f64,
    pub bootstrap: f64,
}

/// Bootstrap standard errors with the replicate bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub requested: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Standard deviation of each parameter over the successful refits;
    /// empty when fewer than [`MIN_BOOTSTRAP`] refits succeeded.
    pub se: IndexMap<String, f64>,
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
}

/// Fewest successful refits behind a reported bootstrap standard error.
pub const MIN_BOOTSTRAP: usize = 30;

/// Largest tolerated fraction of failed bootstrap refits.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

/// Everything learnt while fitting, stage by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_subjects: usize,
    pub n_periods: usize,
    pub marginals: Vec<MarginalFit>,
    pub vines: Vec<DVineFit>,
    pub cross: CrossFit,
    /// Σ of marginal log-likelihoods under independence.
    pub marginal_loglik: f64,
    /// Σ of pair-copula log-likelihood contributions of all vines.
    pub vine_loglik: f64,
    /// Pairwise composite log-likelihood of the cross copula.
    pub composite_loglik: f64,
    /// Full log-likelihood of the fitted model.
    pub total_loglik: f64,
    pub floored: usize,
    pub converged: bool,
    pub estimates: IndexMap<String, f64>,
    pub bootstrap: Option<BootstrapResult>,
    #[serde(skip)]
    pub timing: StageTiming,
}

struct PointFit {
    model: JointModel,
    marginals: Vec<MarginalFit>,
    vines: Vec<DVineFit>,
    cross: CrossFit,
    timing: StageTiming,
}

fn check(spec: &FitSpec, data: &PanelDataset) -> Result<Vec<usize>> {
    if spec.outcomes.is_empty() {
        return Err(Error::Empty("fit specification has no outcomes".into()));
    }
    data.check_scales(
        &spec
            .outcomes
            .iter()
            .map(|o| (o.name.clone(), o.family.scale()))
            .collect::<Vec<_>>(),
    )?;
    spec.outcomes
        .iter()
        .map(|o| {
            data.outcome_index(&o.name)
                .ok_or_else(|| Error::Data(format!("outcome `{}` missing from data", o.name)))
        })
        .collect()
}

fn trajectories(m: &Marginal, data: &PanelDataset, j: usize) -> Result<Vec<Vec<Cond>>> {
    let b = m.bind(data.schema())?;
    Ok((0..data.n_subjects())
        .map(|i| {
            (0..data.n_periods())
                .map(|t| b.dist(data.row(i, j, t)).cond(data.value(i, j, t)))
                .collect()
        })
        .collect())
}

/// Joint Nelder–Mead refit of one outcome's marginal and free tree parameters.
fn refit_outcome(
    m: &Marginal,
    vine: &DVineModel,
    data: &PanelDataset,
    j: usize,
) -> Result<(Marginal, DVineModel)> {
    let free: Vec<usize> = (0..vine.trees().len())
        .filter(|&k| !vine.trees()[k].is_independence())
        .collect();
    let np = m.params().len();
    let build = |x: &[f64]| -> Option<(Marginal, DVineModel)> {
        let mut trees = vine.trees().to_vec();
        for (q, &k) in free.iter().enumerate() {
            trees[k] = crate::bicop::BivariateCopula::new(trees[k].family(), x[np + q]).ok()?;
        }
        Some((
            m.with_params(&x[..np]),
            DVineModel::new(vine.scale(), trees),
        ))
    };
    let objective = |x: &[f64]| -> f64 {
        let Some((mm, vv)) = build(x) else {
            return f64::INFINITY;
        };
        match trajectories(&mm, data, j) {
            Ok(tr) => -ordered_sum(&tr, |t| vv.loglik(t)),
            Err(_) => f64::INFINITY,
        }
    };
    let mut init = m.params();
    let mut bounds = vec![Bound::Free; np];
    for &k in &free {
        let c = vine.trees()[k];
        let (lo, hi) = c.family().fit_bounds();
        init.push(
            c.theta()
                .clamp(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo)),
        );
        bounds.push(Bound::Interval(lo, hi));
    }
    let res = minimize(
        OptimizerProblem::new(objective, init, bounds)
            .method(Method::NelderMead)
            .tolerance(1e-9),
    )?;
    build(&res.argmin).ok_or_else(|| Error::Data("joint refit left the parameter domain".into()))
}

fn fit_point(spec: &FitSpec, data: &PanelDataset) -> Result<PointFit> {
    let pos = check(spec, data)?;
    let mut timing = StageTiming::default();

    let clock = Instant::now();
    let marginals = spec
        .outcomes
        .iter()
        .zip(&pos)
        .map(|(o, &j)| {
            fit_marginal(
                o.family,
                &o.terms,
                data.schema(),
                &data.outcome_rows(j),
                &data.outcome_values(j),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    timing.marginals = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut vines = Vec::with_capacity(pos.len());
    let mut outcomes = Vec::with_capacity(pos.len());
    for ((o, &j), mf) in spec.outcomes.iter().zip(&pos).zip(&marginals) {
        let trajs = trajectories(&mf.model, data, j)?;
        let fit = fit_dvine(o.family.scale(), &trajs, &o.vine)?;
        let (marginal, vine) = if spec.joint_margins {
            refit_outcome(&mf.model, &fit.model, data, j)?
        } else {
            (mf.model.clone(), fit.model.clone())
        };
        outcomes.push(OutcomeModel {
            name: o.name.clone(),
            marginal,
            vine,
        });
        vines.push(fit);
    }
    timing.vines = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let dim = outcomes.len();
    let staged = JointModel::new(outcomes, GaussianCrossCopula::identity(dim))?;
    let cross = if dim > 1 {
        fit_pairwise(&staged.conditionals(data)?, dim)?
    } else {
        CrossFit {
            copula: GaussianCrossCopula::identity(1),
            raw: Vec::new(),
            pair_loglik: Vec::new(),
        }
    };
    let model = JointModel::new(staged.outcomes, cross.copula.clone())?;
    timing.cross = clock.elapsed().as_secs_f64();
    Ok(PointFit {
        model,
        marginals,
        vines,
        cross,
        timing,
    })
}

/// Stage one fits each marginal, stage two each outcome's vine given its
/// marginal, stage three the cross correlation by pairwise composite
/// likelihood given both. With `bootstrap_reps > 0` the fitted model is
/// resampled on the same design and refitted with the selected families.
pub fn fit_stagewise(
    spec: &FitSpec,
    data: &PanelDataset,
    bootstrap_reps: usize,
    seed: u64,
) -> Result<(JointModel, FitReport)> {
    let fit = fit_point(spec, data)?;
    let ll = fit.model.total_loglik(data)?;
    let mut timing = fit.timing;
    let bootstrap = if bootstrap_reps > 0 {
        let clock = Instant::now();
        let b = parametric_bootstrap(
            &fit.model,
            &spec.with_selected_families(&fit.model),
            data,
            bootstrap_reps,
            seed,
        )?;
        timing.bootstrap = clock.elapsed().as_secs_f64();
        Some(b)
    } else {
        None
    };
    let report = FitReport {
        n_subjects: data.n_subjects(),
        n_periods: data.n_periods(),
        marginal_loglik: fit.marginals.iter().map(|m| m.loglik).sum(),
        vine_loglik: fit.vines.iter().map(|v| v.loglik - v.marginal_loglik).sum(),
        composite_loglik: fit.cross.pair_loglik.iter().sum(),
        total_loglik: ll.value,
        floored: ll.floored + fit.vines.iter().map(|v| v.floored).sum::<usize>(),
        converged: fit.marginals.iter().all(|m| m.converged),
        estimates: fit.model.parameters(),
        marginals: fit.marginals,
        vines: fit.vines,
        cross: fit.cross,
        bootstrap,
        timing,
    };
    Ok((fit.model, report))
}

/// Standard deviations of the refitted parameters over `reps` datasets drawn
/// from `model` on the design of `data`. Replicate `r` simulates under the
/// seed derived from `(seed, r)`.
pub fn parametric_bootstrap(
    model: &JointModel,
    spec: &FitSpec,
    data: &PanelDataset,
    reps: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let names: Vec<String> = model.parameters().keys().cloned().collect();
    let idx: Vec<u64> = (0..reps as u64).collect();
    let runs = ordered_map(&idx, |&r| -> Result<Vec<f64>> {
        let sim = model.simulate_values(data, child_seed(seed, &[r]))?;
        let fit = fit_point(spec, &sim)?;
        let p = fit.model.parameters();
        if p.len() != names.len() {
            return Err(Error::Data(
                "bootstrap refit changed the parameter set".into(),
            ));
        }
        Ok(p.values().copied().collect())
    });
    let estimates: Vec<Vec<f64>> = runs.into_iter().filter_map(Result::ok).collect();
    let failed = reps - estimates.len();
    if failed as f64 > MAX_FAILED_FRACTION * reps as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: reps,
        });
    }
    let mut se = IndexMap::new();
    if estimates.len() >= MIN_BOOTSTRAP {
        for (k, n) in names.iter().enumerate() {
            let col: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            se.insert(n.clone(), std_dev(&col));
        }
    }
    Ok(BootstrapResult {
        requested: reps,
        succeeded: estimates.len(),
        failed,
        se,
        estimates,
    })
}
