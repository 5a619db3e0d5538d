//! Tree-by-tree maximum likelihood with AIC family selection.

use serde::{Deserialize, Serialize};

use super::{condition, pair_joint, Cond, DVineModel, FLOOR};
use crate::bicop::{theta_from_tau, BivariateCopula, CopulaFamily, FamilyName};
use crate::error::{Error, Result};
use crate::marginals::Scale;
use crate::numerics::par::{ordered_map, ordered_sum};
use crate::numerics::{minimize, minimize_scalar, Bound, Method, OptimizerProblem};

/// Options for [`fit_dvine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Families compared by AIC at every tree.
    pub candidates: Vec<CopulaFamily>,
    /// Fixed family per tree, extra entries ignored; overrides `candidates`
    /// when present.
    #[serde(default)]
    pub fixed: Option<Vec<CopulaFamily>>,
    /// Stop at the first tree where independence is selected.
    #[serde(default = "yes")]
    pub truncate: bool,
}

fn yes() -> bool {
    true
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            candidates: CopulaFamily::default_candidates(),
            fixed: None,
            truncate: true,
        }
    }
}

impl FitOptions {
    pub fn fixed(families: Vec<CopulaFamily>) -> Self {
        Self {
            candidates: Vec::new(),
            fixed: Some(families),
            truncate: false,
        }
    }
}

/// Outcome of one candidate at one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub family: CopulaFamily,
    pub theta: f64,
    pub loglik: f64,
    pub aic: f64,
}

/// Selected copula of one tree with its comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFit {
    pub copula: BivariateCopula,
    /// Pair-copula log-likelihood contribution of the tree.
    pub loglik: f64,
    pub aic: f64,
    /// Curvature standard error of θ conditional on the lower trees.
    pub se: Option<f64>,
    pub candidates: Vec<CandidateFit>,
}

/// A fitted vine and its per-tree diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DVineFit {
    pub model: DVineModel,
    pub trees: Vec<TreeFit>,
    /// Σ ln f(y_t) over all observations.
    pub marginal_loglik: f64,
    /// Marginal plus pair-copula log-likelihood.
    pub loglik: f64,
    pub floored: usize,
}

fn pair_ratio(cop: &BivariateCopula, a: &Cond, b: &Cond) -> f64 {
    pair_joint(cop, a, b).max(FLOOR).ln() - a.dens.max(FLOOR).ln() - b.dens.max(FLOOR).ln()
}

fn copula_at(family: CopulaFamily, theta: f64) -> Option<BivariateCopula> {
    let theta = if family.name == FamilyName::Frank && theta.abs() < 1e-10 {
        1e-10
    } else {
        theta
    };
    BivariateCopula::new(family, theta).ok()
}

fn tree_loglik(family: CopulaFamily, theta: f64, pairs: &[(Cond, Cond)]) -> f64 {
    match copula_at(family, theta) {
        Some(c) => ordered_sum(pairs, |(a, b)| pair_ratio(&c, a, b)),
        None => f64::NEG_INFINITY,
    }
}

/// Kendall's τ magnitudes of the starting grid for [`fit_family`].
const TAU_GRID: [f64; 21] = [
    0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
    0.85, 0.9, 0.95, 0.98,
];

/// Maximises the tree log-likelihood of one family over θ: a grid in τ,
/// then Brent between the neighbours of the best grid point.
fn fit_family(family: CopulaFamily, pairs: &[(Cond, Cond)]) -> CandidateFit {
    if family.is_independence() {
        return CandidateFit {
            family,
            theta: 0.0,
            loglik: 0.0,
            aic: 0.0,
        };
    }
    let (lo, hi) = family.fit_bounds();
    let nll = |t: f64| -tree_loglik(family, t, pairs);
    let mut grid = vec![lo, hi];
    for tau in TAU_GRID {
        for t in [tau, -tau] {
            if let Ok(theta) = theta_from_tau(family, t) {
                if theta > lo && theta < hi {
                    grid.push(theta);
                }
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let values: Vec<f64> = grid.iter().map(|&t| nll(t)).collect();
    let g = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid holds the bounds");
    let (a, b) = (grid[g.saturating_sub(1)], grid[(g + 1).min(grid.len() - 1)]);
    let (mut theta, mut nll_min) = minimize_scalar(nll, a, b, 1e-6);
    if !(nll_min <= values[g]) {
        (theta, nll_min) = (grid[g], values[g]);
    }
    let nll = nll_min;
    let k = family.n_params() as f64;
    CandidateFit {
        family,
        theta,
        loglik: -nll,
        aic: 2.0 * k + 2.0 * nll,
    }
}

fn curvature_se(family: CopulaFamily, theta: f64, pairs: &[(Cond, Cond)]) -> Option<f64> {
    let (lo, hi) = family.fit_bounds();
    let h = 1e-4 * theta.abs().max(1.0);
    if family.is_independence() || theta - h <= lo || theta + h >= hi {
        return None;
    }
    let f = |t: f64| tree_loglik(family, t, pairs);
    let d2 = (f(theta + h) - 2.0 * f(theta) + f(theta - h)) / (h * h);
    (d2 < 0.0).then(|| (-1.0 / d2).sqrt())
}

/// Sequential tree-wise fit of a common-parameter D-vine to complete
/// trajectories of equal length.
pub fn fit_dvine(scale: Scale, trajs: &[Vec<Cond>], opts: &FitOptions) -> Result<DVineFit> {
    let n = trajs.len();
    if n == 0 {
        return Err(Error::Empty("no trajectories for the vine fit".into()));
    }
    let t_len = trajs[0].len();
    if let Some(bad) = trajs.iter().find(|t| t.len() != t_len) {
        return Err(Error::LengthMismatch(bad.len(), t_len));
    }
    let n_trees = t_len.saturating_sub(1);
    if let Some(f) = &opts.fixed {
        if f.len() < n_trees {
            return Err(Error::LengthMismatch(f.len(), n_trees));
        }
    } else if opts.candidates.is_empty() {
        return Err(Error::Empty("no candidate copula families".into()));
    }
    let marginal_loglik: f64 = ordered_sum(trajs, |t| {
        t.iter().map(|c| c.dens.max(FLOOR).ln()).sum::<f64>()
    });

    // level-(k−1) conditionals per subject: forward (s | later) and backward (t | earlier)
    let mut fw: Vec<Vec<Cond>> = trajs.to_vec();
    let mut bw: Vec<Vec<Cond>> = trajs.to_vec();
    let mut trees = Vec::with_capacity(n_trees);
    let mut fits = Vec::with_capacity(n_trees);
    let mut floored = 0usize;
    let mut stopped = false;
    for k in 1..=n_trees {
        let m = t_len - k;
        let pairs: Vec<(Cond, Cond)> = (0..n)
            .flat_map(|i| (0..m).map(move |s| (i, s)))
            .map(|(i, s)| (fw[i][s], bw[i][s + 1]))
            .collect();
        let families: Vec<CopulaFamily> = match &opts.fixed {
            Some(f) => vec![f[k - 1]],
            None if stopped => vec![CopulaFamily::INDEPENDENCE],
            None => {
                let mut c = opts.candidates.clone();
                if !c.iter().any(CopulaFamily::is_independence) {
                    c.insert(0, CopulaFamily::INDEPENDENCE);
                }
                c
            }
        };
        let table: Vec<CandidateFit> = families.iter().map(|f| fit_family(*f, &pairs)).collect();
        let best = table
            .iter()
            .filter(|c| c.aic.is_finite())
            .min_by(|a, b| a.aic.total_cmp(&b.aic))
            .cloned()
            .ok_or_else(|| Error::Data(format!("no candidate could be fitted at tree {k}")))?;
        let cop = copula_at(best.family, best.theta).unwrap_or_else(BivariateCopula::independence);
        if cop.is_independence() && opts.fixed.is_none() && opts.truncate {
            stopped = true;
        }
        let se = curvature_se(best.family, best.theta, &pairs);
        fits.push(TreeFit {
            copula: cop,
            loglik: best.loglik,
            aic: best.aic,
            se,
            candidates: table,
        });
        trees.push(cop);

        if k < n_trees {
            let updated: Vec<(Cond, Cond, usize)> = if cop.is_independence() {
                pairs.iter().map(|(a, b)| (*a, *b, 0)).collect()
            } else {
                ordered_map(&pairs, |(a, b)| {
                    let mut fl = 0;
                    let (_, l, r) = condition(&cop, a, b, &mut fl);
                    (l, r, fl)
                })
            };
            for i in 0..n {
                for s in 0..m {
                    let (l, r, fl) = updated[i * m + s];
                    fw[i][s] = l;
                    bw[i][s] = r;
                    floored += fl;
                }
                fw[i].truncate(m);
                bw[i].truncate(m);
            }
        }
    }
    let mut model = DVineModel::new(scale, trees);
    model.set_standard_errors(fits.iter().map(|f| f.se).collect());
    let loglik = marginal_loglik + fits.iter().map(|f| f.loglik).sum::<f64>();
    Ok(DVineFit {
        model,
        trees: fits,
        marginal_loglik,
        loglik,
        floored,
    })
}

/// Joint re-estimation of all non-independence tree parameters with the
/// selected families held fixed, starting from the sequential estimates.
pub fn refit_simultaneous(fit: &DVineFit, trajs: &[Vec<Cond>]) -> Result<DVineFit> {
    let base = &fit.model;
    let free: Vec<usize> = (0..base.trees().len())
        .filter(|&k| !base.trees()[k].is_independence())
        .collect();
    if free.is_empty() {
        return Ok(fit.clone());
    }
    let build = |x: &[f64]| -> Option<DVineModel> {
        let mut trees = base.trees().to_vec();
        for (j, &k) in free.iter().enumerate() {
            trees[k] = copula_at(trees[k].family(), x[j])?;
        }
        Some(DVineModel::new(base.scale(), trees))
    };
    let objective = |x: &[f64]| -> f64 {
        match build(x) {
            Some(m) => -ordered_sum(trajs, |t| m.loglik(t)),
            None => f64::INFINITY,
        }
    };
    let init: Vec<f64> = free.iter().map(|&k| base.trees()[k].theta()).collect();
    let bounds: Vec<Bound> = free
        .iter()
        .map(|&k| {
            let (lo, hi) = base.trees()[k].family().fit_bounds();
            Bound::Interval(lo, hi)
        })
        .collect();
    let init: Vec<f64> = init
        .iter()
        .zip(&bounds)
        .map(|(x, b)| match b {
            Bound::Interval(lo, hi) => x.clamp(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo)),
            _ => *x,
        })
        .collect();
    let res = minimize(
        OptimizerProblem::new(objective, init, bounds)
            .method(Method::NelderMead)
            .tolerance(1e-9),
    )?;
    let model = build(&res.argmin)
        .ok_or_else(|| Error::Data("simultaneous refit left the parameter domain".into()))?;
    let mut out = fit.clone();
    for &k in &free {
        out.trees[k].copula = model.trees()[k];
        out.trees[k].se = None;
    }
    out.model = model;
    out.loglik = -res.value;
    Ok(out)
}
