//! Replicated simulate-and-fit experiments with bootstrap interval coverage.

use indexmap::IndexMap;
use longvine::joint::{fit_stagewise, simulate_dataset, FitSpec};
use longvine::numerics::normal::std_normal_quantile;
use longvine::numerics::par::ordered_map;
use longvine::numerics::rng::child_seed;
use longvine::numerics::stats::{mean, std_dev};
use serde::Serialize;

use crate::config::{RunConfig, Truth};
use crate::error::CliError;

/// Nominal levels of the reported intervals.
pub const LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILED_REPLICATIONS: f64 = 0.1;

/// Point estimates and bootstrap standard errors of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub estimates: IndexMap<String, f64>,
    pub se: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub truth: f64,
    pub n: usize,
    pub mean: f64,
    pub bias: f64,
    /// Absent for a single replication.
    pub sd: Option<f64>,
    pub mc_se: Option<f64>,
    /// Share of replications whose interval estimate ± z·se covers the truth,
    /// one entry per level; absent without bootstrap.
    pub coverage: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub n_subjects: usize,
    pub periods: usize,
    pub replications: usize,
    pub bootstrap: usize,
    pub succeeded: usize,
    pub failures: Vec<(usize, String)>,
    pub levels: Vec<f64>,
    pub parameters: Vec<ParameterSummary>,
    #[serde(skip)]
    pub runs: Vec<Replication>,
}

impl ExperimentSummary {
    pub fn too_many_failures(&self) -> bool {
        self.failures.len() as f64 > MAX_FAILED_REPLICATIONS * self.replications as f64
    }

    pub fn get(&self, parameter: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.parameter == parameter)
    }
}

fn replicate(
    truth: &Truth,
    spec: &FitSpec,
    cfg: &RunConfig,
    seed: u64,
    r: usize,
) -> Result<Replication, String> {
    let data = simulate_dataset(
        &truth.model,
        cfg.n_subjects,
        cfg.periods,
        &truth.covariates,
        child_seed(seed, &[r as u64]),
    )
    .map_err(|e| e.to_string())?;
    let (model, report) =
        fit_stagewise(spec, &data, cfg.bootstrap, child_seed(seed, &[r as u64, 1]))
            .map_err(|e| e.to_string())?;
    if !report.converged {
        return Err("marginal fit did not converge".into());
    }
    Ok(Replication {
        index: r,
        estimates: model.parameters(),
        se: report.bootstrap.map(|b| b.se).unwrap_or_default(),
    })
}

/// Simulates `replications` panels from the configured truth and fits each.
/// Replication `r` simulates under the seed derived from `(seed, r)` and
/// bootstraps under the one derived from `(seed, r, 1)`.
pub fn run_experiment(cfg: &RunConfig, seed: u64) -> Result<ExperimentSummary, CliError> {
    let truth = cfg.truth()?;
    let spec = cfg.fit_spec()?;
    let idx: Vec<usize> = (0..cfg.replications).collect();
    let results = ordered_map(&idx, |&r| replicate(&truth, &spec, cfg, seed, r));
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((r, e)),
        }
    }
    let z: Vec<f64> = LEVELS
        .iter()
        .map(|l| std_normal_quantile(0.5 + l / 2.0).expect("level in (0, 1)"))
        .collect();
    let parameters = truth
        .model
        .parameters()
        .into_iter()
        .map(|(name, value)| {
            let est: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.estimates.get(&name).copied())
                .collect();
            let n = est.len();
            let m = if n > 0 { mean(&est) } else { f64::NAN };
            let sd = (n > 1).then(|| std_dev(&est));
            let with_se: Vec<(f64, f64)> = runs
                .iter()
                .filter_map(|r| Some((*r.estimates.get(&name)?, *r.se.get(&name)?)))
                .collect();
            let coverage = (cfg.bootstrap > 0 && !with_se.is_empty()).then(|| {
                z.iter()
                    .map(|zq| {
                        with_se
                            .iter()
                            .filter(|(e, s)| (e - value).abs() <= zq * s)
                            .count() as f64
                            / with_se.len() as f64
                    })
                    .collect()
            });
            ParameterSummary {
                parameter: name,
                truth: value,
                n,
                mean: m,
                bias: m - value,
                sd,
                mc_se: sd.map(|s| s / (n as f64).sqrt()),
                coverage,
            }
        })
        .collect();
    Ok(ExperimentSummary {
        seed,
        n_subjects: cfg.n_subjects,
        periods: cfg.periods,
        replications: cfg.replications,
        bootstrap: cfg.bootstrap,
        succeeded: runs.len(),
        failures,
        levels: LEVELS.to_vec(),
        parameters,
        runs,
    })
}
