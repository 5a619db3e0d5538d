//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use longvine::bicop::{theta_from_tau, BivariateCopula, CopulaFamily};
use longvine::crosscop::GaussianCrossCopula;
use longvine::dvine::{DVineModel, FitOptions};
use longvine::joint::{presets, CovariateSpec, FitSpec, JointModel, OutcomeModel, OutcomeSpec};
use longvine::marginals::{Coefficients, Marginal, MarginalFamily, Terms};
use longvine::numerics::CorrelationMatrix;
use longvine::predict::{DEFAULT_DRAWS, MIN_DRAWS};
use serde::Deserialize;

use crate::error::CliError;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "LONGVINE_OUT";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_subjects")]
    pub n_subjects: usize,
    /// Training periods; simulated panels carry one more for hold-out.
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_one")]
    pub replications: usize,
    /// Parametric bootstrap replicates per fit.
    #[serde(default)]
    pub bootstrap: usize,
    /// Monte Carlo size of each predictive distribution.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub joint_margins: bool,
    /// `count` or `semicontinuous`; exclusive with `outcomes`.
    pub preset: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub outcomes: Vec<OutcomeConfig>,
    pub cross: Option<CrossConfig>,
    pub out: Option<PathBuf>,
}

fn default_subjects() -> usize {
    500
}

fn default_periods() -> usize {
    4
}

fn default_one() -> usize {
    1
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn yes() -> bool {
    true
}

/// Fit specification and, for simulation, generating values of one outcome.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub name: String,
    pub family: MarginalFamily,
    #[serde(default)]
    pub terms: Vec<String>,
    pub inflation_terms: Option<Vec<String>>,
    pub candidates: Option<Vec<CopulaFamily>>,
    pub fixed: Option<Vec<CopulaFamily>>,
    #[serde(default = "yes")]
    pub truncate: bool,
    pub mean: Option<Coefficients>,
    pub shape: Option<f64>,
    pub zero: Option<Coefficients>,
    pub one: Option<Coefficients>,
    #[serde(default)]
    pub trees: Vec<TreeConfig>,
}

/// One tree of a generating vine, given by θ or by Kendall's τ.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub family: CopulaFamily,
    pub theta: Option<f64>,
    pub tau: Option<f64>,
}

/// Cross correlations in (1,2), (1,3), …, (2,3), … order.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossConfig {
    pub rho: Vec<f64>,
}

/// A generating model with its covariates.
#[derive(Debug, Clone)]
pub struct Truth {
    pub model: JointModel,
    pub covariates: Vec<CovariateSpec>,
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config(format!("{}: {}", field.into(), message.into()))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications < 1 {
            return Err(config_err("replications", "must be at least 1"));
        }
        if self.n_subjects < 1 {
            return Err(config_err("n_subjects", "must be at least 1"));
        }
        if self.periods < 1 {
            return Err(config_err("periods", "must be at least 1"));
        }
        if self.draws < MIN_DRAWS {
            return Err(config_err("draws", format!("must be at least {MIN_DRAWS}")));
        }
        match (&self.preset, self.outcomes.is_empty()) {
            (Some(_), false) => {
                return Err(config_err("preset", "cannot be combined with [[outcomes]]"))
            }
            (Some(p), true) if presets::design(p).is_none() => {
                return Err(config_err("preset", format!("unknown preset `{p}`")))
            }
            (None, true) => {
                return Err(config_err(
                    "outcomes",
                    "give a preset or at least one outcome",
                ))
            }
            _ => {}
        }
        for (k, c) in self.covariates.iter().enumerate() {
            c.validate()
                .map_err(|e| config_err(format!("covariates[{k}]"), e.to_string()))?;
        }
        for (k, o) in self.outcomes.iter().enumerate() {
            if self.outcomes[..k].iter().any(|p| p.name == o.name) {
                return Err(config_err(
                    format!("outcomes[{k}].name"),
                    format!("duplicate outcome `{}`", o.name),
                ));
            }
            for (t, tree) in o.trees.iter().enumerate() {
                if tree.theta.is_some() == tree.tau.is_some() {
                    return Err(config_err(
                        format!("outcomes[{k}].trees[{t}]"),
                        "give exactly one of theta and tau",
                    ));
                }
            }
        }
        if let Some(c) = &self.cross {
            let d = self
                .outcomes
                .len()
                .max(if self.preset.is_some() { 3 } else { 0 });
            if c.rho.len() != d * (d - 1) / 2 {
                return Err(config_err(
                    "cross.rho",
                    format!("expected {} correlations", d * (d - 1) / 2),
                ));
            }
        }
        Ok(())
    }

    /// Seed from the flag, else from the file.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| config_err("seed", "required for this command"))
    }

    /// Output directory: flag, environment, file, then `out`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn fit_spec(&self) -> Result<FitSpec, CliError> {
        let mut spec = match &self.preset {
            Some(p) => presets::design(p).expect("validated").spec,
            None => FitSpec {
                outcomes: self
                    .outcomes
                    .iter()
                    .map(|o| OutcomeSpec {
                        name: o.name.clone(),
                        family: o.family,
                        terms: Terms {
                            mean: o.terms.clone(),
                            inflation: o.inflation_terms.clone(),
                        },
                        vine: FitOptions {
                            candidates: o
                                .candidates
                                .clone()
                                .unwrap_or_else(CopulaFamily::default_candidates),
                            fixed: o.fixed.clone(),
                            truncate: o.truncate,
                        },
                    })
                    .collect(),
                joint_margins: false,
            },
        };
        spec.joint_margins = self.joint_margins;
        Ok(spec)
    }

    /// Generating model for simulation commands.
    pub fn truth(&self) -> Result<Truth, CliError> {
        if let Some(p) = &self.preset {
            let d = presets::design(p).expect("validated");
            let model = match &self.cross {
                Some(c) => {
                    let cross = cross_copula(d.model.dim(), &c.rho)?;
                    JointModel::new(d.model.outcomes().to_vec(), cross)
                        .map_err(|e| config_err("cross", e.to_string()))?
                }
                None => d.model,
            };
            let covariates = if self.covariates.is_empty() {
                d.covariates
            } else {
                self.covariates.clone()
            };
            return Ok(Truth { model, covariates });
        }
        let outcomes = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let field = |f: &str| format!("outcomes[{k}].{f}");
                let mean = o.mean.clone().ok_or_else(|| {
                    config_err(field("mean"), "generating coefficients are required")
                })?;
                let marginal = Marginal {
                    family: o.family,
                    mean,
                    shape: o.shape,
                    zero: o.zero.clone(),
                    one: o.one.clone(),
                };
                marginal
                    .validate()
                    .map_err(|e| config_err(field("family"), e.to_string()))?;
                let trees = o
                    .trees
                    .iter()
                    .enumerate()
                    .map(|(t, tc)| {
                        let at = field(&format!("trees[{t}]"));
                        let theta = match (tc.theta, tc.tau) {
                            (Some(th), _) => th,
                            (None, Some(tau)) => theta_from_tau(tc.family, tau)
                                .map_err(|e| config_err(&at, e.to_string()))?,
                            (None, None) => unreachable!("validated"),
                        };
                        BivariateCopula::new(tc.family, theta)
                            .map_err(|e| config_err(&at, e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(OutcomeModel {
                    name: o.name.clone(),
                    marginal,
                    vine: DVineModel::new(o.family.scale(), trees),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let d = outcomes.len();
        let cross = match &self.cross {
            Some(c) => cross_copula(d, &c.rho)?,
            None => GaussianCrossCopula::identity(d),
        };
        let model =
            JointModel::new(outcomes, cross).map_err(|e| config_err("outcomes", e.to_string()))?;
        Ok(Truth {
            model,
            covariates: self.covariates.clone(),
        })
    }
}

fn cross_copula(dim: usize, rho: &[f64]) -> Result<GaussianCrossCopula, CliError> {
    CorrelationMatrix::from_pairs(dim, rho)
        .and_then(GaussianCrossCopula::new)
        .map_err(|e| config_err("cross.rho", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_config() {
        let c = RunConfig::from_toml("seed = 3\npreset = \"count\"\nbootstrap = 5\n").unwrap();
        assert_eq!(c.n_subjects, 500);
        assert_eq!(c.truth().unwrap().model.dim(), 3);
        assert_eq!(c.fit_spec().unwrap().outcomes.len(), 3);
        assert_eq!(c.seed(None).unwrap(), 3);
        assert_eq!(c.seed(Some(9)).unwrap(), 9);
    }

    #[test]
    fn explicit_outcomes() {
        let text = r#"
seed = 1
[[covariates]]
name = "x"
kind = "normal"
level = "observation"

[[outcomes]]
name = "claims"
family = "zip"
terms = ["x"]
inflation_terms = []
mean = { intercept = 0.1, x = 0.3 }
zero = { intercept = -1.0 }
trees = [{ family = "clayton", tau = 0.3 }, { family = "frank", theta = 1.0 }]

[[outcomes]]
name = "cost"
family = "logit-gamma"
terms = ["x"]
mean = { intercept = 5.0 }
shape = 2.0
zero = { intercept = 1.0 }

[cross]
rho = [0.4]
"#;
        let c = RunConfig::from_toml(text).unwrap();
        let t = c.truth().unwrap();
        assert_eq!(t.model.outcomes()[0].vine.trees().len(), 2);
        assert!((t.model.outcomes()[0].vine.trees()[0].tau() - 0.3).abs() < 1e-8);
        let spec = c.fit_spec().unwrap();
        assert_eq!(spec.outcomes[0].terms.inflation_terms().len(), 0);
        assert_eq!(spec.outcomes[1].terms.inflation_terms(), ["x".to_string()]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = |text: &str, needle: &str| {
            let e = RunConfig::from_toml(text).unwrap_err();
            assert!(matches!(e, CliError::Config(_)));
            assert!(e.to_string().contains(needle), "{e}");
        };
        bad("preset = \"count\"\nreplications = 0\n", "replications");
        bad("preset = \"nope\"\n", "preset");
        bad("preset = \"count\"\ndraws = 10\n", "draws");
        bad(
            "[[outcomes]]\nname = \"a\"\nfamily = \"poison\"\n",
            "family",
        );
        bad("[[outcomes]]\nname = \"a\"\nfamily = \"poisson\"\ntrees = [{ family = \"joe7\", theta = 2.0 }]\n", "joe7");
        bad(
            "[[outcomes]]\nname = \"a\"\nfamily = \"poisson\"\ntrees = [{ family = \"joe\" }]\n",
            "outcomes[0].trees[0]",
        );
        bad("preset = \"count\"\n[cross]\nrho = [0.1]\n", "cross.rho");
        bad("preset = \"count\"\nsubjects = 3\n", "subjects");
        assert!(RunConfig::from_toml("preset = \"count\"\n")
            .unwrap()
            .seed(None)
            .is_err());
    }
}
