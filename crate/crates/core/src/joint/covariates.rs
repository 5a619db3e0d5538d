//! Covariate generators for simulated panels.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::numerics::rng::stream;

/// Sampling distribution of a covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    Bernoulli {
        p: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// How often a covariate is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLevel {
    /// Every (subject, outcome, period).
    Observation,
    /// Once per (subject, outcome).
    SubjectOutcome,
    /// Once per subject.
    Subject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
    pub level: CovariateLevel,
}

impl CovariateSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(Error::Config {
                field: format!("covariates.{}", self.name),
                message: m.into(),
            })
        };
        match self.kind {
            CovariateKind::Normal { mean, sd }
                if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) =>
            {
                bad("normal covariate needs finite mean and positive sd")
            }
            CovariateKind::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                bad("bernoulli p must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            CovariateKind::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("validated").sample(rng)
            }
            CovariateKind::Bernoulli { p } => {
                f64::from(u8::from(Bernoulli::new(p).expect("validated").sample(rng)))
            }
        }
    }
}

/// A panel of generated covariates with zero values. Subject `i` draws from
/// the stream keyed `[0, i]` under `seed`.
pub(crate) fn design(
    outcomes: &[String],
    n_subjects: usize,
    periods: usize,
    specs: &[CovariateSpec],
    seed: u64,
) -> Result<PanelDataset> {
    for s in specs {
        s.validate()?;
    }
    let (nj, nt, p) = (outcomes.len(), periods, specs.len());
    let mut cov = vec![0.0; n_subjects * nj * nt * p];
    for i in 0..n_subjects {
        let mut rng = stream(seed, &[0, i as u64]);
        for (k, s) in specs.iter().enumerate() {
            let shared = s.draw(&mut rng);
            for j in 0..nj {
                let per_outcome = if s.level == CovariateLevel::Subject {
                    shared
                } else {
                    s.draw(&mut rng)
                };
                for t in 0..nt {
                    let x = match s.level {
                        CovariateLevel::Observation => s.draw(&mut rng),
                        _ => per_outcome,
                    };
                    cov[((i * nj + j) * nt + t) * p + k] = x;
                }
            }
        }
    }
    let width = n_subjects.max(1).to_string().len();
    PanelDataset::from_dense(
        specs.iter().map(|s| s.name.clone()).collect(),
        (1..=n_subjects).map(|i| format!("s{i:0width$}")).collect(),
        outcomes.to_vec(),
        (1..=periods as u32).collect(),
        vec![0.0; n_subjects * nj * nt],
        cov,
    )
}
