//! The two simulation designs: count and semi-continuous outcomes, three
//! outcomes over four periods with rotated Joe vines.

use super::{
    CovariateKind, CovariateLevel, CovariateSpec, FitSpec, JointModel, OutcomeModel, OutcomeSpec,
};
use crate::bicop::{BivariateCopula, CopulaFamily, FamilyName};
use crate::crosscop::GaussianCrossCopula;
use crate::dvine::{DVineModel, FitOptions};
use crate::error::Result;
use crate::marginals::{coefficients, Marginal, MarginalFamily, Terms};
use crate::numerics::CorrelationMatrix;

/// Tree parameters of the three outcomes.
pub const ZETA: [[f64; 3]; 3] = [[1.77, 1.44, 1.19], [3.83, 2.22, 1.44], [18.74, 3.83, 1.77]];

/// Cross correlations (ρ12, ρ13, ρ23).
pub const RHO: [f64; 3] = [0.2, 0.5, 0.8];

pub const OUTCOMES: [&str; 3] = ["y1", "y2", "y3"];

/// A simulation design: the generating model, its covariates and the fit.
#[derive(Debug, Clone)]
pub struct Design {
    pub model: JointModel,
    pub covariates: Vec<CovariateSpec>,
    pub spec: FitSpec,
}

pub fn joe180() -> CopulaFamily {
    CopulaFamily::new(FamilyName::Joe, 180).expect("rotation 180 is valid")
}

/// X1 ~ N(0, 1) per observation, X2 ~ Bernoulli(0.4) per subject and outcome.
pub fn covariates() -> Vec<CovariateSpec> {
    vec![
        CovariateSpec {
            name: "x1".into(),
            kind: CovariateKind::Normal { mean: 0.0, sd: 1.0 },
            level: CovariateLevel::Observation,
        },
        CovariateSpec {
            name: "x2".into(),
            kind: CovariateKind::Bernoulli { p: 0.4 },
            level: CovariateLevel::SubjectOutcome,
        },
    ]
}

fn build(marginal: Marginal, zeta: &[[f64; 3]; 3], rho: &[f64; 3]) -> Result<Design> {
    let scale = marginal.scale();
    let outcomes = OUTCOMES
        .iter()
        .zip(zeta)
        .map(|(name, z)| {
            let trees = z
                .iter()
                .map(|&t| BivariateCopula::new(joe180(), t))
                .collect::<Result<Vec<_>>>()?;
            Ok(OutcomeModel {
                name: name.to_string(),
                marginal: marginal.clone(),
                vine: DVineModel::new(scale, trees),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cross = GaussianCrossCopula::new(CorrelationMatrix::from_pairs(3, rho)?)?;
    let spec = FitSpec {
        outcomes: OUTCOMES
            .iter()
            .map(|name| OutcomeSpec {
                name: name.to_string(),
                family: marginal.family,
                terms: Terms::new(&["x1", "x2"]),
                vine: FitOptions::fixed(vec![joe180(); 3]),
            })
            .collect(),
        joint_margins: false,
    };
    Ok(Design {
        model: JointModel::new(outcomes, cross)?,
        covariates: covariates(),
        spec,
    })
}

/// Poisson margins with ln λ = −1 + 0.5 x1 + 0.5 x2.
pub fn count_marginal() -> Marginal {
    Marginal {
        family: MarginalFamily::Poisson,
        mean: coefficients(-1.0, &[("x1", 0.5), ("x2", 0.5)]),
        shape: None,
        zero: None,
        one: None,
    }
}

/// Zero mass with logit q = 2 − x1 − 2 x2; gamma severity with
/// ln μ = 10 + x1 + 0.5 x2 and shape 5000.
pub fn semicontinuous_marginal() -> Marginal {
    Marginal {
        family: MarginalFamily::LogitGamma,
        mean: coefficients(10.0, &[("x1", 1.0), ("x2", 0.5)]),
        shape: Some(5000.0),
        zero: Some(coefficients(2.0, &[("x1", -1.0), ("x2", -2.0)])),
        one: None,
    }
}

pub fn count_design() -> Design {
    build(count_marginal(), &ZETA, &RHO).expect("count design is valid")
}

pub fn semicontinuous_design() -> Design {
    build(semicontinuous_marginal(), &ZETA, &RHO).expect("semi-continuous design is valid")
}

/// Named design, `count` or `semicontinuous`.
pub fn design(name: &str) -> Option<Design> {
    match name {
        "count" => Some(count_design()),
        "semicontinuous" | "semi-continuous" => Some(semicontinuous_design()),
        _ => None,
    }
}
