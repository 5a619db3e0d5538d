//! Predictive distribution of the next-period aggregate outcome and its
//! out-of-sample assessment.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::joint::JointModel;
use crate::marginals::Dist;
use crate::numerics::par::ordered_map;
use crate::numerics::rng::stream;

/// Smallest Monte Carlo size accepted for a predictive sample.
pub const MIN_DRAWS: usize = 1000;

/// Default Monte Carlo size.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Monte Carlo draws of S = Σ_j Y_{T+1}^{(j)} for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSample {
    pub subject: String,
    /// Draws in generation order.
    pub draws: Vec<f64>,
    sorted: Vec<f64>,
    discrete: bool,
}

impl PredictiveSample {
    pub fn new(subject: String, draws: Vec<f64>, discrete: bool) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("predictive sample has no draws".into()));
        }
        if draws.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Domain(
                "predictive draws must be finite and nonnegative".into(),
            ));
        }
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            subject,
            draws,
            sorted,
            discrete,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Whether all draws are counts.
    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    /// Empirical F̂(s).
    pub fn cdf(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= s) as f64 / self.len() as f64
    }

    /// Empirical F̂(s⁻).
    pub fn cdf_left(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x < s) as f64 / self.len() as f64
    }

    /// Empirical pmf over 0..=max(draws, extra).
    fn pmf(&self, extra: f64) -> Vec<f64> {
        let top = self.sorted[self.len() - 1].max(extra) as usize;
        let mut p = vec![0.0; top + 1];
        let w = 1.0 / self.len() as f64;
        for &d in &self.sorted {
            p[d as usize] += w;
        }
        p
    }
}

/// Draws of the next-period aggregate for every subject of `train`, with
/// covariates of the next period taken from `next` (one period, same
/// subjects). Subject `i` draws from the stream keyed `[2, key, i]`.
pub fn predictive_samples(
    model: &JointModel,
    train: &PanelDataset,
    next: &PanelDataset,
    draws: usize,
    seed: u64,
    key: u64,
) -> Result<Vec<PredictiveSample>> {
    if draws < MIN_DRAWS {
        return Err(Error::Domain(format!(
            "at least {MIN_DRAWS} predictive draws are required"
        )));
    }
    check_holdout(train, next)?;
    let pos = model.outcome_positions(train)?;
    let next_pos = model.outcome_positions(next)?;
    let bound = model.bind(train.schema())?;
    let next_bound = model.bind(next.schema())?;
    let discrete = model
        .outcomes()
        .iter()
        .all(|o| o.marginal.scale() == crate::marginals::Scale::Discrete);
    let l = model.cross_factor();
    let subjects: Vec<usize> = (0..train.n_subjects()).collect();
    let out = ordered_map(&subjects, |&i| -> Result<PredictiveSample> {
        let ws = model.history(&bound, train, &pos, i);
        let dists: Vec<Dist> = (0..model.dim())
            .map(|j| next_bound[j].dist(next.row(i, next_pos[j], 0)))
            .collect();
        let tables: Vec<Option<Vec<f64>>> = ws
            .iter()
            .zip(&dists)
            .map(|(w, d)| w.next_cdf_table(d, 1e-12, 100_000).ok())
            .collect();
        let mut rng = stream(seed, &[2, key, i as u64]);
        let mut u = vec![0.0; model.dim()];
        let mut s = Vec::with_capacity(draws);
        for _ in 0..draws {
            model.draw_uniforms(&l, &mut rng, &mut u);
            let mut total = 0.0;
            for j in 0..model.dim() {
                total += match &tables[j] {
                    Some(t) => {
                        let k = t.partition_point(|&c| c < u[j]);
                        if k < t.len() {
                            k as f64
                        } else {
                            ws[j].next_quantile(&dists[j], u[j])
                        }
                    }
                    None => ws[j].next_quantile(&dists[j], u[j]),
                };
            }
            s.push(total);
        }
        PredictiveSample::new(train.subjects()[i].clone(), s, discrete)
    });
    out.into_iter().collect()
}

fn check_holdout(train: &PanelDataset, next: &PanelDataset) -> Result<()> {
    if next.n_periods() != 1 {
        return Err(Error::Data(format!(
            "hold-out must cover exactly one period, found {}",
            next.n_periods()
        )));
    }
    if train.subjects() != next.subjects() {
        return Err(Error::Data(
            "hold-out subjects differ from the fitted subjects".into(),
        ));
    }
    if next.periods()[0] <= *train.periods().last().expect("non-empty panel") {
        return Err(Error::Data(
            "hold-out period must follow the training periods".into(),
        ));
    }
    Ok(())
}

/// Observed aggregate per subject of a one-period panel.
pub fn observed_totals(model: &JointModel, next: &PanelDataset) -> Result<Vec<f64>> {
    let pos = model.outcome_positions(next)?;
    Ok((0..next.n_subjects())
        .map(|i| pos.iter().map(|&j| next.value(i, j, 0)).sum())
        .collect())
}

/// u = F̂(s⁻) + v (F̂(s) − F̂(s⁻)).
pub fn generalized_transform(sample: &PredictiveSample, observed: f64, v: f64) -> f64 {
    let lo = sample.cdf_left(observed);
    let hi = sample.cdf(observed);
    (lo + v * (hi - lo)).clamp(0.0, 1.0)
}

/// Two-sided Kolmogorov–Smirnov test of uniformity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// P(K > x) for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=20)
            .map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp())
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| (if k % 2 == 1 { 2.0 } else { -2.0 }) * (-2.0 * (k * k) as f64 * x * x).exp())
            .sum();
        s.clamp(0.0, 1.0)
    }
}

/// D = sup |F̂_n(u) − u| over the order statistics; p from the asymptotic
/// distribution of √n D.
pub fn ks_uniform_test(u: &[f64]) -> Result<KsResult> {
    let n = u.len();
    if n == 0 {
        return Err(Error::Empty("no values for the uniformity test".into()));
    }
    if n < 20 {
        return Err(Error::Domain(format!(
            "uniformity test needs at least 20 values, found {n}"
        )));
    }
    if u.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Domain(
            "uniformity test values must lie in [0, 1]".into(),
        ));
    }
    let mut s = u.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
        .fold(0.0, f64::max);
    Ok(KsResult {
        n,
        statistic: d,
        p_value: kolmogorov_sf(nf.sqrt() * d),
    })
}

/// Ranked probability score for counts, summed over 0..=max(draws, s);
/// CRPS mean|S − s| − ½ mean|S − S′| over the two halves of the draws otherwise.
pub fn rps(sample: &PredictiveSample, observed: f64) -> f64 {
    if sample.is_discrete() {
        let top = sample.sorted[sample.len() - 1].max(observed) as i64;
        (0..=top)
            .map(|k| {
                let f = sample.cdf(k as f64);
                let o = if observed <= k as f64 { 1.0 } else { 0.0 };
                (f - o).powi(2)
            })
            .sum()
    } else {
        let n = sample.len() as f64;
        let e1 = sample
            .draws
            .iter()
            .map(|x| (x - observed).abs())
            .sum::<f64>()
            / n;
        let h = sample.len() / 2;
        let e2 = (0..h)
            .map(|i| (sample.draws[i] - sample.draws[h + i]).abs())
            .sum::<f64>()
            / h as f64;
        e1 - 0.5 * e2
    }
}

fn count_only(sample: &PredictiveSample) -> Result<()> {
    if sample.is_discrete() {
        Ok(())
    } else {
        Err(Error::Scale(
            "quadratic and spherical scores need count-valued samples".into(),
        ))
    }
}

/// Quadratic score −2 p̂(s) + Σ_k p̂(k)².
pub fn qs(sample: &PredictiveSample, observed: f64) -> Result<f64> {
    count_only(sample)?;
    let p = sample.pmf(observed);
    Ok(-2.0 * p[observed as usize] + p.iter().map(|x| x * x).sum::<f64>())
}

/// Spherical score −p̂(s) / √(Σ_k p̂(k)²).
pub fn sphs(sample: &PredictiveSample, observed: f64) -> Result<f64> {
    count_only(sample)?;
    let p = sample.pmf(observed);
    Ok(-p[observed as usize] / p.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Share of subjects where A scores lower than B, ties counting one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Superiority {
    pub n: usize,
    pub wins: f64,
    pub fraction: f64,
    /// Exact one-sided binomial P(X ≥ ⌈wins⌉) under X ~ Bin(n, ½).
    pub p_value: f64,
}

pub fn compare_models(a: &[f64], b: &[f64]) -> Result<Superiority> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("no scores to compare".into()));
    }
    let wins: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => 1.0,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        })
        .sum();
    let n = a.len();
    let k = wins.ceil() as u64;
    let p = if k == 0 {
        1.0
    } else {
        Binomial::new(0.5, n as u64)
            .expect("valid binomial")
            .sf(k - 1)
    };
    Ok(Superiority {
        n,
        wins,
        fraction: wins / n as f64,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Scores and transformed values of one model on a hold-out period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    pub u: Vec<f64>,
    pub rps: Vec<f64>,
    pub qs: Option<Vec<f64>>,
    pub sphs: Option<Vec<f64>>,
    pub ks: KsResult,
}

/// Superiority of the first model over the second under one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleComparison {
    pub rule: String,
    pub better: String,
    pub worse: String,
    #[serde(flatten)]
    pub result: Superiority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub subjects: Vec<String>,
    pub observed: Vec<f64>,
    pub draws: usize,
    pub models: Vec<ModelScores>,
    pub comparisons: Vec<RuleComparison>,
}

/// Scores `models` on the hold-out period `next`. Model `m` uses predictive
/// draws keyed `[2, m, i]` and transform uniforms keyed `[3, m, i]`.
pub fn score_models(
    models: &[(&str, &JointModel)],
    train: &PanelDataset,
    next: &PanelDataset,
    draws: usize,
    seed: u64,
) -> Result<ScoreReport> {
    if next.n_subjects() == 0 {
        return Err(Error::Empty("hold-out has no subjects".into()));
    }
    let observed = observed_totals(models[0].1, next)?;
    let mut out = Vec::with_capacity(models.len());
    for (m, (name, model)) in models.iter().enumerate() {
        let samples = predictive_samples(model, train, next, draws, seed, m as u64)?;
        let u: Vec<f64> = samples
            .iter()
            .zip(&observed)
            .enumerate()
            .map(|(i, (s, &o))| {
                generalized_transform(s, o, stream(seed, &[3, m as u64, i as u64]).random::<f64>())
            })
            .collect();
        let rps_v: Vec<f64> = samples
            .iter()
            .zip(&observed)
            .map(|(s, &o)| rps(s, o))
            .collect();
        let discrete = samples.iter().all(PredictiveSample::is_discrete);
        let (qs_v, sphs_v) = if discrete {
            (
                Some(
                    samples
                        .iter()
                        .zip(&observed)
                        .map(|(s, &o)| qs(s, o))
                        .collect::<Result<Vec<_>>>()?,
                ),
                Some(
                    samples
                        .iter()
                        .zip(&observed)
                        .map(|(s, &o)| sphs(s, o))
                        .collect::<Result<Vec<_>>>()?,
                ),
            )
        } else {
            (None, None)
        };
        out.push(ModelScores {
            model: name.to_string(),
            ks: ks_uniform_test(&u)?,
            u,
            rps: rps_v,
            qs: qs_v,
            sphs: sphs_v,
        });
    }
    let mut comparisons = Vec::new();
    if out.len() >= 2 {
        let (a, b) = (&out[0], &out[1]);
        let mut rules = vec![("rps", a.rps.clone(), b.rps.clone())];
        if let (Some(qa), Some(qb), Some(sa), Some(sb)) = (&a.qs, &b.qs, &a.sphs, &b.sphs) {
            rules.push(("qs", qa.clone(), qb.clone()));
            rules.push(("sphs", sa.clone(), sb.clone()));
        }
        for (rule, x, y) in rules {
            comparisons.push(RuleComparison {
                rule: rule.into(),
                better: a.model.clone(),
                worse: b.model.clone(),
                result: compare_models(&x, &y)?,
            });
        }
    }
    Ok(ScoreReport {
        subjects: next.subjects().to_vec(),
        observed,
        draws,
        models: out,
        comparisons,
    })
}

/// Copula model against the independence model with the same marginals.
pub fn validate(
    model: &JointModel,
    train: &PanelDataset,
    next: &PanelDataset,
    draws: usize,
    seed: u64,
) -> Result<ScoreReport> {
    let ind = model.independence();
    score_models(
        &[("copula", model), ("independence", &ind)],
        train,
        next,
        draws,
        seed,
    )
}

#[cfg(test)]
mod tests;
