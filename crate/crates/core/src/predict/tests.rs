use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::*;
use crate::bicop::BivariateCopula;
use crate::crosscop::GaussianCrossCopula;
use crate::dvine::DVineModel;
use crate::joint::presets::{count_design, joe180, semicontinuous_design};
use crate::joint::{simulate_dataset, OutcomeModel};
use crate::marginals::{coefficients, Marginal, MarginalFamily, Scale};
use crate::numerics::CorrelationMatrix;

fn poisson(b0: f64) -> Marginal {
    Marginal {
        family: MarginalFamily::Poisson,
        mean: coefficients(b0, &[]),
        shape: None,
        zero: None,
        one: None,
    }
}

fn pair(b: [f64; 2], rho: f64, vine: Option<f64>) -> JointModel {
    let outcomes = ["a", "b"]
        .iter()
        .zip(b)
        .map(|(n, b0)| OutcomeModel {
            name: n.to_string(),
            marginal: poisson(b0),
            vine: match vine {
                Some(t) => DVineModel::new(
                    Scale::Discrete,
                    vec![BivariateCopula::new(joe180(), t).unwrap()],
                ),
                None => DVineModel::independence(Scale::Discrete, 0),
            },
        })
        .collect();
    JointModel::new(
        outcomes,
        GaussianCrossCopula::new(CorrelationMatrix::from_pairs(2, &[rho]).unwrap()).unwrap(),
    )
    .unwrap()
}

fn split(data: &PanelDataset) -> (PanelDataset, PanelDataset) {
    let t = data.n_periods();
    (
        data.select_periods(&(0..t - 1).collect::<Vec<_>>())
            .unwrap(),
        data.select_periods(&[t - 1]).unwrap(),
    )
}

fn sample(draws: Vec<f64>, discrete: bool) -> PredictiveSample {
    PredictiveSample::new("s".into(), draws, discrete).unwrap()
}

fn empirical_pmf(s: &PredictiveSample, k: usize) -> f64 {
    s.draws.iter().filter(|&&d| d == k as f64).count() as f64 / s.len() as f64
}

#[test]
fn aggregate_matches_rectangle_convolution() {
    let model = pair([0.2, 0.6], 0.6, None);
    let data = simulate_dataset(&model, 3, 2, &[], 1).unwrap();
    let (train, next) = split(&data);
    let b = 200_000;
    let samples = predictive_samples(&model, &train, &next, b, 9, 0).unwrap();
    let bound = model.bind(next.schema()).unwrap();
    let d0 = bound[0].dist(&[]);
    let d1 = bound[1].dist(&[]);
    for k in 0..8usize {
        let p: f64 = (0..=k)
            .map(|a| {
                let c = k - a;
                model
                    .cross()
                    .rectangle(
                        &[d0.cdf(a as f64 - 1.0), d1.cdf(c as f64 - 1.0)],
                        &[d0.cdf(a as f64), d1.cdf(c as f64)],
                    )
                    .unwrap()
            })
            .sum();
        let se = (p * (1.0 - p) / b as f64).sqrt();
        let got = empirical_pmf(&samples[0], k);
        assert!(
            (got - p).abs() < 4.0 * se + 1e-9,
            "P(S = {k}): {got} vs {p}"
        );
    }
}

#[test]
fn aggregate_matches_conditional_convolution_under_independence() {
    let model = pair([0.5, 1.0], 0.0, Some(4.0));
    let data = simulate_dataset(&model, 2, 3, &[], 3).unwrap();
    let (train, next) = split(&data);
    let b = 200_000;
    let samples = predictive_samples(&model, &train, &next, b, 4, 0).unwrap();
    let pos = model.outcome_positions(&train).unwrap();
    let bound = model.bind(train.schema()).unwrap();
    for i in 0..2 {
        let ws = model.history(&bound, &train, &pos, i);
        let pmfs: Vec<Vec<f64>> = ws
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let t = w
                    .next_cdf_table(&bound[j].dist(&[]), 1e-14, 10_000)
                    .unwrap();
                (0..t.len())
                    .map(|k| t[k] - if k == 0 { 0.0 } else { t[k - 1] })
                    .collect()
            })
            .collect();
        for k in 0..10usize {
            let p: f64 = (0..=k)
                .map(|a| {
                    pmfs[0].get(a).copied().unwrap_or(0.0)
                        * pmfs[1].get(k - a).copied().unwrap_or(0.0)
                })
                .sum();
            let se = (p * (1.0 - p) / b as f64).sqrt();
            let got = empirical_pmf(&samples[i], k);
            assert!(
                (got - p).abs() < 4.0 * se + 1e-9,
                "subject {i}, P(S = {k}): {got} vs {p}"
            );
        }
    }
}

#[test]
fn degenerate_margins_give_zero_scores() {
    let model = pair([-60.0, -60.0], 0.3, None);
    let data = simulate_dataset(&model, 20, 2, &[], 2).unwrap();
    let (train, next) = split(&data);
    let samples = predictive_samples(&model, &train, &next, MIN_DRAWS, 1, 0).unwrap();
    for s in &samples {
        assert!(s.draws.iter().all(|&d| d == 0.0));
        assert_eq!(rps(s, 0.0), 0.0);
        assert_eq!(generalized_transform(s, 0.0, 0.3), 0.3);
    }
}

#[test]
fn too_few_draws_rejected() {
    let model = pair([0.0, 0.0], 0.3, None);
    let data = simulate_dataset(&model, 2, 2, &[], 2).unwrap();
    let (train, next) = split(&data);
    assert!(matches!(
        predictive_samples(&model, &train, &next, 999, 1, 0),
        Err(Error::Domain(_))
    ));
}

#[test]
fn holdout_must_be_one_later_period() {
    let model = pair([0.0, 0.0], 0.3, None);
    let data = simulate_dataset(&model, 2, 3, &[], 2).unwrap();
    let train = data.select_periods(&[0, 1]).unwrap();
    assert!(predictive_samples(
        &model,
        &train,
        &data.select_periods(&[1, 2]).unwrap(),
        MIN_DRAWS,
        1,
        0
    )
    .is_err());
    assert!(predictive_samples(
        &model,
        &train,
        &data.select_periods(&[0]).unwrap(),
        MIN_DRAWS,
        1,
        0
    )
    .is_err());
}

#[test]
fn rps_two_point() {
    let s = sample([0.0, 1.0].repeat(500), true);
    assert!((rps(&s, 0.0) - 0.25).abs() < 1e-12);
    assert!((rps(&s, 1.0) - 0.25).abs() < 1e-12);
    assert!((rps(&s, 3.0) - 2.25).abs() < 1e-12);
}

#[test]
fn crps_exponential_closed_form() {
    let mut rng = crate::numerics::rng::stream(11, &[0]);
    let e = Exp::new(1.0).unwrap();
    let s = sample((0..400_000).map(|_| e.sample(&mut rng)).collect(), false);
    for y in [0.2f64, 1.0, 3.0] {
        let exact = y + 2.0 * (-y).exp() - 1.5;
        assert!(
            (rps(&s, y) - exact).abs() < 0.01,
            "y = {y}: {} vs {exact}",
            rps(&s, y)
        );
    }
}

#[test]
fn quadratic_and_spherical_on_uniform() {
    let s = sample((0..1000).map(|i| (i % 10) as f64).collect(), true);
    assert!((qs(&s, 3.0).unwrap() + 0.1).abs() < 1e-12);
    assert!((sphs(&s, 3.0).unwrap() + 0.1 / 0.1f64.sqrt()).abs() < 1e-12);
    assert!((qs(&s, 12.0).unwrap() - 0.1).abs() < 1e-12);
    assert!(matches!(
        qs(&sample(vec![0.5; 1000], false), 0.5),
        Err(Error::Scale(_))
    ));
    assert!(matches!(
        sphs(&sample(vec![0.5; 1000], false), 0.5),
        Err(Error::Scale(_))
    ));
}

#[test]
fn transform_interpolates_atoms() {
    let s = sample([0.0, 1.0, 2.0, 3.0].repeat(250), true);
    assert!((generalized_transform(&s, 1.0, 0.0) - 0.25).abs() < 1e-12);
    assert!((generalized_transform(&s, 1.0, 1.0) - 0.5).abs() < 1e-12);
    assert!((generalized_transform(&s, 1.0, 0.5) - 0.375).abs() < 1e-12);
    let c = sample((1..=1000).map(|i| i as f64 / 1000.0).collect(), false);
    assert!((generalized_transform(&c, 0.2505, 0.7) - 0.25).abs() < 1e-12);
}

#[test]
fn superiority_binomial() {
    let a: Vec<f64> = (0..100).map(|i| if i < 69 { 0.0 } else { 1.0 }).collect();
    let b = vec![0.5; 100];
    let r = compare_models(&a, &b).unwrap();
    assert_eq!(r.wins, 69.0);
    assert!(r.p_value < 0.001);
    let tie = compare_models(&b, &b).unwrap();
    assert_eq!(tie.fraction, 0.5);
    assert!(tie.p_value > 0.4);
    let none = compare_models(&[1.0; 30], &[0.0; 30]).unwrap();
    assert_eq!(none.p_value, 1.0);
    let all = compare_models(&[0.0; 10], &[1.0; 10]).unwrap();
    assert!((all.p_value - 0.5f64.powi(10)).abs() < 1e-15);
    assert!(compare_models(&[0.0], &[0.0, 1.0]).is_err());
}

#[test]
fn ks_examples() {
    let r = ks_uniform_test(&[0.5; 100]).unwrap();
    assert!((r.statistic - 0.5).abs() < 1e-12);
    assert!(r.p_value < 1e-10);
    let even: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
    let r = ks_uniform_test(&even).unwrap();
    assert!((r.statistic - 0.005).abs() < 1e-12);
    assert!(r.p_value > 0.999);
    assert!(matches!(
        ks_uniform_test(&even[..19]),
        Err(Error::Domain(_))
    ));
    assert!(matches!(ks_uniform_test(&[]), Err(Error::Empty(_))));
}

#[test]
fn kolmogorov_distribution_values() {
    for (x, p) in [
        (0.5, 0.963_945_5),
        (1.0, 0.269_999_8),
        (1.36, 0.049_4),
        (1.63, 0.009_9),
    ] {
        assert!(
            (kolmogorov_sf(x) - p).abs() < 5e-4,
            "x = {x}: {} vs {p}",
            kolmogorov_sf(x)
        );
    }
    for x in [1.17, 1.18, 1.19] {
        assert!((kolmogorov_sf(x - 1e-9) - kolmogorov_sf(x + 1e-9)).abs() < 1e-6);
    }
}

#[test]
fn ks_uniform_under_the_null() {
    let mut rng = crate::numerics::rng::stream(5, &[]);
    let rejections = (0..200)
        .filter(|_| {
            let u: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            ks_uniform_test(&u).unwrap().p_value < 0.05
        })
        .count();
    assert!((3..=20).contains(&rejections), "{rejections} rejections");
}

#[test]
fn true_count_model_gives_uniform_transforms() {
    let d = count_design();
    let data = simulate_dataset(&d.model, 400, 5, &d.covariates, 21).unwrap();
    let (train, next) = split(&data);
    let r = validate(&d.model, &train, &next, 2000, 8).unwrap();
    assert!(r.models[0].ks.p_value > 0.01, "{:?}", r.models[0].ks);
    assert_eq!(r.comparisons.len(), 3);
    assert!(
        r.comparisons[0].result.fraction > 0.5,
        "{:?}",
        r.comparisons[0]
    );
}

#[test]
fn true_semicontinuous_model_gives_uniform_transforms() {
    let d = semicontinuous_design();
    let data = simulate_dataset(&d.model, 300, 5, &d.covariates, 22).unwrap();
    let (train, next) = split(&data);
    let r = validate(&d.model, &train, &next, 2000, 8).unwrap();
    assert!(r.models[0].ks.p_value > 0.01, "{:?}", r.models[0].ks);
    assert!(r.models[0].qs.is_none());
    assert_eq!(r.comparisons.len(), 1);
}

#[test]
fn validation_is_deterministic() {
    let d = count_design();
    let data = simulate_dataset(&d.model, 40, 3, &d.covariates, 2).unwrap();
    let (train, next) = split(&data);
    let a = validate(&d.model, &train, &next, MIN_DRAWS, 3).unwrap();
    let b = validate(&d.model, &train, &next, MIN_DRAWS, 3).unwrap();
    assert_eq!(a, b);
}
