use super::*;
use crate::marginals::CountDist;
use crate::numerics::normal::{std_normal_cdf, std_normal_pdf};
use crate::numerics::quadrature::integrate_adaptive;
use crate::numerics::rng::stream;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn cop(pairs: &[f64]) -> GaussianCrossCopula {
    let d = match pairs.len() {
        1 => 2,
        3 => 3,
        _ => 4,
    };
    GaussianCrossCopula::new(CorrelationMatrix::from_pairs(d, pairs).unwrap()).unwrap()
}

fn poisson_cond(d: &CountDist, y: i64) -> Cond {
    Cond::atom(d.cdf(y), d.cdf(y - 1), d.pmf(y))
}

#[test]
fn identity_density_is_one() {
    let c = GaussianCrossCopula::identity(3);
    assert!((c.density(&[0.1, 0.5, 0.93]).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn bivariate_density_at_centre() {
    let c = cop(&[0.5]);
    assert!((c.density(&[0.5, 0.5]).unwrap() - 1.0 / 0.75f64.sqrt()).abs() < 1e-12);
}

#[test]
fn density_integrates_to_one() {
    let c = cop(&[0.6]);
    let total = integrate_adaptive(
        |u| integrate_adaptive(|v| c.density(&[u, v]).unwrap(), 1e-12, 1.0 - 1e-12, 1e-10),
        1e-12,
        1.0 - 1e-12,
        1e-9,
    );
    assert!((total - 1.0).abs() < 1e-5, "{total}");
}

#[test]
fn rectangle_matches_corner_sum() {
    let c = cop(&[0.3, -0.2, 0.5]);
    let lo = [0.2, 0.1, 0.4];
    let hi = [0.7, 0.6, 0.9];
    let mut corner = 0.0;
    for mask in 0..8u32 {
        let u: Vec<f64> = (0..3)
            .map(|i| if mask >> i & 1 == 1 { lo[i] } else { hi[i] })
            .collect();
        let sign = if mask.count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        corner += sign * c.cdf(&u).unwrap();
    }
    assert!((c.rectangle(&lo, &hi).unwrap() - corner).abs() < 1e-7);
}

#[test]
fn rectangle_edge_cases() {
    let c = cop(&[0.4]);
    assert_eq!(c.rectangle(&[0.3, 0.2], &[0.3, 0.9]).unwrap(), 0.0);
    assert!((c.cdf(&[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-14);
    assert!((c.cdf(&[0.37, 1.0]).unwrap() - 0.37).abs() < 1e-12);
    assert!(c.rectangle(&[0.5, 0.2], &[0.4, 0.3]).is_err());
}

#[test]
fn mixed_partial_is_the_h_function() {
    for rho in [-0.7, 0.0, 0.35, 0.9] {
        let c = cop(&[rho]);
        let b = gaussian(rho);
        for (u, v) in [(0.2, 0.7), (0.5, 0.5), (0.93, 0.04)] {
            let m = c.mixed_partial(&[u, v], &[0]).unwrap();
            assert!((m - b.h1(u, v)).abs() < 1e-9, "{rho} {u} {v}");
            let zu = std_normal_quantile_sat(u);
            let zv = std_normal_quantile_sat(v);
            let closed = std_normal_cdf((zv - rho * zu) / (1.0 - rho * rho).sqrt());
            assert!((m - closed).abs() < 1e-9);
        }
    }
}

#[test]
fn mixed_partial_matches_finite_differences() {
    let c = cop(&[0.3, -0.2, 0.5]);
    let u = [0.35, 0.6, 0.45];
    let h = 1e-5;
    let shift = |i: usize, d: f64| {
        let mut w = u;
        w[i] += d;
        w
    };
    let fd1 = (c.cdf(&shift(1, h)).unwrap() - c.cdf(&shift(1, -h)).unwrap()) / (2.0 * h);
    assert!((c.mixed_partial(&u, &[1]).unwrap() - fd1).abs() < 1e-4);
    let fd2 = (c.mixed_partial(&shift(2, h), &[0]).unwrap()
        - c.mixed_partial(&shift(2, -h), &[0]).unwrap())
        / (2.0 * h);
    assert!((c.mixed_partial(&u, &[0, 2]).unwrap() - fd2).abs() < 1e-4);
    let fd3 = (c.mixed_partial(&shift(1, h), &[0, 2]).unwrap()
        - c.mixed_partial(&shift(1, -h), &[0, 2]).unwrap())
        / (2.0 * h);
    assert!((c.density(&u).unwrap() - fd3).abs() < 1e-4);
}

#[test]
fn continuous_period_term_is_density_times_margins() {
    let c = cop(&[0.3, -0.2, 0.5]);
    let z = [0.4, -1.1, 0.2];
    let conds: Vec<Cond> = z
        .iter()
        .map(|&x| Cond::continuous(std_normal_cdf(x), std_normal_pdf(x)))
        .collect();
    let u: Vec<f64> = conds.iter().map(|c| c.cdf).collect();
    let want = c.ln_density(&u).unwrap() + conds.iter().map(|c| c.dens.ln()).sum::<f64>();
    assert!((c.period_loglik(&conds).unwrap() - want).abs() < 1e-12);
}

#[test]
fn bivariate_period_term_matches_pair_joint() {
    let c = cop(&[0.45]);
    let p = CountDist::poisson(2.0);
    let pairs = [
        (poisson_cond(&p, 1), poisson_cond(&p, 3)),
        (poisson_cond(&p, 0), Cond::continuous(0.3, 0.8)),
        (Cond::continuous(0.6, 1.2), poisson_cond(&p, 2)),
        (Cond::continuous(0.6, 1.2), Cond::continuous(0.1, 0.4)),
    ];
    let b = gaussian(0.45);
    for (x, y) in pairs {
        let want = pair_joint(&b, &x, &y).ln();
        let got = c.period_loglik(&[x, y]).unwrap();
        assert!((got - want).abs() < 1e-9, "{x:?} {y:?}: {got} vs {want}");
    }
}

#[test]
fn discrete_period_masses_sum_to_one() {
    let c = cop(&[0.3, 0.6, -0.1]);
    let ds = [
        CountDist::poisson(0.7),
        CountDist::poisson(1.5),
        CountDist::poisson(0.4),
    ];
    let mut total = 0.0;
    for a in 0..12 {
        for b in 0..14 {
            for d in 0..10 {
                let conds = [
                    poisson_cond(&ds[0], a),
                    poisson_cond(&ds[1], b),
                    poisson_cond(&ds[2], d),
                ];
                total += c.period_loglik(&conds).unwrap().exp();
            }
        }
    }
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn composite_score_is_unbiased_at_truth() {
    let rho = 0.5;
    let ds = [CountDist::poisson(1.3), CountDist::poisson(0.8)];
    let b = gaussian(rho);
    let h = 1e-5;
    let (bp, bm) = (gaussian(rho + h), gaussian(rho - h));
    let mut score = 0.0;
    for y1 in 0..20 {
        for y2 in 0..20 {
            let (a, c) = (poisson_cond(&ds[0], y1), poisson_cond(&ds[1], y2));
            let p = pair_joint(&b, &a, &c);
            if p < 1e-200 {
                continue;
            }
            let d = (pair_joint(&bp, &a, &c).ln() - pair_joint(&bm, &a, &c).ln()) / (2.0 * h);
            score += p * d;
        }
    }
    assert!(score.abs() < 1e-6, "{score}");
}

#[test]
fn pairwise_fit_recovers_correlation() {
    let truth = [0.2, 0.5, 0.8];
    let r = CorrelationMatrix::from_pairs(3, &truth).unwrap().matrix();
    let l = r.cholesky().unwrap().l();
    let ds = [CountDist::poisson(0.9), CountDist::poisson(2.0)];
    let mut rng = stream(11, &[]);
    let obs: Vec<Vec<Cond>> = (0..3000)
        .map(|_| {
            let e = nalgebra::DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = &l * e;
            let u: Vec<f64> = z.iter().map(|x| std_normal_cdf(*x)).collect();
            let y0 = ds[0].quantile(u[0]);
            let y1 = ds[1].quantile(u[1]);
            vec![
                poisson_cond(&ds[0], y0),
                poisson_cond(&ds[1], y1),
                Cond::continuous(u[2], 1.0),
            ]
        })
        .collect();
    let fit = fit_pairwise(&obs, 3).unwrap();
    for (est, t) in fit.raw.iter().zip(truth) {
        assert!((est - t).abs() < 0.06, "{:?}", fit.raw);
    }
    assert!(fit.copula.corr().min_eigenvalue() > 0.0);
}

#[test]
fn serde_round_trip() {
    let c = cop(&[0.3, -0.2, 0.5]);
    let js = serde_json::to_string(&c).unwrap();
    let back: GaussianCrossCopula = serde_json::from_str(&js).unwrap();
    assert_eq!(back.corr(), c.corr());
    assert!(
        (back.density(&[0.2, 0.3, 0.4]).unwrap() - c.density(&[0.2, 0.3, 0.4]).unwrap()).abs()
            < 1e-14
    );
}

proptest! {
    #[test]
    fn cdf_is_monotone(r in -0.8f64..0.8, u in 0.01f64..0.98, v in 0.01f64..0.98, du in 0.0f64..0.02) {
        let c = cop(&[r]);
        let a = c.cdf(&[u, v]).unwrap();
        prop_assert!(c.cdf(&[u + du, v]).unwrap() >= a - 1e-12);
        prop_assert!(c.cdf(&[u, v + du]).unwrap() >= a - 1e-12);
    }

    #[test]
    fn mixed_partial_is_a_conditional_cdf(r1 in -0.6f64..0.6, r2 in -0.6f64..0.6, u in 0.01f64..0.99, v in 0.01f64..0.99, w in 0.01f64..0.99) {
        let c = cop(&[r1, r2, 0.0]);
        let m = c.mixed_partial(&[u, v, w], &[0]).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        let top = c.mixed_partial(&[u, 1.0, 1.0], &[0]).unwrap();
        prop_assert!((top - 1.0).abs() < 1e-10);
    }
}
