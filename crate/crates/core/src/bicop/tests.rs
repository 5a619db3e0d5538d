use super::*;
use crate::numerics::normal::{std_normal_cdf, std_normal_quantile};
use crate::numerics::quadrature::integrate_adaptive;
use crate::numerics::rng::stream;
use crate::numerics::stats::{kendall_tau, pearson};
use proptest::prelude::*;

fn fam(s: &str) -> CopulaFamily {
    s.parse().unwrap()
}

fn cop(s: &str, theta: f64) -> BivariateCopula {
    BivariateCopula::new(fam(s), theta).unwrap()
}

/// Every family and rotation at a weak and a strong parameter.
fn zoo() -> Vec<BivariateCopula> {
    let mut v = vec![BivariateCopula::independence()];
    for (f, ts) in [
        ("gaussian", vec![-0.7, 0.3, 0.8]),
        ("frank", vec![-6.0, 1.529, 8.0]),
        ("frank180", vec![4.0]),
        ("clayton", vec![0.92, 4.0]),
        ("gumbel", vec![1.3, 3.0]),
        ("joe", vec![1.77, 3.83]),
    ] {
        for t in ts {
            v.push(cop(f, t));
        }
    }
    for base in ["clayton", "gumbel", "joe"] {
        for r in [90, 180, 270] {
            let t = if base == "clayton" { 2.0 } else { 2.2 };
            v.push(cop(&format!("{base}{r}"), t));
        }
    }
    v
}

/// Richardson-extrapolated central difference.
fn deriv<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Difference step that stays small relative to the distance from the boundary.
fn step(x: f64) -> f64 {
    (0.02 * x.min(1.0 - x)).min(1e-4)
}

fn grid() -> Vec<f64> {
    let mut g: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    g.push(1e-3 + 1e-4);
    g.push(1.0 - 1e-3 - 1e-4);
    g
}

#[test]
fn tau_paper_values() {
    for (t, tau) in [(1.77, 0.30), (3.83, 0.60), (18.74, 0.90)] {
        let c = cop("joe180", t);
        assert!((c.tau() - tau).abs() < 0.005, "{t}: {}", c.tau());
    }
    assert!((cop("clayton", 0.920).tau() - 0.315).abs() < 0.002);
    assert!((cop("clayton180", 0.172).tau() - 0.080).abs() < 0.002);
    assert!((cop("frank", 1.529).tau() - 0.166).abs() < 0.01);
    assert_eq!(cop("gaussian", 0.0).tau(), 0.0);
}

#[test]
fn theta_from_tau_examples() {
    let t = theta_from_tau(fam("joe180"), 0.3).unwrap();
    assert!((t - 1.77).abs() < 0.01, "{t}");
    assert!((theta_from_tau(fam("gumbel"), 0.5).unwrap() - 2.0).abs() < 1e-14);
    let f = theta_from_tau(fam("frank"), 0.166).unwrap();
    assert!((f - 1.529).abs() < 0.01, "{f}");
    assert!(matches!(
        theta_from_tau(fam("clayton"), -0.2),
        Err(Error::UnattainableTau { .. })
    ));
    assert!(theta_from_tau(fam("independence"), 0.1).is_err());
    let neg = theta_from_tau(fam("clayton90"), -0.4).unwrap();
    assert!((cop("clayton90", neg).tau() + 0.4).abs() < 1e-12);
}

#[test]
fn tau_round_trip_all_families() {
    for f in [
        "gaussian",
        "frank",
        "clayton",
        "gumbel",
        "joe",
        "joe180",
        "gumbel270",
    ] {
        let family = fam(f);
        let sign = if f.ends_with("270") { -1.0 } else { 1.0 };
        for k in 1..19 {
            let t = sign * k as f64 * 0.05;
            let th = theta_from_tau(family, t).unwrap();
            let back = BivariateCopula::new(family, th).unwrap().tau();
            assert!((back - t).abs() < 1e-3, "{f} {t} {back}");
        }
    }
}

#[test]
fn joe_tau_matches_double_integral() {
    // τ = 1 − 4 ∫∫ h1 h2 du dv
    for t in [1.19, 1.77, 2.0, 3.83, 18.74] {
        let c = cop("joe", t);
        let inner = |u: f64| integrate_adaptive(|v| c.h1(u, v) * c.h2(u, v), 0.0, 1.0, 1e-10);
        let tau_q = 1.0 - 4.0 * integrate_adaptive(inner, 0.0, 1.0, 1e-9);
        assert!(
            (c.tau() - tau_q).abs() < 1e-4,
            "{t}: {} vs {tau_q}",
            c.tau()
        );
    }
}

#[test]
fn frank_closed_form_value() {
    let c = cop("frank", 5.0);
    let exact = -(1.0 / 5.0)
        * (1.0 + ((-1.5f64).exp() - 1.0) * ((-3.5f64).exp() - 1.0) / ((-5.0f64).exp() - 1.0)).ln();
    assert!((c.cdf(0.3, 0.7) - exact).abs() < 1e-14);
}

#[test]
fn simple_values() {
    assert!((cop("gumbel", 1.0).cdf(0.5, 0.5) - 0.25).abs() < 1e-15);
    let ind = BivariateCopula::independence();
    assert_eq!(ind.pdf(0.2, 0.9), 1.0);
    assert_eq!(ind.h2(0.3, 0.8), 0.3);
    assert_eq!(ind.h2_inverse(0.4, 0.1), 0.4);
    assert!((cop("gaussian", 0.0).pdf(0.2, 0.7) - 1.0).abs() < 1e-14);
    assert!((cop("gaussian", 0.5).h2(0.5, 0.5) - 0.5).abs() < 1e-14);
    assert!((cop("gaussian", 0.5).pdf(0.5, 0.5) - 1.0 / 0.75f64.sqrt()).abs() < 1e-12);
}

#[test]
fn gaussian_h2_inverse_closed_form() {
    let c = cop("gaussian", 0.8);
    let expected =
        std_normal_cdf(0.8 * 0.0 + (1.0f64 - 0.64).sqrt() * std_normal_quantile(0.9).unwrap());
    assert!((c.h2_inverse(0.9, 0.5) - expected).abs() < 1e-14);
}

#[test]
fn clayton_h2_finite_difference() {
    let c = cop("clayton", 2.0);
    let fd = deriv(|v| c.cdf(0.3, v), 0.8, 1e-3);
    assert!((c.h2(0.3, 0.8) - fd).abs() < 1e-6);
}

#[test]
fn joe_pdf_finite_difference() {
    let c = cop("joe", 1.77);
    let h = 1e-5;
    let fd = (c.cdf(0.4 + h, 0.6 + h) - c.cdf(0.4 - h, 0.6 + h) - c.cdf(0.4 + h, 0.6 - h)
        + c.cdf(0.4 - h, 0.6 - h))
        / (4.0 * h * h);
    assert!(
        (c.pdf(0.4, 0.6) - fd).abs() < 1e-5,
        "{} {fd}",
        c.pdf(0.4, 0.6)
    );
}

#[test]
fn h_functions_match_finite_differences() {
    for c in zoo() {
        for &u in &grid() {
            for &v in &grid() {
                let d1 = deriv(|x| c.cdf(x, v), u, 1e-4);
                let d2 = deriv(|y| c.cdf(u, y), v, 1e-4);
                assert!(
                    (c.h1(u, v) - d1).abs() < 1e-5,
                    "{c:?} h1({u},{v}) {} vs {d1}",
                    c.h1(u, v)
                );
                assert!(
                    (c.h2(u, v) - d2).abs() < 1e-5,
                    "{c:?} h2({u},{v}) {} vs {d2}",
                    c.h2(u, v)
                );
            }
        }
    }
}

#[test]
fn pdf_matches_mixed_finite_difference() {
    for c in zoo() {
        for &u in &grid() {
            for &v in &grid() {
                // mixed partial of C as the derivative of h2 in u
                let fd = deriv(|x| c.h2(x, v), u, step(u));
                let p = c.pdf(u, v);
                assert!((p - fd).abs() < 1e-4, "{c:?} c({u},{v}) {p} vs {fd}");
            }
        }
    }
}

#[test]
fn pdf_integrates_to_one() {
    for c in zoo() {
        // ∫∫ c = ∫ [h2(1, v) − h2(0, v)] dv is trivially 1, so integrate c directly
        let inner = |u: f64| integrate_adaptive(|v| c.pdf(u, v), 0.0, 1.0, 1e-9);
        let total = integrate_adaptive(inner, 0.0, 1.0, 1e-7);
        assert!((total - 1.0).abs() < 1e-4, "{c:?}: {total}");
    }
}

#[test]
fn h_inverse_round_trips() {
    let g: Vec<f64> = (0..20).map(|i| (i as f64 + 0.5) / 20.0).collect();
    for c in zoo().into_iter().chain([
        cop("joe180", 18.74),
        cop("gumbel", 15.0),
        cop("clayton", 20.0),
    ]) {
        for &u in &g {
            for &v in &g {
                // where h is flat to machine precision any root reproducing p is exact
                let tol = 1e-7 + 4.0 * f64::EPSILON / c.pdf(u, v);
                let p = c.h2(u, v);
                let back = c.h2_inverse(p, v);
                let ok = (back - u).abs() < tol || (c.h2(back, v) - p).abs() <= 2.0 * f64::EPSILON;
                assert!(ok, "{c:?} h2inv u={u} v={v} back={back}");
                let q = c.h1(u, v);
                let back = c.h1_inverse(q, u);
                let ok = (back - v).abs() < tol || (c.h1(u, back) - q).abs() <= 2.0 * f64::EPSILON;
                assert!(ok, "{c:?} h1inv u={u} v={v} back={back}");
            }
        }
    }
}

#[test]
fn h_inverse_solves_equation() {
    for c in zoo() {
        for p in [0.01, 0.3, 0.77, 0.99] {
            for v in [0.05, 0.5, 0.95] {
                let u = c.h2_inverse(p, v);
                assert!((c.h2(u, v) - p).abs() < 1e-9, "{c:?}");
            }
        }
    }
}

#[test]
fn rotation_survival_identity() {
    for (b, t) in [
        ("clayton", 3.0),
        ("gumbel", 2.5),
        ("joe", 4.0),
        ("frank", 3.0),
    ] {
        let base = cop(b, t);
        let rot = cop(&format!("{b}180"), t);
        for &u in &grid() {
            for &v in &grid() {
                let e = u + v - 1.0 + base.cdf(1.0 - u, 1.0 - v);
                assert!((rot.cdf(u, v) - e).abs() < 1e-15);
            }
        }
        assert!((rot.tau() - base.tau()).abs() < 1e-15);
        if b != "frank" {
            assert!((cop(&format!("{b}90"), t).tau() + base.tau()).abs() < 1e-15);
            assert!((cop(&format!("{b}270"), t).tau() + base.tau()).abs() < 1e-15);
        }
    }
}

#[test]
fn boundary_values_are_exact() {
    for c in zoo() {
        for u in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(c.cdf(u, 0.0), 0.0);
            assert_eq!(c.cdf(0.0, u), 0.0);
            assert_eq!(c.cdf(u, 1.0), u);
            assert_eq!(c.cdf(1.0, u), u);
        }
    }
}

#[test]
fn domain_and_family_validation() {
    assert!(BivariateCopula::new(fam("gaussian"), 1.0).is_err());
    assert!(BivariateCopula::new(fam("clayton"), -0.5).is_err());
    assert!(BivariateCopula::new(fam("gumbel"), 0.9).is_err());
    assert!(BivariateCopula::new(fam("frank"), 0.0).is_err());
    assert!("gaussian90".parse::<CopulaFamily>().is_err());
    assert!("frank270".parse::<CopulaFamily>().is_err());
    assert!("independence180".parse::<CopulaFamily>().is_err());
    assert!("joe45".parse::<CopulaFamily>().is_err());
    assert!("student".parse::<CopulaFamily>().is_err());
    assert_eq!(fam("gumbel180").to_string(), "gumbel180");
    assert_eq!(fam("Joe").to_string(), "joe");
}

#[test]
fn serde_uses_family_strings() {
    let c = cop("gumbel180", 1.547);
    let s = serde_json::to_string(&c).unwrap();
    assert_eq!(s, r#"{"family":"gumbel180","theta":1.547}"#);
    let back: BivariateCopula = serde_json::from_str(&s).unwrap();
    assert_eq!(back, c);
    assert!(serde_json::from_str::<BivariateCopula>(r#"{"family":"joe","theta":0.5}"#).is_err());
}

#[test]
fn sampling_reproduces_tau() {
    let n = 100_000;
    for (c, target) in [
        (cop("joe180", 3.83), 0.60),
        (BivariateCopula::independence(), 0.0),
    ] {
        let s = c.sample(n, &mut stream(11, &[1]));
        let (u, v): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
        let t = kendall_tau(&u, &v);
        assert!((t - target).abs() < 0.01, "{c:?}: {t}");
        assert!((t - c.tau()).abs() < 0.01);
    }
    let g = cop("gaussian", 0.5);
    let s = g.sample(n, &mut stream(12, &[1]));
    let x: Vec<f64> = s
        .iter()
        .map(|p| std_normal_quantile(p.0).unwrap())
        .collect();
    let y: Vec<f64> = s
        .iter()
        .map(|p| std_normal_quantile(p.1).unwrap())
        .collect();
    assert!((pearson(&x, &y) - 0.5).abs() < 0.01);
}

proptest! {
    #[test]
    fn frechet_bounds_and_two_increasing(
        idx in 0usize..30,
        u1 in 0.0f64..1.0, du in 0.0f64..1.0,
        v1 in 0.0f64..1.0, dv in 0.0f64..1.0,
    ) {
        let z = zoo();
        let c = z[idx % z.len()];
        let u2 = u1 + (1.0 - u1) * du;
        let v2 = v1 + (1.0 - v1) * dv;
        for (u, v) in [(u1, v1), (u2, v2), (u1, v2), (u2, v1)] {
            let x = c.cdf(u, v);
            prop_assert!(x >= (u + v - 1.0).max(0.0) - 1e-15 && x <= u.min(v) + 1e-15);
        }
        let vol = c.cdf(u2, v2) - c.cdf(u1, v2) - c.cdf(u2, v1) + c.cdf(u1, v1);
        prop_assert!(vol >= -1e-12, "{:?} {}", c, vol);
    }

    #[test]
    fn h2_monotone_in_u(idx in 0usize..30, u in 0.001f64..0.999, du in 0.0f64..0.5, v in 0.001f64..0.999) {
        let z = zoo();
        let c = z[idx % z.len()];
        let u2 = (u + du).min(0.999);
        prop_assert!(c.h2(u2, v) >= c.h2(u, v) - 1e-13);
        prop_assert!((0.0..=1.0).contains(&c.h2(u, v)));
        prop_assert!(c.pdf(u, v) >= 0.0);
    }
}
