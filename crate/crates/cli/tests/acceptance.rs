//! Acceptance criteria, one pass/fail line each. Criteria numbers given as
//! arguments restrict the run to those criteria.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use longvine::bicop::{BivariateCopula, CopulaFamily};
use longvine::crosscop::GaussianCrossCopula;
use longvine::data::PanelDataset;
use longvine::dvine::{Cond, DVineModel};
use longvine::joint::presets::{self, Design};
use longvine::joint::{fit_stagewise, simulate_dataset, JointModel, OutcomeModel};
use longvine::marginals::{coefficients, CountDist, Dist, Marginal, MarginalFamily, Scale};
use longvine::numerics::mvn::mvn_rectangle;
use longvine::numerics::par::ordered_map;
use longvine::numerics::rng::{child_seed, stream};
use longvine::numerics::CorrelationMatrix;
use longvine::predict::validate;
use longvine_cli::experiment::run_experiment;
use longvine_cli::RunConfig;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fam(s: &str) -> CopulaFamily {
    s.parse().unwrap()
}

fn cop(s: &str, theta: f64) -> BivariateCopula {
    BivariateCopula::new(fam(s), theta).unwrap()
}

fn c1_tau_tables() -> Outcome {
    let checks = [
        ("joe180", 1.77, 0.30, 0.005),
        ("joe180", 3.83, 0.60, 0.005),
        ("joe180", 18.74, 0.90, 0.005),
        ("clayton", 0.920, 0.315, 0.002),
        ("clayton180", 0.172, 0.080, 0.002),
        ("frank", 1.529, 0.166, 0.01),
    ];
    let mut worst = Vec::new();
    let mut pass = true;
    for (f, theta, tau, tol) in checks {
        let got = cop(f, theta).tau();
        pass &= (got - tau).abs() <= tol;
        worst.push(format!("{f}({theta})={got:.4}"));
    }
    outcome(pass, worst.join(" "))
}

/// Reference replication standard deviations of the count design at N = 500.
const REFERENCE_SD: [f64; 12] = [
    0.149, 0.106, 0.132, 0.369, 0.126, 0.192, 2.382, 0.367, 0.221, 0.041, 0.045, 0.042,
];

fn dependence_keys() -> Vec<String> {
    let mut k: Vec<String> = presets::OUTCOMES
        .iter()
        .flat_map(|o| (1..=3).map(move |t| format!("{o}.tree{t}")))
        .collect();
    k.extend(["rho.y1.y2", "rho.y1.y3", "rho.y2.y3"].map(String::from));
    k
}

fn c2_count_experiment() -> Outcome {
    let cfg = RunConfig::from_toml(
        "preset = \"count\"\nn_subjects = 500\nperiods = 4\nreplications = 100\nbootstrap = 30\n",
    )
    .unwrap();
    let s = match run_experiment(&cfg, 20_240_501) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut pass = s.failures.is_empty();
    let mut notes = vec![format!("{} of 100 replications", s.succeeded)];
    for (k, sd_ref) in dependence_keys().iter().zip(REFERENCE_SD) {
        let p = s.get(k).unwrap();
        let sd = p.sd.unwrap_or(f64::NAN);
        let z = p.bias / p.mc_se.unwrap_or(f64::NAN);
        let ratio = sd / sd_ref;
        let cov = p.coverage.as_ref().map(|c| c[0]).unwrap_or(f64::NAN);
        let ok =
            z.abs() <= 3.0 && (1.0 / 1.5..=1.5).contains(&ratio) && (0.80..=0.97).contains(&cov);
        pass &= ok;
        notes.push(format!(
            "{k}: mean {:.3} z {z:+.2} sd {sd:.3} ({ratio:.2}x) cover90 {cov:.2}{}",
            p.mean,
            if ok { "" } else { " FAIL" }
        ));
    }
    outcome(pass, notes.join("; "))
}

fn c3_semicontinuous_experiment() -> Outcome {
    let cfg = RunConfig::from_toml(
        "preset = \"semicontinuous\"\nn_subjects = 500\nperiods = 4\nreplications = 100\n",
    )
    .unwrap();
    let s = match run_experiment(&cfg, 20_240_502) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut pass = s.failures.is_empty();
    let mut notes = vec![format!("{} of 100 replications", s.succeeded)];
    for k in ["rho.y1.y2", "rho.y1.y3", "rho.y2.y3"] {
        let p = s.get(k).unwrap();
        let z = p.bias / p.mc_se.unwrap_or(f64::NAN);
        pass &= z.abs() <= 3.0;
        notes.push(format!(
            "{k}: mean {:.3} (true {}) z {z:+.2}",
            p.mean, p.truth
        ));
    }
    outcome(pass, notes.join("; "))
}

fn poisson_cond(lambda: f64, y: usize) -> Cond {
    Dist::Count(CountDist::poisson(lambda)).cond(y as f64)
}

fn c4_oracles() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let vine = DVineModel::new(
        Scale::Discrete,
        vec![cop("joe180", 1.77), cop("joe180", 1.44)],
    );
    let k = 25;
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                total += vine
                    .loglik(&[
                        poisson_cond(1.2, a),
                        poisson_cond(0.8, b),
                        poisson_cond(1.5, c),
                    ])
                    .exp();
            }
        }
    }
    pass &= (total - 1.0).abs() < 1e-6;
    notes.push(format!("(a) vine pmf sum {total:.10}"));
    let cross =
        GaussianCrossCopula::new(CorrelationMatrix::from_pairs(3, &presets::RHO).unwrap()).unwrap();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                total += cross
                    .period_loglik(&[
                        poisson_cond(0.6, a),
                        poisson_cond(1.0, b),
                        poisson_cond(1.5, c),
                    ])
                    .unwrap()
                    .exp();
            }
        }
    }
    pass &= (total - 1.0).abs() < 1e-6;
    notes.push(format!("cross-section pmf sum {total:.10}"));

    let mut zoo = vec![
        cop("gaussian", -0.7),
        cop("gaussian", 0.8),
        cop("frank", -6.0),
        cop("frank", 1.529),
        cop("clayton", 0.92),
        cop("gumbel", 3.0),
        cop("joe", 3.83),
        cop("joe180", 18.74),
    ];
    for base in ["clayton", "gumbel", "joe"] {
        for r in [90, 180, 270] {
            zoo.push(cop(&format!("{base}{r}"), 2.2));
        }
    }
    let d = |f: &dyn Fn(f64) -> f64, x: f64, h: f64| {
        let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        (4.0 * c(h / 2.0) - c(h)) / 3.0
    };
    let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let mut worst: f64 = 0.0;
    for c in &zoo {
        for &u in &grid {
            for &v in &grid {
                let h = 1e-4;
                worst = worst.max((c.h1(u, v) - d(&|x| c.cdf(x, v), u, h)).abs());
                worst = worst.max((c.h2(u, v) - d(&|y| c.cdf(u, y), v, h)).abs());
                worst = worst.max((c.pdf(u, v) - d(&|x| c.h2(x, v), u, h)).abs());
            }
        }
    }
    pass &= worst < 1e-4;
    notes.push(format!("(b) worst finite-difference gap {worst:.2e}"));

    let lower = [0.1, 0.25, 0.3];
    let upper = [0.6, 0.9, 0.75];
    let rect = cross.rectangle(&lower, &upper).unwrap();
    let mut corner = 0.0;
    for m in 0..8u32 {
        let pt: Vec<f64> = (0..3)
            .map(|i| if m >> i & 1 == 1 { lower[i] } else { upper[i] })
            .collect();
        corner += if m.count_ones() % 2 == 0 { 1.0 } else { -1.0 } * cross.cdf(&pt).unwrap();
    }
    pass &= (rect - corner).abs() < 1e-7;
    notes.push(format!("(c) rectangle gap {:.2e}", (rect - corner).abs()));

    let corr = CorrelationMatrix::from_pairs(3, &[0.5, -0.3, 0.4]).unwrap();
    let lo = [-0.5, -1.0, -2.0];
    let hi = [1.2, 0.4, 0.3];
    let p = mvn_rectangle(&lo, &hi, &corr).unwrap();
    let l = corr.matrix().cholesky().unwrap().l();
    let n = 10_000_000usize;
    let chunks: Vec<u64> = (0..100).collect();
    let hits: usize = ordered_map(&chunks, |&c| {
        let mut rng = stream(77, &[c]);
        let mut h = 0usize;
        for _ in 0..n / 100 {
            let e: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let inside = (0..3).all(|i| {
                let z: f64 = (0..=i).map(|k| l[(i, k)] * e[k]).sum();
                lo[i] < z && z <= hi[i]
            });
            h += usize::from(inside);
        }
        h
    })
    .into_iter()
    .sum();
    let mc = hits as f64 / n as f64;
    let se = (mc * (1.0 - mc) / n as f64).sqrt();
    pass &= (p - mc).abs() <= 3.0 * se;
    notes.push(format!(
        "(d) MVN rectangle {p:.6} vs Monte Carlo {mc:.6} ({:.2} SE)",
        (p - mc).abs() / se
    ));
    outcome(pass, notes.join("; "))
}

fn random_outcome(
    name: &str,
    family: MarginalFamily,
    rng: &mut impl Rng,
    trees: usize,
) -> OutcomeModel {
    let mut u = |a: f64, b: f64| a + (b - a) * rng.random::<f64>();
    let (b0, shape, zero) = match family {
        MarginalFamily::Poisson => (u(-0.5, 1.0), None, None),
        MarginalFamily::LogitGamma => (
            u(1.0, 4.0),
            Some(u(0.5, 5.0)),
            Some(coefficients(u(-1.0, 1.0), &[("x", u(-0.5, 0.5))])),
        ),
        _ => (u(0.0, 2.0), Some(u(0.5, 5.0)), None),
    };
    OutcomeModel {
        name: name.into(),
        marginal: Marginal {
            family,
            mean: coefficients(b0, &[("x", u(-0.5, 0.5))]),
            shape,
            zero,
            one: None,
        },
        vine: DVineModel::independence(family.scale(), trees),
    }
}

fn c5_independence_reduction() -> Outcome {
    let cov = [longvine::joint::CovariateSpec {
        name: "x".into(),
        kind: longvine::joint::CovariateKind::Normal { mean: 0.0, sd: 1.0 },
        level: longvine::joint::CovariateLevel::Observation,
    }];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let scales = [
        ("discrete", MarginalFamily::Poisson),
        ("semi-continuous", MarginalFamily::LogitGamma),
        ("continuous", MarginalFamily::Gamma),
    ];
    for rep in 0..5u64 {
        let mut rng = stream(505, &[rep]);
        let mut models: Vec<JointModel> = scales
            .iter()
            .map(|(_, f)| {
                JointModel::new(
                    vec![
                        random_outcome("a", *f, &mut rng, 3),
                        random_outcome("b", *f, &mut rng, 3),
                    ],
                    GaussianCrossCopula::identity(2),
                )
                .unwrap()
            })
            .collect();
        let mixed = scales
            .iter()
            .enumerate()
            .map(|(j, (_, f))| random_outcome(&format!("m{j}"), *f, &mut rng, 3))
            .collect();
        models.push(JointModel::new(mixed, GaussianCrossCopula::identity(3)).unwrap());
        for m in &models {
            let data = simulate_dataset(m, 60, 4, &cov, rep).unwrap();
            let ll = m.total_loglik(&data).unwrap().value;
            let pos = m.outcome_positions(&data).unwrap();
            let bound = m.bind(data.schema()).unwrap();
            let mut s = 0.0;
            for i in 0..data.n_subjects() {
                for (j, b) in bound.iter().enumerate() {
                    for t in 0..data.n_periods() {
                        s += b
                            .dist(data.row(i, pos[j], t))
                            .ln_density(data.value(i, pos[j], t));
                    }
                }
            }
            let gap = (ll - s).abs();
            worst = worst.max(gap);
            pass &= gap <= 1e-10;
        }
    }
    outcome(
        pass,
        format!("20 random datasets over three scales and a mixed panel, worst gap {worst:.2e}"),
    )
}

fn split(data: &PanelDataset) -> (PanelDataset, PanelDataset) {
    let t = data.n_periods();
    (
        data.select_periods(&(0..t - 1).collect::<Vec<_>>())
            .unwrap(),
        data.select_periods(&[t - 1]).unwrap(),
    )
}

fn fit_and_validate(
    d: &Design,
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<longvine::predict::ScoreReport, String> {
    let data = simulate_dataset(&d.model, n, 5, &d.covariates, child_seed(seed, &[0]))
        .map_err(|e| e.to_string())?;
    let (train, next) = split(&data);
    let (model, _) = fit_stagewise(&d.spec, &train, 0, 0).map_err(|e| e.to_string())?;
    validate(&model, &train, &next, draws, child_seed(seed, &[1])).map_err(|e| e.to_string())
}

fn c6_calibration() -> Outcome {
    let d = presets::count_design();
    let runs: Vec<u64> = (0..200).collect();
    let res = ordered_map(&runs, |&r| {
        fit_and_validate(&d, 1000, 2000, child_seed(606, &[r]))
    });
    let mut pass_copula = 0usize;
    let mut reject_ind = 0usize;
    let mut failed = 0usize;
    for r in &res {
        match r {
            Ok(rep) => {
                pass_copula += usize::from(rep.models[0].ks.p_value >= 0.05);
                reject_ind += usize::from(rep.models[1].ks.p_value < 0.05);
            }
            Err(_) => failed += 1,
        }
    }
    let rate = pass_copula as f64 / 200.0;
    let reject_cop = 200 - failed - pass_copula;
    let pass = failed == 0 && (0.92..=0.98).contains(&rate) && reject_ind > reject_cop;
    outcome(
        pass,
        format!("copula KS passes in {pass_copula}/200 runs ({rate:.3}); rejections copula {reject_cop}, independence {reject_ind}; {failed} failed runs"),
    )
}

fn c7_superiority() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, d, seed) in [
        ("count", presets::count_design(), 707),
        ("semi-continuous", presets::semicontinuous_design(), 708),
    ] {
        match fit_and_validate(&d, 1000, 10_000, seed) {
            Ok(r) => {
                let c = &r.comparisons[0].result;
                let ok = c.fraction > 0.55 && c.p_value < 0.05;
                pass &= ok;
                notes.push(format!(
                    "{name}: copula lower RPS for {:.2}% of subjects, p = {:.2e}",
                    100.0 * c.fraction,
                    c.p_value
                ));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_longvine"))
        .current_dir(dir)
        .env_remove("LONGVINE_OUT")
        .args(["--threads", &threads.to_string()])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Every primary output of a full command sequence, keyed by file name.
fn cli_outputs(threads: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = "seed = 11\npreset = \"count\"\nn_subjects = 80\nperiods = 3\nreplications = 3\nbootstrap = 3\ndraws = 1000\nout = \"o\"\n";
    std::fs::write(dir.path().join("run.toml"), cfg).map_err(|e| e.to_string())?;
    let p = dir.path();
    let base = ["--config", "run.toml"];
    run_cli(p, threads, &[&base[..], &["simulate"]].concat())?;
    run_cli(
        p,
        threads,
        &[&base[..], &["fit", "--data", "o/train.csv"]].concat(),
    )?;
    run_cli(
        p,
        threads,
        &[
            &base[..],
            &[
                "validate",
                "--model",
                "o/model.json",
                "--train",
                "o/train.csv",
                "--holdout",
                "o/holdout.csv",
            ],
        ]
        .concat(),
    )?;
    run_cli(p, threads, &[&base[..], &["experiment"]].concat())?;
    let tau = run_cli(p, threads, &["tau", "--family", "joe180", "--tau", "0.6"])?;
    let mut files = BTreeMap::new();
    files.insert("tau.stdout".to_string(), tau.into_bytes());
    for entry in std::fs::read_dir(p.join("o")).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != "timing.json" {
            files.insert(
                name,
                std::fs::read(entry.path()).map_err(|e| e.to_string())?,
            );
        }
    }
    Ok(files)
}

fn c8_determinism() -> Outcome {
    let runs: Result<Vec<_>, String> = [1, 1, 4].iter().map(|&t| cli_outputs(t)).collect();
    match runs {
        Ok(r) => {
            let same = r[0] == r[1];
            let across = r[0] == r[2];
            outcome(
                same && across,
                format!(
                    "{} output files; rerun identical: {same}; 1 vs 4 threads identical: {across}",
                    r[0].len()
                ),
            )
        }
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "tau tables", c1_tau_tables),
        (2, "count experiment", c2_count_experiment),
        (
            3,
            "semi-continuous experiment",
            c3_semicontinuous_experiment,
        ),
        (4, "oracle equivalence", c4_oracles),
        (5, "independence reductions", c5_independence_reduction),
        (6, "validation calibration", c6_calibration),
        (7, "scoring superiority", c7_superiority),
        (8, "determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let clock = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "criterion {n} ({name}): {} in {:.0}s: {}",
            if o.pass { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
