//! Subcommand implementations. Each writes its outputs under `out` and
//! returns the written paths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use longvine::bicop::{theta_from_tau, BivariateCopula, CopulaFamily};
use longvine::data::PanelDataset;
use longvine::joint::{fit_stagewise, simulate_dataset, FitReport, JointModel};
use longvine::predict::{validate, ScoreReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::experiment::{run_experiment, ExperimentSummary};
use crate::output::{num, write_atomic, write_csv, write_json};

fn read_data(path: &Path) -> Result<PanelDataset, CliError> {
    PanelDataset::read_csv_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<JointModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_bytes(data: &PanelDataset) -> Result<Vec<u8>, CliError> {
    Ok(data.to_csv_string()?.into_bytes())
}

/// Training periods 1..T in `train.csv`, period T+1 in `holdout.csv` and the
/// generating model in `truth.json`.
pub fn simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let truth = cfg.truth()?;
    let t = cfg.periods;
    let data = simulate_dataset(&truth.model, cfg.n_subjects, t + 1, &truth.covariates, seed)?;
    let train = data.select_periods(&(0..t).collect::<Vec<_>>())?;
    let holdout = data.select_periods(&[t])?;
    Ok(vec![
        write_atomic(out, "train.csv", &csv_bytes(&train)?)?,
        write_atomic(out, "holdout.csv", &csv_bytes(&holdout)?)?,
        write_json(out, "truth.json", &truth.model)?,
    ])
}

fn experiment_rows(s: &ExperimentSummary) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let single = s.replications == 1;
    let coverage = s.bootstrap > 0;
    let mut header = vec!["parameter", "true"];
    if single {
        header.extend(["estimate", "bias"]);
    } else {
        header.extend(["mean", "bias", "sd", "mc_se", "n"]);
    }
    if coverage {
        header.extend(["cover90", "cover95", "cover99"]);
    }
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let rows = s
        .parameters
        .iter()
        .map(|p| {
            let mut r = vec![p.parameter.clone(), num(p.truth), num(p.mean), num(p.bias)];
            if !single {
                r.extend([opt(p.sd), opt(p.mc_se), p.n.to_string()]);
            }
            if coverage {
                match &p.coverage {
                    Some(c) => r.extend(c.iter().map(|x| num(*x))),
                    None => r.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            r
        })
        .collect();
    (header, rows)
}

/// Summary table in `experiment.csv` and `experiment.json`, per-replication
/// estimates in `replications.csv`.
pub fn experiment(
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(ExperimentSummary, Vec<PathBuf>), CliError> {
    let s = run_experiment(cfg, seed)?;
    for (r, e) in &s.failures {
        eprintln!("replication {r} failed: {e}");
    }
    let (header, rows) = experiment_rows(&s);
    let mut reps = Vec::new();
    for run in &s.runs {
        for (k, v) in &run.estimates {
            reps.push(vec![
                run.index.to_string(),
                k.clone(),
                num(*v),
                run.se.get(k).map(|x| num(*x)).unwrap_or_default(),
            ]);
        }
    }
    let paths = vec![
        write_csv(out, "experiment.csv", &header, &rows)?,
        write_json(out, "experiment.json", &s)?,
        write_csv(
            out,
            "replications.csv",
            &["replication", "parameter", "estimate", "se"],
            &reps,
        )?,
    ];
    Ok((s, paths))
}

/// Tree selections and cross correlations as plain text.
pub fn render_report(model: &JointModel, report: &FitReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "subjects {}  periods {}  log-likelihood {:.3}",
        report.n_subjects, report.n_periods, report.total_loglik
    );
    for (o, (mf, vf)) in model
        .outcomes()
        .iter()
        .zip(report.marginals.iter().zip(&report.vines))
    {
        let _ = writeln!(
            s,
            "\n{} ({}), marginal log-likelihood {:.3}, AIC {:.3}",
            o.name, o.marginal.family, mf.loglik, mf.aic
        );
        let m = &o.marginal;
        let mut coefs: Vec<(String, f64)> = m
            .mean
            .iter()
            .map(|(k, v)| (format!("mean.{k}"), *v))
            .collect();
        coefs.extend(m.shape.map(|v| ("shape".to_string(), v)));
        for (part, c) in [("zero", &m.zero), ("one", &m.one)] {
            coefs.extend(c.iter().flatten().map(|(k, v)| (format!("{part}.{k}"), *v)));
        }
        for (k, v) in coefs {
            let se = mf
                .se
                .get(&k)
                .map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "  {k:<24}{v:>12.4}  se {se}");
        }
        let _ = writeln!(
            s,
            "  {:<6}{:<16}{:>12}{:>10}{:>10}{:>12}",
            "tree", "family", "theta", "tau", "se", "AIC"
        );
        for (k, t) in vf.trees.iter().enumerate() {
            let se =
                t.se.map(|x| format!("{x:.4}"))
                    .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "  {:<6}{:<16}{:>12.4}{:>10.4}{:>10}{:>12.3}",
                k + 1,
                t.copula.family().to_string(),
                t.copula.theta(),
                t.copula.tau(),
                se,
                t.aic
            );
        }
    }
    let names: Vec<&str> = model.outcomes().iter().map(|o| o.name.as_str()).collect();
    let _ = writeln!(s, "\ncross correlation");
    let _ = write!(s, "{:<10}", "");
    for n in &names {
        let _ = write!(s, "{n:>10}");
    }
    let _ = writeln!(s);
    for (i, a) in names.iter().enumerate() {
        let _ = write!(s, "{a:<10}");
        for j in 0..names.len() {
            let _ = write!(s, "{:>10.4}", model.cross().corr().get(i, j));
        }
        let _ = writeln!(s);
    }
    if let Some(b) = &report.bootstrap {
        let _ = writeln!(
            s,
            "\nbootstrap: {} of {} refits succeeded",
            b.succeeded, b.requested
        );
        for (k, v) in &b.se {
            let _ = writeln!(s, "  {k:<20} se {v:.4}");
        }
    }
    s
}

/// Fitted model in `model.json`, diagnostics in `fit_report.json` and
/// `fit_report.txt`, stage timings in `timing.json`.
pub fn fit(
    cfg: &RunConfig,
    seed: Option<u64>,
    data_path: &Path,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let data = read_data(data_path)?;
    let seed = if cfg.bootstrap > 0 {
        cfg.seed(seed)?
    } else {
        seed.or(cfg.seed).unwrap_or(0)
    };
    let (model, report) = fit_stagewise(&cfg.fit_spec()?, &data, cfg.bootstrap, seed)?;
    Ok(vec![
        write_json(out, "model.json", &model)?,
        write_json(out, "fit_report.json", &report)?,
        write_atomic(
            out,
            "fit_report.txt",
            render_report(&model, &report).as_bytes(),
        )?,
        write_json(out, "timing.json", &report.timing)?,
    ])
}

#[derive(Serialize)]
struct ValidationSummary<'a> {
    n_subjects: usize,
    draws: usize,
    seed: u64,
    ks: Vec<KsRow<'a>>,
    comparisons: &'a [longvine::predict::RuleComparison],
}

#[derive(Serialize)]
struct KsRow<'a> {
    model: &'a str,
    n: usize,
    statistic: f64,
    p_value: f64,
}

fn score_rows(r: &ScoreReport) -> (Vec<Vec<String>>, Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut scores = Vec::new();
    let mut u = Vec::new();
    for m in &r.models {
        let mut rules: Vec<(&str, &Vec<f64>)> = vec![("rps", &m.rps)];
        if let (Some(q), Some(s)) = (&m.qs, &m.sphs) {
            rules.push(("qs", q));
            rules.push(("sphs", s));
        }
        for (i, subject) in r.subjects.iter().enumerate() {
            for (rule, v) in &rules {
                scores.push(vec![
                    subject.clone(),
                    m.model.clone(),
                    rule.to_string(),
                    num(v[i]),
                ]);
            }
            u.push(vec![subject.clone(), m.model.clone(), num(m.u[i])]);
        }
    }
    let mut diffs = Vec::new();
    if r.models.len() >= 2 {
        let (a, b) = (&r.models[0], &r.models[1]);
        for (i, subject) in r.subjects.iter().enumerate() {
            diffs.push(vec![
                subject.clone(),
                num(r.observed[i]),
                num(a.rps[i]),
                num(b.rps[i]),
                num(a.rps[i] - b.rps[i]),
            ]);
        }
    }
    (scores, u, diffs)
}

/// Scores in `scores.csv`, transformed values in `u_values.csv`, RPS
/// differences in `score_differences.csv` and the KS and superiority
/// summary in `validation.json`.
pub fn validate_cmd(
    cfg: &RunConfig,
    seed: u64,
    model_path: &Path,
    train_path: &Path,
    holdout_path: &Path,
    out: &Path,
) -> Result<(ScoreReport, Vec<PathBuf>), CliError> {
    let model = read_model(model_path)?;
    let train = read_data(train_path)?;
    let holdout = read_data(holdout_path)?;
    if holdout.n_subjects() == 0 {
        return Err(CliError::Data(format!(
            "{}: hold-out is empty",
            holdout_path.display()
        )));
    }
    let report = validate(&model, &train, &holdout, cfg.draws, seed)?;
    let (scores, u, diffs) = score_rows(&report);
    let summary = ValidationSummary {
        n_subjects: report.subjects.len(),
        draws: report.draws,
        seed,
        ks: report
            .models
            .iter()
            .map(|m| KsRow {
                model: &m.model,
                n: m.ks.n,
                statistic: m.ks.statistic,
                p_value: m.ks.p_value,
            })
            .collect(),
        comparisons: &report.comparisons,
    };
    let b = report
        .models
        .get(1)
        .map(|m| m.model.as_str())
        .unwrap_or("other");
    let a = report.models[0].model.as_str();
    let diff_header = [
        "subject",
        "observed",
        &format!("rps_{a}"),
        &format!("rps_{b}"),
        "difference",
    ];
    let paths = vec![
        write_csv(
            out,
            "scores.csv",
            &["subject", "model", "rule", "score"],
            &scores,
        )?,
        write_csv(out, "u_values.csv", &["subject", "model", "u"], &u)?,
        write_csv(
            out,
            "score_differences.csv",
            &diff_header
                .iter()
                .map(|s| s.as_ref())
                .collect::<Vec<&str>>(),
            &diffs,
        )?,
        write_json(out, "validation.json", &summary)?,
    ];
    Ok((report, paths))
}

/// One `family,theta,tau` line for a given θ or τ.
pub fn tau_line(family: &str, theta: Option<f64>, tau: Option<f64>) -> Result<String, CliError> {
    let fam: CopulaFamily = family
        .parse()
        .map_err(|e: longvine::Error| CliError::Config(format!("family: {e}")))?;
    let theta = match (theta, tau) {
        (Some(t), None) => t,
        (None, Some(t)) => {
            theta_from_tau(fam, t).map_err(|e| CliError::Config(format!("tau: {e}")))?
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of --theta and --tau".into(),
            ))
        }
    };
    let c =
        BivariateCopula::new(fam, theta).map_err(|e| CliError::Config(format!("theta: {e}")))?;
    Ok(format!("{fam},{},{}", num(c.theta()), num(c.tau())))
}
