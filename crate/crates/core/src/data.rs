//! Balanced longitudinal panels and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::marginals::Scale;

const KEYS: [&str; 4] = ["subject", "outcome", "period", "value"];

/// One observation in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub subject: String,
    pub outcome: String,
    pub period: u32,
    pub value: f64,
    pub covariates: Vec<f64>,
}

/// A balanced panel: every subject has every outcome at every period.
///
/// Subjects and outcomes keep their order of first appearance; periods are
/// sorted. Values and covariate rows are stored densely by
/// (subject, outcome, period).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    schema: Vec<String>,
    subjects: Vec<String>,
    outcomes: Vec<String>,
    periods: Vec<u32>,
    values: Vec<f64>,
    covariates: Vec<f64>,
}

fn data_err(line: Option<usize>, msg: impl Into<String>) -> Error {
    match line {
        Some(l) => Error::Data(format!("row {l}: {}", msg.into())),
        None => Error::Data(msg.into()),
    }
}

impl PanelDataset {
    /// Builds a panel from long records; `lines` optionally names the source
    /// row of each record for error messages.
    pub fn from_records(
        schema: Vec<String>,
        records: Vec<Record>,
        lines: Option<&[usize]>,
    ) -> Result<Self> {
        let line = |n: usize| lines.map(|l| l[n]);
        if records.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        for (k, name) in schema.iter().enumerate() {
            if KEYS.contains(&name.as_str()) || schema[..k].contains(name) {
                return Err(data_err(
                    None,
                    format!("duplicate or reserved column `{name}`"),
                ));
            }
        }
        let mut subjects: IndexMap<&str, ()> = IndexMap::new();
        let mut outcomes: IndexMap<&str, ()> = IndexMap::new();
        let mut periods: Vec<u32> = Vec::new();
        for (n, r) in records.iter().enumerate() {
            if r.covariates.len() != schema.len() {
                return Err(data_err(
                    line(n),
                    format!(
                        "expected {} covariates, found {}",
                        schema.len(),
                        r.covariates.len()
                    ),
                ));
            }
            if !r.value.is_finite() || r.covariates.iter().any(|x| !x.is_finite()) {
                return Err(data_err(line(n), "non-finite value"));
            }
            if r.period == 0 {
                return Err(data_err(line(n), "periods start at 1"));
            }
            subjects.insert(&r.subject, ());
            outcomes.insert(&r.outcome, ());
            periods.push(r.period);
        }
        periods.sort_unstable();
        periods.dedup();
        let (ns, nj, nt, p) = (subjects.len(), outcomes.len(), periods.len(), schema.len());
        let mut values = vec![f64::NAN; ns * nj * nt];
        let mut covariates = vec![0.0; ns * nj * nt * p];
        let mut seen = vec![false; ns * nj * nt];
        for (n, r) in records.iter().enumerate() {
            let i = subjects.get_index_of(r.subject.as_str()).expect("indexed");
            let j = outcomes.get_index_of(r.outcome.as_str()).expect("indexed");
            let t = periods.binary_search(&r.period).expect("indexed");
            let cell = (i * nj + j) * nt + t;
            if seen[cell] {
                return Err(data_err(
                    line(n),
                    format!("duplicate key ({}, {}, {})", r.subject, r.outcome, r.period),
                ));
            }
            seen[cell] = true;
            values[cell] = r.value;
            covariates[cell * p..(cell + 1) * p].copy_from_slice(&r.covariates);
        }
        if let Some(cell) = seen.iter().position(|s| !s) {
            let (i, j, t) = (cell / (nj * nt), cell / nt % nj, cell % nt);
            return Err(Error::Data(format!(
                "unbalanced panel: subject `{}` has no `{}` value at period {}",
                subjects.get_index(i).expect("indexed").0,
                outcomes.get_index(j).expect("indexed").0,
                periods[t]
            )));
        }
        Ok(Self {
            subjects: subjects.keys().map(|s| s.to_string()).collect(),
            outcomes: outcomes.keys().map(|s| s.to_string()).collect(),
            schema,
            periods,
            values,
            covariates,
        })
    }

    /// Builds a panel from dense arrays laid out by (subject, outcome, period).
    pub fn from_dense(
        schema: Vec<String>,
        subjects: Vec<String>,
        outcomes: Vec<String>,
        periods: Vec<u32>,
        values: Vec<f64>,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        let cells = subjects.len() * outcomes.len() * periods.len();
        if values.len() != cells {
            return Err(Error::LengthMismatch(values.len(), cells));
        }
        if covariates.len() != cells * schema.len() {
            return Err(Error::LengthMismatch(
                covariates.len(),
                cells * schema.len(),
            ));
        }
        Ok(Self {
            schema,
            subjects,
            outcomes,
            periods,
            values,
            covariates,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn periods(&self) -> &[u32] {
        &self.periods
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    fn cell(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.outcomes.len() + j) * self.periods.len() + t
    }

    pub fn value(&self, i: usize, j: usize, t: usize) -> f64 {
        self.values[self.cell(i, j, t)]
    }

    /// Covariate row of one observation, ordered as [`PanelDataset::schema`].
    pub fn row(&self, i: usize, j: usize, t: usize) -> &[f64] {
        let p = self.schema.len();
        let c = self.cell(i, j, t);
        &self.covariates[c * p..(c + 1) * p]
    }

    /// All values of one outcome, subject-major.
    pub fn outcome_values(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_subjects() * self.n_periods());
        for i in 0..self.n_subjects() {
            for t in 0..self.n_periods() {
                out.push(self.value(i, j, t));
            }
        }
        out
    }

    /// All covariate rows of one outcome, subject-major and flattened.
    pub fn outcome_rows(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_subjects() * self.n_periods() * self.schema.len());
        for i in 0..self.n_subjects() {
            for t in 0..self.n_periods() {
                out.extend_from_slice(self.row(i, j, t));
            }
        }
        out
    }

    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == name)
    }

    /// Copy with the values replaced, keeping keys and covariates.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch(values.len(), self.values.len()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Checks values against the scale of each named outcome.
    pub fn check_scales(&self, scales: &[(String, Scale)]) -> Result<()> {
        for (name, scale) in scales {
            let j = self
                .outcome_index(name)
                .ok_or_else(|| Error::Data(format!("outcome `{name}` missing from data")))?;
            for i in 0..self.n_subjects() {
                for t in 0..self.n_periods() {
                    let y = self.value(i, j, t);
                    let bad = match scale {
                        Scale::Discrete => y < 0.0 || y.fract() != 0.0,
                        Scale::Semicontinuous => y < 0.0,
                        Scale::Continuous => y <= 0.0,
                    };
                    if bad {
                        return Err(Error::Data(format!(
                            "subject `{}`, outcome `{name}`, period {}: value {y} is not valid on the {scale:?} scale",
                            self.subjects[i], self.periods[t]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Subset of periods, by position.
    pub fn select_periods(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&t| t >= self.n_periods()) {
            return Err(Error::Domain("period selection out of range".into()));
        }
        let (ns, nj, p) = (self.n_subjects(), self.n_outcomes(), self.schema.len());
        let mut values = Vec::with_capacity(ns * nj * keep.len());
        let mut covariates = Vec::with_capacity(ns * nj * keep.len() * p);
        for i in 0..ns {
            for j in 0..nj {
                for &t in keep {
                    values.push(self.value(i, j, t));
                    covariates.extend_from_slice(self.row(i, j, t));
                }
            }
        }
        Self::from_dense(
            self.schema.clone(),
            self.subjects.clone(),
            self.outcomes.clone(),
            keep.iter().map(|&t| self.periods[t]).collect(),
            values,
            covariates,
        )
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        for (k, key) in KEYS.iter().enumerate() {
            if header.get(k).map(String::as_str) != Some(*key) {
                return Err(data_err(
                    Some(1),
                    format!("header must start with {}", KEYS.join(",")),
                ));
            }
        }
        let schema = header[KEYS.len()..].to_vec();
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let l = e.position().map(|p| p.line() as usize);
                data_err(l, e.to_string())
            })?;
            let l = rec
                .position()
                .map_or(records.len() + 2, |p| p.line() as usize);
            let num = |k: usize, what: &str| -> Result<f64> {
                let s = rec.get(k).unwrap_or("").trim();
                s.parse::<f64>()
                    .map_err(|_| data_err(Some(l), format!("{what} `{s}` is not a number")))
            };
            let period = rec.get(2).unwrap_or("").trim();
            let period: u32 = period.parse().map_err(|_| {
                data_err(
                    Some(l),
                    format!("period `{period}` is not a positive integer"),
                )
            })?;
            let value = num(3, "value")?;
            let covariates = (KEYS.len()..header.len())
                .map(|k| num(k, &header[k]))
                .collect::<Result<Vec<_>>>()?;
            records.push(Record {
                subject: rec.get(0).unwrap_or("").trim().to_string(),
                outcome: rec.get(1).unwrap_or("").trim().to_string(),
                period,
                value,
                covariates,
            });
            lines.push(l);
        }
        Self::from_records(schema, records, Some(&lines))
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f =
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Writes subject-major long format; numbers use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = KEYS.to_vec();
        header.extend(self.schema.iter().map(String::as_str));
        w.write_record(&header)?;
        for i in 0..self.n_subjects() {
            for t in 0..self.n_periods() {
                for j in 0..self.n_outcomes() {
                    let mut row = vec![
                        self.subjects[i].clone(),
                        self.outcomes[j].clone(),
                        self.periods[t].to_string(),
                        self.value(i, j, t).to_string(),
                    ];
                    row.extend(self.row(i, j, t).iter().map(|x| x.to_string()));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(body: &str) -> Result<PanelDataset> {
        PanelDataset::read_csv(body.as_bytes())
    }

    #[test]
    fn round_trip_is_identical() {
        let text = "subject,outcome,period,value,x1\na,y1,1,2,0.5\na,y1,2,0,-1.25\nb,y1,1,1,0.1\nb,y1,2,3,1e-7\n";
        let d = csv(text).unwrap();
        assert_eq!(d.n_subjects(), 2);
        assert_eq!(d.value(1, 0, 1), 3.0);
        let out = d.to_csv_string().unwrap();
        assert_eq!(csv(&out).unwrap(), d);
        assert_eq!(out, d.to_csv_string().unwrap());
    }

    #[test]
    fn malformed_row_is_named() {
        let err = csv("subject,outcome,period,value\na,y,1,2\na,y,2,zz\n").unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = csv("subject,outcome,period,value\na,y,1,2\na,y,1,3\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unbalanced_panel_is_rejected() {
        let err = csv("subject,outcome,period,value\na,y,1,2\na,y,2,3\nb,y,1,1\n").unwrap_err();
        assert!(err.to_string().contains("unbalanced"), "{err}");
    }

    #[test]
    fn scale_checks() {
        let d = csv("subject,outcome,period,value\na,y,1,2.5\n").unwrap();
        assert!(d.check_scales(&[("y".into(), Scale::Discrete)]).is_err());
        assert!(d
            .check_scales(&[("y".into(), Scale::Semicontinuous)])
            .is_ok());
        assert!(d
            .check_scales(&[("z".into(), Scale::Semicontinuous)])
            .is_err());
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(csv("id,outcome,period,value\na,y,1,2\n").is_err());
    }
}
