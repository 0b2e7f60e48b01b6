//! Subjects, cohorts and CSV ingestion/export.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compliance class; defiers are excluded by assumption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentClass {
    Complier,
    AlwaysTaker,
    NeverTaker,
}

impl LatentClass {
    /// Potential treatments `(d_T, d_C)` when encouraged and when not.
    pub fn potential_treatments(self) -> (bool, bool) {
        match self {
            LatentClass::Complier => (true, false),
            LatentClass::AlwaysTaker => (true, true),
            LatentClass::NeverTaker => (false, false),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LatentClass::Complier => "complier",
            LatentClass::AlwaysTaker => "always_taker",
            LatentClass::NeverTaker => "never_taker",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "complier" | "C" | "c" => Some(LatentClass::Complier),
            "always_taker" | "A" | "a" => Some(LatentClass::AlwaysTaker),
            "never_taker" | "N" | "n" => Some(LatentClass::NeverTaker),
            _ => None,
        }
    }
}

/// One pre-matching unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    /// Continuous instrument (dose of encouragement).
    pub dose: f64,
    pub treatment: bool,
    pub outcome: f64,
    pub covariates: Vec<f64>,
    /// Unmeasured confounder, populated only by generators.
    pub latent_u: Option<f64>,
    pub latent_class: Option<LatentClass>,
    /// `(r_T, r_C)`, populated only by generators.
    pub potential_outcomes: Option<(f64, f64)>,
}

impl Subject {
    pub fn d(&self) -> f64 {
        if self.treatment {
            1.0
        } else {
            0.0
        }
    }
}

/// Where a cohort came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    File { path: String },
    Generated { seed: u64, dgp_id: String },
    Derived { note: String },
}

/// An ordered, validated set of subjects sharing one covariate layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    subjects: Vec<Subject>,
    covariate_names: Vec<String>,
    provenance: Provenance,
}

impl Cohort {
    pub fn new(
        subjects: Vec<Subject>,
        covariate_names: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if subjects.len() < 2 {
            return Err(Error::validation("a cohort needs at least 2 subjects"));
        }
        let p = covariate_names.len();
        let mut ids = HashSet::with_capacity(subjects.len());
        for (k, s) in subjects.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate subject id {:?}",
                    s.id
                )));
            }
            if s.covariates.len() != p {
                return Err(Error::validation(format!(
                    "subject {} has {} covariates, expected {p}",
                    s.id,
                    s.covariates.len()
                )));
            }
            if !s.dose.is_finite() {
                return Err(Error::validation(format!(
                    "subject {} (row {k}) has non-finite dose",
                    s.id
                )));
            }
        }
        Ok(Cohort {
            subjects,
            covariate_names,
            provenance,
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &Subject {
        &self.subjects[i]
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn doses(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.dose).collect()
    }

    pub fn treatments(&self) -> Vec<f64> {
        self.subjects.iter().map(Subject::d).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.outcome).collect()
    }

    /// Values of covariate `j` across subjects.
    pub fn covariate(&self, j: usize) -> Vec<f64> {
        self.subjects.iter().map(|s| s.covariates[j]).collect()
    }

    /// Latent confounder values if every subject carries one.
    pub fn latent_u(&self) -> Option<Vec<f64>> {
        self.subjects.iter().map(|s| s.latent_u).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.id == id)
    }

    /// Copy keeping only covariates not equal to `j`.
    pub fn without_covariate(&self, j: usize) -> Cohort {
        let mut names = self.covariate_names.clone();
        names.remove(j);
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.covariates.remove(j);
                s
            })
            .collect();
        Cohort {
            subjects,
            covariate_names: names,
            provenance: Provenance::Derived {
                note: format!("without covariate {}", self.covariate_names[j]),
            },
        }
    }

    /// Sub-cohort of the given subject indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Cohort> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::validation(format!(
                "subject index {bad} out of range"
            )));
        }
        Cohort::new(
            indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            self.covariate_names.clone(),
            Provenance::Derived {
                note: format!("subset of {} subjects", indices.len()),
            },
        )
    }

    /// Copy with outcomes (and optionally treatments) replaced.
    pub fn with_responses(&self, treatment: Option<&[bool]>, outcome: &[f64]) -> Result<Cohort> {
        if outcome.len() != self.len() || treatment.is_some_and(|t| t.len() != self.len()) {
            return Err(Error::validation(
                "response vector length differs from cohort size",
            ));
        }
        let mut c = self.clone();
        for (k, s) in c.subjects.iter_mut().enumerate() {
            s.outcome = outcome[k];
            if let Some(t) = treatment {
                s.treatment = t[k];
            }
        }
        Ok(c)
    }
}

/// Column mapping for CSV ingestion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Schema {
    pub id: String,
    pub dose: String,
    pub treatment: String,
    pub outcome: String,
    /// Explicit covariate columns; `None` takes every column named `x*`.
    pub covariates: Option<Vec<String>>,
    pub latent_u: String,
    pub latent_class: String,
    pub potential_treated: String,
    pub potential_control: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            dose: "z".into(),
            treatment: "d".into(),
            outcome: "r".into(),
            covariates: None,
            latent_u: "u".into(),
            latent_class: "class".into(),
            potential_treated: "r_t".into(),
            potential_control: "r_c".into(),
        }
    }
}

fn parse_f64(field: &str, col: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Row {
        line,
        message: format!("column {col}: {field:?} is not numeric"),
    })
}

fn optional(record: &csv::StringRecord, idx: Option<usize>) -> Option<&str> {
    idx.and_then(|i| record.get(i))
        .filter(|s| !s.trim().is_empty())
}

/// Reads a cohort from CSV text.
pub fn read_cohort<R: Read>(reader: R, schema: &Schema, provenance: Provenance) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required =
        |name: &str| col(name).ok_or_else(|| Error::validation(format!("missing column {name:?}")));
    let id_i = required(&schema.id)?;
    let z_i = required(&schema.dose)?;
    let d_i = required(&schema.treatment)?;
    let r_i = required(&schema.outcome)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .filter(|h| h.starts_with('x'))
            .map(str::to_string)
            .collect(),
    };
    let cov_i = cov_names
        .iter()
        .map(|n| required(n))
        .collect::<Result<Vec<_>>>()?;
    let u_i = col(&schema.latent_u);
    let class_i = col(&schema.latent_class);
    let rt_i = col(&schema.potential_treated);
    let rc_i = col(&schema.potential_control);

    let mut subjects = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let line = k + 2;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let dose = parse_f64(get(z_i), &schema.dose, line)?;
        if !dose.is_finite() {
            return Err(Error::Row {
                line,
                message: format!("column {}: dose must be finite", schema.dose),
            });
        }
        let treatment = match get(d_i).trim() {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => {
                return Err(Error::Row {
                    line,
                    message: format!(
                        "column {}: treatment {other:?} is not 0 or 1",
                        schema.treatment
                    ),
                })
            }
        };
        let outcome = parse_f64(get(r_i), &schema.outcome, line)?;
        let covariates = cov_i
            .iter()
            .zip(&cov_names)
            .map(|(&i, n)| parse_f64(get(i), n, line))
            .collect::<Result<Vec<_>>>()?;
        let latent_u = optional(&rec, u_i)
            .map(|v| parse_f64(v, &schema.latent_u, line))
            .transpose()?;
        let latent_class = optional(&rec, class_i)
            .map(|v| {
                LatentClass::parse(v).ok_or_else(|| Error::Row {
                    line,
                    message: format!("column {}: unknown class {v:?}", schema.latent_class),
                })
            })
            .transpose()?;
        let potential_outcomes = match (optional(&rec, rt_i), optional(&rec, rc_i)) {
            (Some(t), Some(c)) => Some((
                parse_f64(t, &schema.potential_treated, line)?,
                parse_f64(c, &schema.potential_control, line)?,
            )),
            _ => None,
        };
        subjects.push(Subject {
            id: get(id_i).to_string(),
            dose,
            treatment,
            outcome,
            covariates,
            latent_u,
            latent_class,
            potential_outcomes,
        });
    }
    Cohort::new(subjects, cov_names, provenance)
}

/// Loads a cohort from a CSV file.
pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema) -> Result<Cohort> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| with_path(e, path))?;
    read_cohort(
        file,
        schema,
        Provenance::File {
            path: path.display().to_string(),
        },
    )
}

/// Writes a cohort as CSV with the default schema's column names.
///
/// Latent columns are written only when at least one subject carries them.
/// Reals use the shortest representation that parses back to the same bits.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let schema = Schema::default();
    let has_u = cohort.subjects.iter().any(|s| s.latent_u.is_some());
    let has_class = cohort.subjects.iter().any(|s| s.latent_class.is_some());
    let has_po = cohort
        .subjects
        .iter()
        .any(|s| s.potential_outcomes.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.id.clone(),
        schema.dose.clone(),
        schema.treatment.clone(),
        schema.outcome.clone(),
    ];
    header.extend(cohort.covariate_names.iter().cloned());
    if has_u {
        header.push(schema.latent_u.clone());
    }
    if has_class {
        header.push(schema.latent_class.clone());
    }
    if has_po {
        header.push(schema.potential_treated.clone());
        header.push(schema.potential_control.clone());
    }
    w.write_record(&header)?;
    for s in &cohort.subjects {
        let mut row = vec![
            s.id.clone(),
            s.dose.to_string(),
            if s.treatment { "1" } else { "0" }.to_string(),
            s.outcome.to_string(),
        ];
        row.extend(s.covariates.iter().map(f64::to_string));
        if has_u {
            row.push(s.latent_u.map(|u| u.to_string()).unwrap_or_default());
        }
        if has_class {
            row.push(
                s.latent_class
                    .map(|c| c.as_str().to_string())
                    .unwrap_or_default(),
            );
        }
        if has_po {
            let (t, c) = s
                .potential_outcomes
                .map(|(t, c)| (t.to_string(), c.to_string()))
                .unwrap_or_default();
            row.push(t);
            row.push(c);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Saves a cohort to a CSV file.
pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_cohort(cohort, File::create(path).map_err(|e| with_path(e, path))?)
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str =
        "id,z,d,r,x1\na,1.5,1,3.0,0.1\nb,2.5,0,1.0,0.2\nc,0.5,1,2.0,0.3\nd,4.0,0,0.5,0.4\n";

    #[test]
    fn parses_four_rows() {
        let c = read_cohort(
            TOY.as_bytes(),
            &Schema::default(),
            Provenance::Derived { note: "t".into() },
        )
        .unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.covariate_names(), ["x1"]);
        assert_eq!(c.subject(2).dose, 0.5);
        assert!(c.subject(0).treatment);
    }

    #[test]
    fn bad_treatment_names_the_row() {
        let csv = "id,z,d,r,x1\na,1,1,3,0\nb,2,0,1,0\nc,3,2,2,0\n";
        let err = read_cohort(
            csv.as_bytes(),
            &Schema::default(),
            Provenance::Derived { note: "t".into() },
        )
        .unwrap_err();
        match err {
            Error::Row { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_and_non_numeric() {
        let e = read_cohort(
            "id,z,r\na,1,2\n".as_bytes(),
            &Schema::default(),
            Provenance::Derived { note: "t".into() },
        )
        .unwrap_err();
        assert!(e.to_string().contains("\"d\""));
        let e = read_cohort(
            "id,z,d,r\na,1,0,2\nb,oops,1,2\n".as_bytes(),
            &Schema::default(),
            Provenance::Derived { note: "t".into() },
        )
        .unwrap_err();
        assert!(matches!(e, Error::Row { line: 3, .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = read_cohort(
            "id,z,d,r\na,1,0,2\na,2,1,2\n".as_bytes(),
            &Schema::default(),
            Provenance::Derived { note: "t".into() },
        );
        assert!(e.is_err());
    }
}
