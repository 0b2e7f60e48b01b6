//! Matched designs: solving, encouragement encoding and balance.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::blossom::min_weight_perfect_with_sinks;
use super::distance::{build_distance_matrix, DistanceMatrix, DistanceSpec, Encouragement};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::stats;

/// Pairs of cohort indices plus derived design quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedDesign {
    /// After encoding, the first index of each pair is the encouraged member.
    pub pairs: Vec<(usize, usize)>,
    /// Per pair: the first member has the smaller dose.
    pub encouraged_first: Vec<bool>,
    /// Subjects absorbed by sinks or dropped for dose ties.
    pub dropped: Vec<usize>,
    pub total_distance: f64,
    /// `I⁻¹ Σ (Z_i1 − Z_i2)(D_i1 − D_i2)`, set by encoding.
    pub compliance_hat: Option<f64>,
    pub encouragement: Encouragement,
    pub encoded: bool,
    pub warnings: Vec<String>,
}

impl MatchedDesign {
    /// A design from explicit pairs (unencoded).
    pub fn from_pairs(pairs: Vec<(usize, usize)>, encouragement: Encouragement) -> Self {
        MatchedDesign {
            encouraged_first: vec![false; pairs.len()],
            pairs,
            dropped: Vec::new(),
            total_distance: 0.0,
            compliance_hat: None,
            encouragement,
            encoded: false,
            warnings: Vec::new(),
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Encouraged and control index of pair `i`; requires an encoded design.
    pub fn members(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    /// Mean within-pair absolute dose gap.
    pub fn mean_dose_gap(&self, cohort: &Cohort) -> f64 {
        let gaps: Vec<f64> = self
            .pairs
            .iter()
            .map(|&(a, b)| (cohort.subject(a).dose - cohort.subject(b).dose).abs())
            .collect();
        stats::mean(&gaps)
    }

    /// Recomputes `ι̂_C` from the members.
    pub fn compute_compliance(&self, cohort: &Cohort) -> Result<f64> {
        self.require_encoded()?;
        if self.pairs.is_empty() {
            return Err(Error::validation("design has no pairs"));
        }
        let s: f64 = self
            .pairs
            .iter()
            .map(|&(e, c)| cohort.subject(e).d() - cohort.subject(c).d())
            .sum();
        Ok(s / self.pairs.len() as f64)
    }

    pub(crate) fn require_encoded(&self) -> Result<()> {
        if self.encoded {
            Ok(())
        } else {
            Err(Error::validation("design must be encoded before analysis"))
        }
    }

    /// Checks that pairs are disjoint and indices are in range.
    pub fn validate(&self, cohort: &Cohort) -> Result<()> {
        let mut seen = vec![false; cohort.len()];
        for &(a, b) in &self.pairs {
            for x in [a, b] {
                if x >= cohort.len() {
                    return Err(Error::validation(format!("pair member {x} out of range")));
                }
                if seen[x] {
                    return Err(Error::validation(format!(
                        "subject {} appears twice",
                        cohort.subject(x).id
                    )));
                }
                seen[x] = true;
            }
        }
        Ok(())
    }

    /// Writes the design CSV (one row per pair, encouraged member first).
    pub fn write_csv<W: Write>(&self, cohort: &Cohort, writer: W) -> Result<()> {
        self.require_encoded()?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "pair_id",
            "encouraged_id",
            "control_id",
            "z_near",
            "z_far",
            "d_near",
            "d_far",
            "r_near",
            "r_far",
        ])?;
        for (i, &(e, c)) in self.pairs.iter().enumerate() {
            let (se, sc) = (cohort.subject(e), cohort.subject(c));
            w.write_record([
                (i + 1).to_string(),
                se.id.clone(),
                sc.id.clone(),
                se.dose.to_string(),
                sc.dose.to_string(),
                u8::from(se.treatment).to_string(),
                u8::from(sc.treatment).to_string(),
                se.outcome.to_string(),
                sc.outcome.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a design CSV written by [`MatchedDesign::write_csv`] against `cohort`.
///
/// Only `encouraged_id` and `control_id` are used; the encouragement
/// direction is inferred from the first pair with distinct doses.
pub fn read_design_csv<R: std::io::Read>(reader: R, cohort: &Cohort) -> Result<MatchedDesign> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("design CSV lacks column {name}")))
    };
    let (ei, ci) = (col("encouraged_id")?, col("control_id")?);
    let mut pairs = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let find = |i: usize| {
            let id = rec.get(i).unwrap_or("");
            cohort.index_of(id).ok_or_else(|| Error::Row {
                line: k + 2,
                message: format!("unknown subject id {id:?}"),
            })
        };
        pairs.push((find(ei)?, find(ci)?));
    }
    let encouragement = pairs
        .iter()
        .map(|&(e, c)| (cohort.subject(e).dose, cohort.subject(c).dose))
        .find(|(a, b)| a != b)
        .map_or(Encouragement::LowerDose, |(a, b)| {
            if a < b {
                Encouragement::LowerDose
            } else {
                Encouragement::HigherDose
            }
        });
    let mut design = MatchedDesign::from_pairs(pairs, encouragement);
    design.validate(cohort)?;
    for (k, &(e, c)) in design.pairs.iter().enumerate() {
        design.encouraged_first[k] = cohort.subject(e).dose < cohort.subject(c).dose;
    }
    design.encoded = true;
    if !design.pairs.is_empty() {
        design.compliance_hat = Some(design.compute_compliance(cohort)?);
    }
    Ok(design)
}

/// Minimum-total-distance perfect matching of the augmented graph.
///
/// Subjects matched to sinks go to `dropped`. If the matrix forbids dose ties
/// and a tied pair is still chosen, it is dropped with a warning. Pairs are
/// listed by their smaller index.
pub fn solve_nonbipartite(matrix: &DistanceMatrix, cohort: &Cohort) -> Result<MatchedDesign> {
    let n = matrix.n_subjects();
    if n != cohort.len() {
        return Err(Error::validation(
            "distance matrix does not belong to this cohort",
        ));
    }
    if matrix.size() % 2 == 1 {
        return Err(Error::infeasible("odd number of nodes"));
    }
    let mates = min_weight_perfect_with_sinks(n, matrix.subject_block(), matrix.sinks())
        .ok_or_else(|| Error::infeasible("no perfect matching of finite weight exists"))?;
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    let mut total = 0.0;
    if matrix.auto_sink {
        warnings.push("odd node count: one sink added".to_string());
    }
    for (l, &m) in mates.iter().enumerate().take(n) {
        if m >= n {
            dropped.push(l);
        } else if l < m {
            if matrix.forbid_dose_ties && cohort.subject(l).dose == cohort.subject(m).dose {
                warnings.push(format!(
                    "dropped tied-dose pair ({}, {})",
                    cohort.subject(l).id,
                    cohort.subject(m).id
                ));
                dropped.extend([l, m]);
                continue;
            }
            total += matrix.entry(l, m);
            pairs.push((l, m));
        }
    }
    dropped.sort_unstable();
    Ok(MatchedDesign {
        encouraged_first: vec![false; pairs.len()],
        pairs,
        dropped,
        total_distance: total,
        compliance_hat: None,
        encouragement: matrix.encouragement,
        encoded: false,
        warnings,
    })
}

/// Orders each pair so its encouraged member comes first and sets `ι̂_C`.
pub fn encode_encouragement(
    design: &MatchedDesign,
    cohort: &Cohort,
    forbid_dose_ties: bool,
) -> Result<MatchedDesign> {
    design.validate(cohort)?;
    let mut out = design.clone();
    for (k, pair) in out.pairs.iter_mut().enumerate() {
        let (za, zb) = (cohort.subject(pair.0).dose, cohort.subject(pair.1).dose);
        if za == zb && forbid_dose_ties {
            return Err(Error::validation(format!(
                "dose tie in pair ({}, {})",
                cohort.subject(pair.0).id,
                cohort.subject(pair.1).id
            )));
        }
        let swap = match design.encouragement {
            Encouragement::LowerDose => za > zb,
            Encouragement::HigherDose => za < zb,
        };
        if swap {
            *pair = (pair.1, pair.0);
        }
        out.encouraged_first[k] = cohort.subject(pair.0).dose < cohort.subject(pair.1).dose;
    }
    out.encoded = true;
    out.compliance_hat = if out.pairs.is_empty() {
        None
    } else {
        Some(out.compute_compliance(cohort)?)
    };
    Ok(out)
}

/// Build, solve and encode in one step.
pub fn strengthen(cohort: &Cohort, spec: &DistanceSpec) -> Result<MatchedDesign> {
    let matrix = build_distance_matrix(cohort, spec)?;
    let design = solve_nonbipartite(&matrix, cohort)?;
    encode_encouragement(&design, cohort, spec.forbid_dose_ties)
}

/// Matches within consecutive blocks of at most `block_size` subjects and
/// concatenates the encoded designs. Equivalent to exact matching on a block
/// label; used to keep very large simulated cohorts tractable.
pub fn strengthen_blocked(
    cohort: &Cohort,
    spec: &DistanceSpec,
    block_size: usize,
) -> Result<MatchedDesign> {
    if block_size < 2 {
        return Err(Error::validation("block size must be at least 2"));
    }
    if block_size >= cohort.len() {
        return strengthen(cohort, spec);
    }
    let mut out = MatchedDesign::from_pairs(Vec::new(), spec.encouragement);
    out.encouraged_first.clear();
    let n = cohort.len();
    let mut start = 0;
    while start < n {
        // Fold a short tail into the previous block.
        let end = if start + block_size + 2 > n {
            n
        } else {
            start + block_size
        };
        let idx: Vec<usize> = (start..end).collect();
        let d = strengthen(&cohort.subset(&idx)?, spec)?;
        out.pairs
            .extend(d.pairs.iter().map(|&(a, b)| (idx[a], idx[b])));
        out.encouraged_first.extend(d.encouraged_first);
        out.dropped.extend(d.dropped.iter().map(|&k| idx[k]));
        out.total_distance += d.total_distance;
        out.warnings.extend(d.warnings);
        start = end;
    }
    out.encoded = true;
    out.compliance_hat = if out.pairs.is_empty() {
        None
    } else {
        Some(out.compute_compliance(cohort)?)
    };
    Ok(out)
}

/// Per-row balance summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub name: String,
    pub mean_near: f64,
    pub mean_far: f64,
    /// `|mean_near − mean_far| / sd` with the full-cohort sd.
    pub std_diff: f64,
    /// The denominator was zero; `std_diff` is reported as 0.
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Dose row first, then one row per covariate.
    pub rows: Vec<BalanceRow>,
    pub n_pairs: usize,
    pub compliance_hat: f64,
}

impl BalanceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variable", "near", "far", "std_diff"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.mean_near.to_string(),
                r.mean_far.to_string(),
                r.std_diff.to_string(),
            ])?;
        }
        w.write_record([
            "pairs".into(),
            self.n_pairs.to_string(),
            self.n_pairs.to_string(),
            String::new(),
        ])?;
        w.write_record([
            "compliance".into(),
            self.compliance_hat.to_string(),
            String::new(),
            String::new(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn balance_row(name: &str, all: &[f64], near: &[f64], far: &[f64]) -> BalanceRow {
    let (mean_near, mean_far) = (stats::mean(near), stats::mean(far));
    let s = stats::sd(all);
    let constant = !(s > 0.0);
    BalanceRow {
        name: name.to_string(),
        mean_near,
        mean_far,
        std_diff: if constant {
            0.0
        } else {
            (mean_near - mean_far).abs() / s
        },
        constant,
    }
}

/// Near/far means and standardized differences for dose and covariates.
pub fn balance_report(design: &MatchedDesign, cohort: &Cohort) -> Result<BalanceReport> {
    design.require_encoded()?;
    if design.pairs.is_empty() {
        return Err(Error::validation("design has no pairs"));
    }
    let near: Vec<usize> = design.pairs.iter().map(|p| p.0).collect();
    let far: Vec<usize> = design.pairs.iter().map(|p| p.1).collect();
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let mut rows = Vec::with_capacity(cohort.p() + 1);
    let z = cohort.doses();
    rows.push(balance_row("dose", &z, &pick(&z, &near), &pick(&z, &far)));
    for (j, name) in cohort.covariate_names().iter().enumerate() {
        let x = cohort.covariate(j);
        rows.push(balance_row(name, &x, &pick(&x, &near), &pick(&x, &far)));
    }
    Ok(BalanceReport {
        rows,
        n_pairs: design.pairs.len(),
        compliance_hat: design.compute_compliance(cohort)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Provenance, Subject};

    fn toy(rows: &[(f64, bool, f64)]) -> Cohort {
        let subjects = rows
            .iter()
            .enumerate()
            .map(|(i, &(z, d, x))| Subject {
                id: format!("s{i}"),
                dose: z,
                treatment: d,
                outcome: 0.0,
                covariates: vec![x],
                latent_u: None,
                latent_class: None,
                potential_outcomes: None,
            })
            .collect();
        Cohort::new(
            subjects,
            vec!["x1".into()],
            Provenance::Derived { note: "t".into() },
        )
        .unwrap()
    }

    #[test]
    fn encoding_orders_pairs_and_is_idempotent() {
        let c = toy(&[
            (30.0, false, 0.0),
            (5.0, true, 0.0),
            (7.0, true, 1.0),
            (7.0, false, 1.0),
        ]);
        let d = MatchedDesign::from_pairs(vec![(0, 1)], Encouragement::LowerDose);
        let e = encode_encouragement(&d, &c, true).unwrap();
        assert_eq!(e.pairs, vec![(1, 0)]);
        assert_eq!(e.compliance_hat, Some(1.0));
        assert_eq!(encode_encouragement(&e, &c, true).unwrap(), e);
        let tie = MatchedDesign::from_pairs(vec![(2, 3)], Encouragement::LowerDose);
        assert!(encode_encouragement(&tie, &c, true).is_err());
        let hi = MatchedDesign::from_pairs(vec![(0, 1)], Encouragement::HigherDose);
        assert_eq!(
            encode_encouragement(&hi, &c, true).unwrap().pairs,
            vec![(0, 1)]
        );
    }

    #[test]
    fn balance_toy_by_hand() {
        // pairs (near, far): (0,1), (2,3), (4,5)
        let c = toy(&[
            (1.0, true, 1.0),
            (4.0, false, 2.0),
            (2.0, true, 3.0),
            (6.0, true, 3.0),
            (0.0, false, 5.0),
            (9.0, false, 8.0),
        ]);
        let d = MatchedDesign::from_pairs(vec![(0, 1), (2, 3), (4, 5)], Encouragement::LowerDose);
        let d = encode_encouragement(&d, &c, true).unwrap();
        let b = balance_report(&d, &c).unwrap();
        assert_eq!(b.rows[0].mean_near, 1.0);
        assert_eq!(b.rows[0].mean_far, 19.0 / 3.0);
        assert_eq!(b.rows[1].mean_near, 3.0);
        assert_eq!(b.rows[1].mean_far, 13.0 / 3.0);
        let x = [1.0, 2.0, 3.0, 3.0, 5.0, 8.0];
        let m = x.iter().sum::<f64>() / 6.0;
        let s = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 5.0).sqrt();
        assert!((b.rows[1].std_diff - (4.0 / 3.0) / s).abs() < 1e-12);
        assert!((b.compliance_hat - 1.0 / 3.0).abs() < 1e-12);
    }
}
