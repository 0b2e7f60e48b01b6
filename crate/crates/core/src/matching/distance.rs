//! Covariate distances, dose penalties and sinks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::stats::average_ranks;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMetric {
    #[default]
    RankMahalanobis,
    Mahalanobis,
    Euclidean,
}

/// Which member of a pair counts as encouraged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encouragement {
    /// The smaller dose is the encouragement (e.g. shorter travel time).
    #[default]
    LowerDose,
    /// The larger dose is the encouragement.
    HigherDose,
}

/// How to score candidate pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceSpec {
    pub covariate_metric: CovariateMetric,
    /// Pairs whose doses differ by at most this much are penalized.
    pub caliper_lambda: f64,
    /// Penalty size; `None` picks `1000 × (max covariate distance + 1)`.
    pub penalty: Option<f64>,
    /// Number of sink nodes.
    pub sinks: usize,
    pub forbid_dose_ties: bool,
    pub encouragement: Encouragement,
}

impl Default for DistanceSpec {
    fn default() -> Self {
        DistanceSpec {
            covariate_metric: CovariateMetric::RankMahalanobis,
            caliper_lambda: 0.0,
            penalty: None,
            sinks: 0,
            forbid_dose_ties: true,
            encouragement: Encouragement::LowerDose,
        }
    }
}

impl DistanceSpec {
    pub fn with_caliper(mut self, lambda: f64) -> Self {
        self.caliper_lambda = lambda;
        self
    }

    pub fn with_sinks(mut self, sinks: usize) -> Self {
        self.sinks = sinks;
        self
    }

    pub fn with_encouragement(mut self, encouragement: Encouragement) -> Self {
        self.encouragement = encouragement;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.caliper_lambda >= 0.0) || !self.caliper_lambda.is_finite() {
            return Err(Error::validation("caliper must be finite and nonnegative"));
        }
        if let Some(p) = self.penalty {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::validation("penalty must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Subject-by-subject costs plus implicit sink rows.
///
/// The full `(N + e)`-square matrix has zero subject-sink entries and
/// forbidden sink-sink entries; only the subject block is stored.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
    sinks: usize,
    /// One sink was added because `N + e` was odd.
    pub auto_sink: bool,
    pub penalty: f64,
    pub max_covariate_distance: f64,
    pub ridged: bool,
    pub(crate) forbid_dose_ties: bool,
    pub(crate) encouragement: Encouragement,
}

impl DistanceMatrix {
    /// Node count `N + e`.
    pub fn size(&self) -> usize {
        self.n + self.sinks
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn sinks(&self) -> usize {
        self.sinks
    }

    pub fn sink_indices(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.sinks
    }

    /// Entry `(l, m)` of the full matrix; infinity marks a forbidden pair.
    pub fn entry(&self, l: usize, m: usize) -> f64 {
        let (ls, ms) = (l >= self.n, m >= self.n);
        match (ls, ms) {
            _ if l == m => f64::INFINITY,
            (true, true) => f64::INFINITY,
            (true, false) | (false, true) => 0.0,
            (false, false) => self.entries[l * self.n + m],
        }
    }

    pub(crate) fn subject_block(&self) -> &[f64] {
        &self.entries
    }
}

/// Pairwise covariate distances under `metric`.
pub fn covariate_distances(cohort: &Cohort, metric: CovariateMetric) -> Result<(Vec<f64>, bool)> {
    let n = cohort.len();
    let p = cohort.p();
    let mut columns: Vec<Vec<f64>> = (0..p).map(|j| cohort.covariate(j)).collect();
    if metric == CovariateMetric::RankMahalanobis {
        for c in columns.iter_mut() {
            *c = average_ranks(c);
        }
    }
    // Whitened coordinates y with |y_l − y_m|² equal to the distance.
    let (coords, ridged) = match metric {
        CovariateMetric::Euclidean => (columns, false),
        _ if p == 0 => (columns, false),
        _ => {
            let mut cov = covariance(&columns);
            if metric == CovariateMetric::RankMahalanobis {
                // Rescale so every variance equals that of untied ranks 1..N.
                let untied = (n as f64) * (n as f64 + 1.0) / 12.0;
                let scale: Vec<f64> = (0..p)
                    .map(|j| {
                        let v = cov[(j, j)];
                        if v > 0.0 {
                            (untied / v).sqrt()
                        } else {
                            1.0
                        }
                    })
                    .collect();
                for a in 0..p {
                    for b in 0..p {
                        cov[(a, b)] *= scale[a] * scale[b];
                    }
                }
            }
            let (chol, ridged) = match cov.clone().cholesky().filter(|c| well_conditioned(&cov, c))
            {
                Some(c) => (c, false),
                None => {
                    let ridge = 1e-8 * cov.trace().max(f64::MIN_POSITIVE) / p as f64;
                    let c = (cov + DMatrix::identity(p, p) * ridge)
                        .cholesky()
                        .ok_or_else(|| Error::numerical("covariate covariance is singular"))?;
                    (c, true)
                }
            };
            // y = L⁻¹ x per subject.
            let x = DMatrix::from_fn(p, n, |j, i| columns[j][i]);
            let y = chol
                .l()
                .solve_lower_triangular(&x)
                .ok_or_else(|| Error::numerical("whitening failed"))?;
            let coords = (0..p).map(|j| y.row(j).iter().copied().collect()).collect();
            (coords, ridged)
        }
    };
    let mut d = vec![0.0; n * n];
    for l in 0..n {
        for m in (l + 1)..n {
            let v: f64 = coords.iter().map(|c| (c[l] - c[m]) * (c[l] - c[m])).sum();
            d[l * n + m] = v;
            d[m * n + l] = v;
        }
    }
    Ok((d, ridged))
}

fn covariance(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    let means: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    DMatrix::from_fn(p, p, |a, b| {
        columns[a]
            .iter()
            .zip(&columns[b])
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum::<f64>()
            / (n as f64 - 1.0)
    })
}

fn well_conditioned(a: &DMatrix<f64>, ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = ch.l_dirty();
    (0..a.nrows()).all(|i| l[(i, i)] * l[(i, i)] > 1e-10 * a[(i, i)].abs().max(f64::MIN_POSITIVE))
}

/// Builds the penalized distance matrix for `cohort`.
///
/// Entry `(l, m)` is the covariate distance plus the penalty when
/// `|Z̃_l − Z̃_m| ≤ Λ`. When `N + e` is odd one extra sink is appended and
/// flagged.
pub fn build_distance_matrix(cohort: &Cohort, spec: &DistanceSpec) -> Result<DistanceMatrix> {
    spec.validate()?;
    let n = cohort.len();
    if n < 2 {
        return Err(Error::validation("need at least 2 subjects to match"));
    }
    if spec.covariate_metric != CovariateMetric::Euclidean && cohort.p() > 0 && n <= cohort.p() {
        return Err(Error::validation(
            "covariance needs more subjects than covariates",
        ));
    }
    if spec.sinks >= n {
        return Err(Error::validation("sinks must be fewer than subjects"));
    }
    let (mut d, ridged) = covariate_distances(cohort, spec.covariate_metric)?;
    let max_d = d.iter().copied().fold(0.0, f64::max);
    let penalty = spec.penalty.unwrap_or(1000.0 * (max_d + 1.0));
    if penalty <= max_d {
        return Err(Error::validation(format!(
            "penalty {penalty} does not exceed the largest covariate distance {max_d}"
        )));
    }
    let doses = cohort.doses();
    for l in 0..n {
        for m in 0..n {
            if l != m && (doses[l] - doses[m]).abs() <= spec.caliper_lambda {
                d[l * n + m] += penalty;
            }
        }
    }
    let auto_sink = (n + spec.sinks) % 2 == 1;
    Ok(DistanceMatrix {
        n,
        entries: d,
        sinks: spec.sinks + usize::from(auto_sink),
        auto_sink,
        penalty,
        max_covariate_distance: max_d,
        ridged,
        forbid_dose_ties: spec.forbid_dose_ties,
        encouragement: spec.encouragement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Provenance, Subject};

    fn cohort(rows: &[(f64, Vec<f64>)]) -> Cohort {
        let p = rows[0].1.len();
        let subjects = rows
            .iter()
            .enumerate()
            .map(|(i, (z, x))| Subject {
                id: format!("s{i}"),
                dose: *z,
                treatment: false,
                outcome: 0.0,
                covariates: x.clone(),
                latent_u: None,
                latent_class: None,
                potential_outcomes: None,
            })
            .collect();
        Cohort::new(
            subjects,
            (1..=p).map(|j| format!("x{j}")).collect(),
            Provenance::Derived {
                note: "test".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn caliper_penalizes_close_doses_only() {
        let c = cohort(&[
            (0.0, vec![1.0]),
            (5.0, vec![1.0]),
            (0.5, vec![1.0]),
            (9.0, vec![2.0]),
        ]);
        let spec = DistanceSpec::default().with_caliper(1.0).with_sinks(0);
        let m = build_distance_matrix(&c, &spec).unwrap();
        assert_eq!(m.entry(0, 1), 0.0);
        assert_eq!(m.entry(0, 2), m.penalty);
        assert!(m.penalty > m.max_covariate_distance);
    }

    #[test]
    fn rank_mahalanobis_matches_hand_oracle() {
        let rows = vec![
            (0.0, vec![1.0, 10.0]),
            (1.0, vec![3.0, 10.0]),
            (2.0, vec![2.0, 30.0]),
            (3.0, vec![5.0, 20.0]),
            (4.0, vec![4.0, 50.0]),
        ];
        let c = cohort(&rows);
        let (d, ridged) = covariate_distances(&c, CovariateMetric::RankMahalanobis).unwrap();
        assert!(!ridged);
        // ranks: x1 = (1,3,2,5,4); x2 = (1.5,1.5,4,3,5)
        let r = [[1.0, 1.5], [3.0, 1.5], [2.0, 4.0], [5.0, 3.0], [4.0, 5.0]];
        let mean = [3.0, 3.0];
        let mut s = [[0.0_f64; 2]; 2];
        for row in &r {
            for a in 0..2 {
                for b in 0..2 {
                    s[a][b] += (row[a] - mean[a]) * (row[b] - mean[b]) / 4.0;
                }
            }
        }
        let untied: f64 = 5.0 * 6.0 / 12.0;
        let k = [(untied / s[0][0]).sqrt(), (untied / s[1][1]).sqrt()];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] *= k[a] * k[b];
            }
        }
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let inv = [
            [s[1][1] / det, -s[0][1] / det],
            [-s[1][0] / det, s[0][0] / det],
        ];
        for l in 0..5 {
            for m in 0..5 {
                let v = [r[l][0] - r[m][0], r[l][1] - r[m][1]];
                let q = v[0] * (inv[0][0] * v[0] + inv[0][1] * v[1])
                    + v[1] * (inv[1][0] * v[0] + inv[1][1] * v[1]);
                assert!(
                    (d[l * 5 + m] - q).abs() < 1e-10,
                    "{l},{m}: {} vs {q}",
                    d[l * 5 + m]
                );
            }
        }
    }

    #[test]
    fn constant_covariate_is_ridged() {
        let c = cohort(&[
            (0.0, vec![1.0, 7.0]),
            (1.0, vec![2.0, 7.0]),
            (2.0, vec![3.0, 7.0]),
            (3.0, vec![4.0, 7.0]),
        ]);
        let (_, ridged) = covariate_distances(&c, CovariateMetric::Mahalanobis).unwrap();
        assert!(ridged);
    }

    #[test]
    fn sinks_and_odd_counts() {
        let c = cohort(&[(0.0, vec![1.0]), (1.0, vec![2.0]), (2.0, vec![3.0])]);
        let m = build_distance_matrix(&c, &DistanceSpec::default()).unwrap();
        assert!(m.auto_sink);
        assert_eq!(m.size(), 4);
        assert_eq!(m.entry(0, 3), 0.0);
        let m = build_distance_matrix(&c, &DistanceSpec::default().with_sinks(1)).unwrap();
        assert!(!m.auto_sink);
        assert_eq!(m.size(), 4);
        let m = build_distance_matrix(&c, &DistanceSpec::default().with_sinks(2)).unwrap();
        assert_eq!(m.size(), 6);
        assert!(m.entry(3, 4).is_infinite());
    }
}
