//! Audit of the pair-level assignment model for continuous doses.
//!
//! Under the tilted dose law, the chance that the `U = 1` member of a pair
//! holds the higher dose is `logistic(γ |ΔZ̃|)`, which grows with the dose
//! gap. A model whose within-pair assignment odds ignore the gap would make
//! that chance flat, so a rank correlation between the indicator and the gap
//! measures the violation.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::dgp::{generate_semiparametric_dose_cohort, logistic, SemiparametricSpec};
use crate::error::{Error, Result};
use crate::matching::{strengthen_blocked, DistanceSpec, MatchedDesign};
use crate::rng::child_seed;
use crate::stats;

/// Minimum number of qualifying pairs for a run.
pub const MIN_QUALIFYING: usize = 10;

/// `exp{γ ΔZ̃ Δu} / (1 + exp{γ ΔZ̃ Δu})`.
pub fn pair_assignment_probability(gamma: f64, dose_gap: f64, u_gap: f64) -> f64 {
    logistic(gamma * dose_gap * u_gap)
}

/// Which pairs enter the audit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditStratum {
    /// Both members' doses must fall in `[lo, hi]`.
    #[serde(default)]
    pub dose_window: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub qualifying_pairs: usize,
    pub rho: f64,
    pub p_value: f64,
    /// Mean of the model probability at the generating `γ` over qualifying pairs.
    pub mean_model_probability: Option<f64>,
}

/// Audit of one matched cohort with known `U`.
pub fn audit_design(
    design: &MatchedDesign,
    cohort: &Cohort,
    stratum: &AuditStratum,
    gamma: Option<f64>,
) -> Result<AuditRun> {
    let u = cohort
        .latent_u()
        .ok_or_else(|| Error::validation("the audit needs the confounder column"))?;
    let mut indicator = Vec::new();
    let mut gaps = Vec::new();
    for &(a, b) in &design.pairs {
        if u[a] == u[b] {
            continue;
        }
        let (za, zb) = (cohort.subject(a).dose, cohort.subject(b).dose);
        if let Some((lo, hi)) = stratum.dose_window {
            if !(lo..=hi).contains(&za) || !(lo..=hi).contains(&zb) {
                continue;
            }
        }
        let (hi_member, gap) = if za >= zb { (a, za - zb) } else { (b, zb - za) };
        indicator.push(if u[hi_member] > u[if hi_member == a { b } else { a }] {
            1.0
        } else {
            0.0
        });
        gaps.push(gap);
    }
    if indicator.len() < MIN_QUALIFYING {
        return Err(Error::validation(format!(
            "only {} qualifying pairs; at least {MIN_QUALIFYING} are needed",
            indicator.len()
        )));
    }
    let sp = stats::spearman(&indicator, &gaps)?;
    let mean_model_probability = gamma.map(|g| {
        gaps.iter()
            .map(|&d| pair_assignment_probability(g, d, 1.0))
            .sum::<f64>()
            / gaps.len() as f64
    });
    Ok(AuditRun {
        qualifying_pairs: indicator.len(),
        rho: sp.rho,
        p_value: sp.p_value,
        mean_model_probability,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRequest {
    pub spec: SemiparametricSpec,
    pub n: usize,
    /// Match within blocks of this many subjects; `None` matches the whole cohort.
    #[serde(default)]
    pub block_size: Option<usize>,
    pub distance: DistanceSpec,
    #[serde(default)]
    pub stratum: AuditStratum,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub gamma: f64,
    pub reps: usize,
    pub alpha: f64,
    pub rejection_rate: f64,
    pub median_p_value: f64,
    pub mean_rho: f64,
    pub min_qualifying_pairs: usize,
    pub runs: Vec<AuditRun>,
}

/// Repeats the audit on fresh cohorts; run `r` uses seed `child_seed(seed, r)`.
pub fn gamma_model_audit(req: &AuditRequest) -> Result<AuditReport> {
    if req.reps == 0 || !(req.alpha > 0.0 && req.alpha < 1.0) {
        return Err(Error::validation(
            "audit needs reps > 0 and alpha in (0, 1)",
        ));
    }
    let mut runs = Vec::with_capacity(req.reps);
    for r in 0..req.reps {
        let cohort =
            generate_semiparametric_dose_cohort(&req.spec, req.n, child_seed(req.seed, r as u64))?;
        let design = strengthen_blocked(&cohort, &req.distance, req.block_size.unwrap_or(req.n))?;
        runs.push(audit_design(
            &design,
            &cohort,
            &req.stratum,
            Some(req.spec.gamma),
        )?);
    }
    let mut ps: Vec<f64> = runs.iter().map(|r| r.p_value).collect();
    ps.sort_by(f64::total_cmp);
    let m = ps.len();
    let median = if m % 2 == 1 {
        ps[m / 2]
    } else {
        0.5 * (ps[m / 2 - 1] + ps[m / 2])
    };
    Ok(AuditReport {
        gamma: req.spec.gamma,
        reps: req.reps,
        alpha: req.alpha,
        rejection_rate: runs.iter().filter(|r| r.p_value < req.alpha).count() as f64 / m as f64,
        median_p_value: median,
        mean_rho: runs.iter().map(|r| r.rho).sum::<f64>() / m as f64,
        min_qualifying_pairs: runs.iter().map(|r| r.qualifying_pairs).min().unwrap_or(0),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_plug_in() {
        let e2 = 2f64.exp();
        assert!((pair_assignment_probability(1.0, 2.0, 1.0) - e2 / (1.0 + e2)).abs() < 1e-15);
        assert!((pair_assignment_probability(1.0, 2.0, 1.0) - 0.8808).abs() < 1e-4);
    }
}
