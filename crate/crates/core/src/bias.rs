//! Oracle bias of the Wald estimator and the between-design bias ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::dgp::{generate_partially_linear_cohort, PartiallyLinearSpec};
use crate::error::{Error, Result};
use crate::matching::{strengthen, DistanceSpec, MatchedDesign};
use crate::rng::child_seed;

/// Encouraged-minus-control sums over pairs of an encoded design.
fn pair_sum(design: &MatchedDesign, values: &[f64]) -> f64 {
    design
        .pairs
        .iter()
        .map(|&(e, c)| values[e] - values[c])
        .sum()
}

fn compliance_sum(design: &MatchedDesign, cohort: &Cohort) -> Result<f64> {
    design.require_encoded()?;
    let s: f64 = design
        .pairs
        .iter()
        .map(|&(e, c)| cohort.subject(e).d() - cohort.subject(c).d())
        .sum();
    if s == 0.0 {
        return Err(Error::numerical("compliance sum is zero"));
    }
    Ok(s)
}

fn check_len(cohort: &Cohort, v: &[f64], what: &str) -> Result<()> {
    if v.len() != cohort.len() {
        return Err(Error::validation(format!(
            "{what} must have one value per subject"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    /// `Σ (f_e − f_c) / Σ S_i`
    pub imbalance_term: f64,
    /// `Σ (U_e − U_c) / Σ S_i`
    pub confounding_term: f64,
    pub delta: f64,
    /// `imbalance_term + delta · confounding_term`
    pub total: f64,
}

/// Finite-sample bias of the Wald estimator given oracle `f(X)` and `U`.
pub fn finite_sample_bias(
    design: &MatchedDesign,
    cohort: &Cohort,
    f_values: &[f64],
    delta: f64,
    u_values: &[f64],
) -> Result<BiasDecomposition> {
    check_len(cohort, f_values, "f_values")?;
    check_len(cohort, u_values, "u_values")?;
    let s = compliance_sum(design, cohort)?;
    let imbalance_term = pair_sum(design, f_values) / s;
    let confounding_term = pair_sum(design, u_values) / s;
    Ok(BiasDecomposition {
        imbalance_term,
        confounding_term,
        delta,
        total: imbalance_term + delta * confounding_term,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AobReport {
    pub e_f_near: f64,
    pub e_f_far: f64,
    pub e_d_near: f64,
    pub e_d_far: f64,
    pub e_u_near: f64,
    pub e_u_far: f64,
    pub delta: f64,
    pub aob: f64,
}

impl AobReport {
    /// The asymptotic bias evaluated at the stored group means.
    pub fn evaluate(&self) -> f64 {
        let gap_d = self.e_d_near - self.e_d_far;
        (self.e_f_near - self.e_f_far) / gap_d + self.delta * (self.e_u_near - self.e_u_far) / gap_d
    }
}

/// Plug-in asymptotic oracle bias from near/far group means.
///
/// Consistent for the population quantity only when matched sample means
/// converge, which the caller must justify.
pub fn aob_estimate(
    design: &MatchedDesign,
    cohort: &Cohort,
    f_values: &[f64],
    delta: f64,
    u_values: &[f64],
) -> Result<AobReport> {
    check_len(cohort, f_values, "f_values")?;
    check_len(cohort, u_values, "u_values")?;
    design.require_encoded()?;
    let i = design.n_pairs() as f64;
    let near = |v: &dyn Fn(usize) -> f64| design.pairs.iter().map(|p| v(p.0)).sum::<f64>() / i;
    let far = |v: &dyn Fn(usize) -> f64| design.pairs.iter().map(|p| v(p.1)).sum::<f64>() / i;
    let f = |k: usize| f_values[k];
    let d = |k: usize| cohort.subject(k).d();
    let u = |k: usize| u_values[k];
    let mut r = AobReport {
        e_f_near: near(&f),
        e_f_far: far(&f),
        e_d_near: near(&d),
        e_d_far: far(&d),
        e_u_near: near(&u),
        e_u_far: far(&u),
        delta,
        aob: 0.0,
    };
    if r.e_d_near == r.e_d_far {
        return Err(Error::numerical("near and far treatment means coincide"));
    }
    r.aob = r.evaluate();
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioFlag {
    Ok,
    /// Both confounding terms were below 1e-12; reported as 1.
    BothZero,
    /// Only the reference term was zero; reported as infinity.
    ZeroReference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRatio {
    pub delta_ratio: f64,
    pub bias0_per_delta: f64,
    pub bias1_per_delta: f64,
    pub flag: RatioFlag,
}

fn ratio(b0: f64, b1: f64) -> BiasRatio {
    let (a0, a1) = (b0.abs(), b1.abs());
    let (delta_ratio, flag) = if a0 < 1e-12 && a1 < 1e-12 {
        (1.0, RatioFlag::BothZero)
    } else if a0 < 1e-12 {
        (f64::INFINITY, RatioFlag::ZeroReference)
    } else {
        (a1 / a0, RatioFlag::Ok)
    };
    BiasRatio {
        delta_ratio,
        bias0_per_delta: b0,
        bias1_per_delta: b1,
        flag,
    }
}

/// `Δ = |U-bias of design 1| / |U-bias of design 0|`; δ cancels.
pub fn bias_ratio(
    design0: &MatchedDesign,
    design1: &MatchedDesign,
    cohort: &Cohort,
    u_values: &[f64],
) -> Result<BiasRatio> {
    check_len(cohort, u_values, "u_values")?;
    let b0 = pair_sum(design0, u_values) / compliance_sum(design0, cohort)?;
    let b1 = pair_sum(design1, u_values) / compliance_sum(design1, cohort)?;
    Ok(ratio(b0, b1))
}

/// One row of the leave-one-covariate-out table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutRow {
    pub covariate: String,
    pub compliance0: f64,
    pub compliance1: f64,
    /// Mean encouraged-minus-control difference in the held-out covariate.
    pub udiff0: f64,
    pub udiff1: f64,
    pub bias0_per_delta: f64,
    pub bias1_per_delta: f64,
    pub delta_ratio: f64,
}

/// Treats each covariate in turn as unmeasured: rematches both designs
/// without it and reports the bias it would contribute per unit δ.
pub fn leave_one_out_diagnostic(
    cohort: &Cohort,
    spec0: &DistanceSpec,
    spec1: &DistanceSpec,
) -> Result<Vec<LeaveOneOutRow>> {
    if cohort.p() < 2 {
        return Err(Error::validation(
            "leave-one-out needs at least 2 covariates",
        ));
    }
    let mut rows = Vec::with_capacity(cohort.p());
    for j in 0..cohort.p() {
        let reduced = cohort.without_covariate(j);
        let u = cohort.covariate(j);
        let d0 = strengthen(&reduced, spec0)?;
        let d1 = strengthen(&reduced, spec1)?;
        let c0 = d0.compute_compliance(&reduced)?;
        let c1 = d1.compute_compliance(&reduced)?;
        let r = bias_ratio(&d0, &d1, &reduced, &u)?;
        rows.push(LeaveOneOutRow {
            covariate: cohort.covariate_names()[j].clone(),
            compliance0: c0,
            compliance1: c1,
            udiff0: pair_sum(&d0, &u) / d0.n_pairs() as f64,
            udiff1: pair_sum(&d1, &u) / d1.n_pairs() as f64,
            bias0_per_delta: r.bias0_per_delta,
            bias1_per_delta: r.bias1_per_delta,
            delta_ratio: r.delta_ratio,
        });
    }
    Ok(rows)
}

pub fn write_leave_one_out_csv<W: Write>(rows: &[LeaveOneOutRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearImbalance {
    /// Signed `γ_j · gap_j / ι̂_C` per covariate.
    pub contributions: Vec<f64>,
    /// `Σ_j` of the signed contributions.
    pub total: f64,
}

/// Residual-imbalance bias under a declared linear `f(X) = Xᵀγ`.
pub fn linear_imbalance_bias(
    design: &MatchedDesign,
    cohort: &Cohort,
    gamma: &[f64],
) -> Result<LinearImbalance> {
    if gamma.len() != cohort.p() {
        return Err(Error::validation(
            "one coefficient per covariate is required",
        ));
    }
    let s = compliance_sum(design, cohort)?;
    let contributions: Vec<f64> = gamma
        .iter()
        .enumerate()
        .map(|(j, g)| g * pair_sum(design, &cohort.covariate(j)) / s)
        .collect();
    Ok(LinearImbalance {
        total: contributions.iter().sum(),
        contributions,
    })
}

/// Per-design averages over replications of a bias simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasColumn {
    pub design: String,
    /// Mean `ι̂_C`.
    pub compliance: f64,
    /// Mean `|I⁻¹ Σ (U_e − U_c)|`.
    pub abs_u_diff: f64,
    /// Mean `δ |Σ (U_e − U_c) / Σ S|`.
    pub abs_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRegime {
    pub columns: Vec<BiasColumn>,
    /// `abs_bias` of the second design over that of the first.
    pub delta_ratio: f64,
    pub reps: usize,
}

/// Monte-Carlo bias contributed by the latent confounder under two designs.
///
/// Replication `r` draws a cohort with seed `child_seed(seed, r)`.
pub fn simulate_bias_regime(
    spec: &PartiallyLinearSpec,
    n: usize,
    designs: &[(String, DistanceSpec)],
    reps: usize,
    seed: u64,
) -> Result<BiasRegime> {
    if designs.len() != 2 || reps == 0 {
        return Err(Error::validation(
            "need exactly two designs and at least one replication",
        ));
    }
    let mut acc = vec![[0.0; 3]; 2];
    for r in 0..reps {
        let cohort = generate_partially_linear_cohort(spec, n, child_seed(seed, r as u64))?;
        let u = cohort
            .latent_u()
            .ok_or_else(|| Error::validation("generator did not record U"))?;
        for (k, (_, ds)) in designs.iter().enumerate() {
            let d = strengthen(&cohort, ds)?;
            let s = compliance_sum(&d, &cohort)?;
            let du = pair_sum(&d, &u);
            let i = d.n_pairs() as f64;
            acc[k][0] += s / i;
            acc[k][1] += (du / i).abs();
            acc[k][2] += spec.delta * (du / s).abs();
        }
    }
    let m = reps as f64;
    let columns: Vec<BiasColumn> = designs
        .iter()
        .zip(&acc)
        .map(|((name, _), a)| BiasColumn {
            design: name.clone(),
            compliance: a[0] / m,
            abs_u_diff: a[1] / m,
            abs_bias: a[2] / m,
        })
        .collect();
    Ok(BiasRegime {
        delta_ratio: columns[1].abs_bias / columns[0].abs_bias,
        columns,
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_flags() {
        assert_eq!(ratio(0.0, 0.0).flag, RatioFlag::BothZero);
        assert_eq!(ratio(0.0, 1.0).delta_ratio, f64::INFINITY);
        assert_eq!(ratio(-2.0, 1.0).delta_ratio, 0.5);
    }
}
