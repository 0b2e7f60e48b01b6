//! Multiple-imputation pooling of bias-corrected Wald estimates.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matching::MatchedDesign;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Rubin-pooled estimate over `k` imputations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub point: f64,
    /// Mean per-imputation variance.
    pub within_var: f64,
    /// `(1 + 1/K)/(K − 1) · Σ (β̂_k − β̄)²`.
    pub across_var: f64,
    pub total_var: f64,
    /// `(K − 1)(1 + W/B)²`; `None` when the across term is zero.
    pub dof: Option<f64>,
    pub k: usize,
    /// The interval uses the normal quantile because `dof` is undefined.
    pub normal_fallback: bool,
}

impl PooledEstimate {
    /// `within_var + across_var` from the stored components.
    pub fn recompute_total(&self) -> f64 {
        self.within_var + self.across_var
    }

    pub fn interval(&self, alpha: f64) -> Result<Interval> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::validation("alpha must lie in (0, 1)"));
        }
        let q = match self.dof {
            Some(df) => stats::t_quantile(1.0 - alpha / 2.0, df)?,
            None => stats::normal_quantile(1.0 - alpha / 2.0),
        };
        let half = q * self.total_var.sqrt();
        Ok(Interval {
            lower: self.point - half,
            upper: self.point + half,
        })
    }
}

/// Rubin's rules for estimates with per-imputation variances.
pub fn rubin_pool(estimates: &[f64], within: &[f64]) -> Result<PooledEstimate> {
    let k = estimates.len();
    if k < 2 || within.len() != k {
        return Err(Error::validation(
            "need K >= 2 estimates with one variance each",
        ));
    }
    let kf = k as f64;
    let point = stats::mean(estimates);
    let ss: f64 = estimates.iter().map(|b| (b - point).powi(2)).sum();
    let across_var = (1.0 + 1.0 / kf) / (kf - 1.0) * ss;
    let within_var = stats::mean(within);
    // (K − 1)(1 + W/B)² written as (K − 1)(B + W)²/B² to limit rounding.
    let total = within_var + across_var;
    let dof = (across_var > 0.0).then(|| (kf - 1.0) * (total * total) / (across_var * across_var));
    Ok(PooledEstimate {
        point,
        within_var,
        across_var,
        total_var: total,
        dof,
        k,
        normal_fallback: dof.is_none(),
    })
}

/// Pair-level sums needed for bias correction of an encoded design.
#[derive(Clone, Debug)]
pub(crate) struct DesignSums {
    pub beta_hat: f64,
    pub s_sum: f64,
    pub n_pairs: usize,
    pub compliance: f64,
}

impl DesignSums {
    pub fn new(design: &MatchedDesign, cohort: &Cohort) -> Result<Self> {
        design.require_encoded()?;
        if design.pairs.is_empty() {
            return Err(Error::validation("design has no pairs"));
        }
        let (mut y, mut s) = (0.0, 0.0);
        for &(e, c) in &design.pairs {
            y += cohort.subject(e).outcome - cohort.subject(c).outcome;
            s += cohort.subject(e).d() - cohort.subject(c).d();
        }
        if s == 0.0 {
            return Err(Error::numerical("estimated compliance is zero"));
        }
        let n_pairs = design.pairs.len();
        Ok(DesignSums {
            beta_hat: y / s,
            s_sum: s,
            n_pairs,
            compliance: s / n_pairs as f64,
        })
    }

    /// `Σ (U_e − U_c) / Σ S_i`
    pub fn bias_factor(&self, design: &MatchedDesign, u: &[f64]) -> f64 {
        design.pairs.iter().map(|&(e, c)| u[e] - u[c]).sum::<f64>() / self.s_sum
    }

    /// `2σ² / (I ι̂²)`
    pub fn within_var(&self, sigma2: f64) -> f64 {
        2.0 * sigma2 / (self.n_pairs as f64 * self.compliance * self.compliance)
    }
}

/// Bias-corrected estimates `β̂_k = β̂ − δ Σ(U_e − U_c)/Σ S` pooled by Rubin's rules.
///
/// `ι̂_C` is held at its observed value for every imputation since `U` does
/// not alter dose or treatment.
pub fn pooled_ci(
    design: &MatchedDesign,
    cohort: &Cohort,
    imputations: &[Vec<f64>],
    delta: f64,
    sigma_hats: &[f64],
    alpha: f64,
) -> Result<(Interval, PooledEstimate)> {
    if imputations.len() != sigma_hats.len() {
        return Err(Error::validation(
            "one sigma estimate per imputation is required",
        ));
    }
    if imputations.iter().any(|u| u.len() != cohort.len()) {
        return Err(Error::validation(
            "each imputation needs one value per subject",
        ));
    }
    let sums = DesignSums::new(design, cohort)?;
    let estimates: Vec<f64> = imputations
        .iter()
        .map(|u| sums.beta_hat - delta * sums.bias_factor(design, u))
        .collect();
    let within: Vec<f64> = sigma_hats.iter().map(|s| sums.within_var(s * s)).collect();
    let pooled = rubin_pool(&estimates, &within)?;
    Ok((pooled.interval(alpha)?, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_imputation_hand_example() {
        let p = rubin_pool(&[1.0, 3.0], &[0.5, 0.5]).unwrap();
        assert_eq!(p.point, 2.0);
        assert_eq!(p.across_var, 3.0);
        assert_eq!(p.total_var, 3.5);
        assert_eq!(p.dof, Some(49.0 / 36.0));
    }

    #[test]
    fn equal_estimates_fall_back_to_normal() {
        let p = rubin_pool(&[1.0, 1.0, 1.0], &[0.25; 3]).unwrap();
        assert!(p.normal_fallback);
        let ci = p.interval(0.05).unwrap();
        assert!((ci.upper - 1.0 - 1.959963984540054 * 0.5).abs() < 1e-9);
    }
}
