//! Estimators of the outcome noise scale `σ`.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matching::MatchedDesign;
use crate::stats;

/// Variance floor; estimates at or below it are flagged.
const FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SigmaMethod {
    /// Fit `R − δU` on treatment and covariates by least squares over matched subjects.
    #[default]
    LinearF,
    /// Six-moment matched-pair estimator; needs no model for `f`.
    MatchedMoments,
    Known {
        sigma: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    /// The raw variance estimate was at or below the floor.
    pub floored: bool,
}

/// `σ̂²(δ) = (q0 − 2δ q1 + δ² q2) / denom`, which covers both estimators.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SigmaQuadratic {
    q0: f64,
    q1: f64,
    q2: f64,
    denom: f64,
}

impl SigmaQuadratic {
    pub fn known(sigma: f64) -> Self {
        SigmaQuadratic {
            q0: sigma * sigma,
            q1: 0.0,
            q2: 0.0,
            denom: 1.0,
        }
    }

    pub fn variance(&self, delta: f64) -> (f64, bool) {
        let v = (self.q0 - 2.0 * delta * self.q1 + delta * delta * self.q2) / self.denom;
        if v <= FLOOR {
            (FLOOR, true)
        } else {
            (v, false)
        }
    }

    pub fn estimate(&self, delta: f64) -> SigmaEstimate {
        let (v, floored) = self.variance(delta);
        SigmaEstimate {
            sigma: v.sqrt(),
            floored,
        }
    }
}

fn matched_members(design: &MatchedDesign) -> Vec<usize> {
    design.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
}

/// Residual-projection form of the linear-`f` estimator.
///
/// The least-squares residual of `R − δU` is `e_R − δ e_U`, so one fit of
/// each response gives the estimate for every `δ`.
pub(crate) fn linear_f_quadratic(
    design: &MatchedDesign,
    cohort: &Cohort,
    u: Option<&[f64]>,
) -> Result<SigmaQuadratic> {
    let idx = matched_members(design);
    let p = cohort.p();
    let m = idx.len();
    if m <= p + 2 {
        return Err(Error::validation(
            "too few matched subjects to fit the linear outcome model",
        ));
    }
    let mut columns = vec![idx
        .iter()
        .map(|&i| cohort.subject(i).d())
        .collect::<Vec<f64>>()];
    columns.extend((0..p).map(|j| {
        idx.iter()
            .map(|&i| cohort.subject(i).covariates[j])
            .collect()
    }));
    let r: Vec<f64> = idx.iter().map(|&i| cohort.subject(i).outcome).collect();
    let e_r = stats::ols(&r, &columns)?.residuals;
    let denom = (m - p - 2) as f64;
    let q0 = e_r.iter().map(|e| e * e).sum();
    let (q1, q2) = match u {
        None => (0.0, 0.0),
        Some(u) => {
            let uv: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
            let e_u = stats::ols(&uv, &columns)?.residuals;
            (
                e_r.iter().zip(&e_u).map(|(a, b)| a * b).sum(),
                e_u.iter().map(|e| e * e).sum(),
            )
        }
    };
    Ok(SigmaQuadratic { q0, q1, q2, denom })
}

/// The six pair-moment sums of the matched-moments estimator, folded into
/// the quadratic in `δ`. Cross terms carry the factor 2 of the square.
pub(crate) fn matched_moments_quadratic(
    design: &MatchedDesign,
    cohort: &Cohort,
    u: Option<&[f64]>,
    beta_hat: f64,
) -> Result<SigmaQuadratic> {
    design.require_encoded()?;
    if design.pairs.is_empty() {
        return Err(Error::validation("design has no pairs"));
    }
    let (mut rr, mut dd, mut uu, mut rd, mut ru, mut du) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(e, c) in &design.pairs {
        let (se, sc) = (cohort.subject(e), cohort.subject(c));
        let dr = se.outcome - sc.outcome;
        let dd_ = se.d() - sc.d();
        let du_ = u.map_or(0.0, |u| u[e] - u[c]);
        rr += dr * dr;
        dd += dd_ * dd_;
        uu += du_ * du_;
        rd += dr * dd_;
        ru += dr * du_;
        du += dd_ * du_;
    }
    let b = beta_hat;
    // 2σ̂² = I⁻¹[ΣΔR² + β²ΣΔD² + δ²ΣΔU² − 2βΣΔRΔD − 2δΣΔRΔU + 2βδΣΔDΔU]
    Ok(SigmaQuadratic {
        q0: rr + b * b * dd - 2.0 * b * rd,
        q1: ru - b * du,
        q2: uu,
        denom: 2.0 * design.pairs.len() as f64,
    })
}

/// `σ̂` for one imputation of `U` (or none, meaning `U ≡ 0`).
pub fn estimate_sigma(
    design: &MatchedDesign,
    cohort: &Cohort,
    imputation: Option<&[f64]>,
    delta: f64,
    beta_hat: f64,
    method: SigmaMethod,
) -> Result<SigmaEstimate> {
    if imputation.is_some_and(|u| u.len() != cohort.len()) {
        return Err(Error::validation("imputation needs one value per subject"));
    }
    let q = match method {
        SigmaMethod::LinearF => linear_f_quadratic(design, cohort, imputation)?,
        SigmaMethod::MatchedMoments => {
            matched_moments_quadratic(design, cohort, imputation, beta_hat)?
        }
        SigmaMethod::Known { sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::validation("known sigma must be positive"));
            }
            SigmaQuadratic::known(sigma)
        }
    };
    Ok(q.estimate(delta))
}
