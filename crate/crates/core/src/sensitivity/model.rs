//! The logistic confounder model and its `(τ, λ₁)` parametrization.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::dgp::logistic;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;
use rand::Rng as _;

/// Linear fit of dose on covariates, with the centering and scaling used to
/// standardize its residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residualizer {
    /// Intercept first, then one slope per covariate.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub scale: f64,
    pub ridged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizedResidual {
    /// One value per subject; sample mean 0, sample variance 1.
    pub values: Vec<f64>,
    pub residualizer: Residualizer,
}

/// Residual of dose on covariates, rescaled to mean 0 and variance 1.
pub fn standardize_residual(cohort: &Cohort) -> Result<StandardizedResidual> {
    let n = cohort.len();
    let p = cohort.p();
    if n <= p + 1 {
        return Err(Error::validation(
            "standardizing the dose residual needs N > p + 1",
        ));
    }
    let dose = cohort.doses();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| cohort.covariate(j)).collect();
    let fit = stats::ols(&dose, &columns)?;
    let center = stats::mean(&fit.residuals);
    let scale = stats::sd(&fit.residuals);
    let dose_scale = stats::sd(&dose).max(f64::MIN_POSITIVE);
    if !(scale > 1e-10 * dose_scale) {
        return Err(Error::numerical(
            "dose residual has zero variance given the covariates",
        ));
    }
    Ok(StandardizedResidual {
        values: fit.residuals.iter().map(|r| (r - center) / scale).collect(),
        residualizer: Residualizer {
            coefficients: fit.coefficients,
            center,
            scale,
            ridged: fit.ridged,
        },
    })
}

/// Residuals split strictly above and strictly below their median.
#[derive(Clone, Debug)]
pub struct MedianHalves {
    above: Vec<f64>,
    below: Vec<f64>,
}

impl MedianHalves {
    pub fn new(residuals: &[f64]) -> Result<Self> {
        if residuals.len() < 2 {
            return Err(Error::validation("need at least two residuals"));
        }
        let mut sorted = residuals.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        let above: Vec<f64> = residuals.iter().copied().filter(|&r| r > median).collect();
        let below: Vec<f64> = residuals.iter().copied().filter(|&r| r < median).collect();
        if above.is_empty() || below.is_empty() {
            return Err(Error::validation("residuals are constant"));
        }
        Ok(MedianHalves { above, below })
    }

    /// Model-implied `τ` at `(λ₀, λ₁)`.
    pub fn tau(&self, lambda0: f64, lambda1: f64) -> f64 {
        let avg = |v: &[f64]| {
            v.iter()
                .map(|&r| logistic(lambda0 + lambda1 * r))
                .sum::<f64>()
                / v.len() as f64
        };
        avg(&self.above) - avg(&self.below)
    }
}

/// Which of the two `λ₀` solutions to return.
///
/// For fixed `λ₁ ≠ 0`, `τ(λ₀)` rises from 0 to a maximum and falls back to 0,
/// so every interior target has two roots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootBranch {
    /// Root below the maximizer: `U = 1` is the minority value.
    #[default]
    Lower,
    Upper,
}

/// `τ` for `(λ₀, λ₁)` on the empirical median halves of `residuals`.
pub fn tau_of(lambda0: f64, lambda1: f64, residuals: &[f64]) -> Result<f64> {
    Ok(MedianHalves::new(residuals)?.tau(lambda0, lambda1))
}

/// Solves `τ(λ₀; λ₁) = tau` on the lower branch.
pub fn solve_lambda0(tau: f64, lambda1: f64, residuals: &[f64]) -> Result<f64> {
    solve_lambda0_branch(
        tau,
        lambda1,
        &MedianHalves::new(residuals)?,
        RootBranch::Lower,
    )
}

pub fn solve_lambda0_branch(
    tau: f64,
    lambda1: f64,
    halves: &MedianHalves,
    branch: RootBranch,
) -> Result<f64> {
    if !lambda1.is_finite() || !tau.is_finite() {
        return Err(Error::validation("tau and lambda1 must be finite"));
    }
    if lambda1 == 0.0 {
        return if tau == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::infeasible(format!(
                "tau = {tau} is unreachable with lambda1 = 0"
            )))
        };
    }
    // g(λ₀) = sign(λ₁)·τ is positive and unimodal in λ₀.
    let sign = lambda1.signum();
    let target = sign * tau;
    if target <= 0.0 {
        return Err(Error::infeasible(format!(
            "tau = {tau} must be nonzero with the sign of lambda1 = {lambda1}"
        )));
    }
    let g = |l0: f64| sign * halves.tau(l0, lambda1);
    let (peak, gmax) = maximize(&g, lambda1, halves);
    if target > gmax + 1e-12 {
        return Err(Error::infeasible(format!(
            "tau = {tau} exceeds the supremum {:.6} attainable with lambda1 = {lambda1}",
            sign * gmax
        )));
    }
    if target >= gmax {
        return Ok(peak);
    }
    let dir = match branch {
        RootBranch::Lower => -1.0,
        RootBranch::Upper => 1.0,
    };
    let mut step = 1.0;
    let mut far = peak + dir * step;
    while g(far) >= target {
        step *= 2.0;
        far = peak + dir * step;
        if step > 1e8 {
            return Err(Error::numerical("failed to bracket lambda0"));
        }
    }
    // g(far) < target <= g(near)
    let mut near = peak;
    for _ in 0..200 {
        let mid = 0.5 * (near + far);
        if g(mid) >= target {
            near = mid;
        } else {
            far = mid;
        }
        if (near - far).abs() <= 1e-13 * (1.0 + near.abs()) {
            break;
        }
    }
    Ok(0.5 * (near + far))
}

/// Grid scan plus golden-section refinement of the unimodal `g`.
fn maximize(g: &dyn Fn(f64) -> f64, lambda1: f64, halves: &MedianHalves) -> (f64, f64) {
    let spread = halves
        .above
        .iter()
        .chain(&halves.below)
        .fold(0.0_f64, |m, r| m.max(r.abs()));
    let half_width = lambda1.abs() * spread + 40.0;
    let cells = 400;
    let h = 2.0 * half_width / cells as f64;
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for i in 0..=cells {
        let v = g(-half_width + i as f64 * h);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    let (mut a, mut b) = (
        -half_width + (best as f64 - 1.0) * h,
        -half_width + (best as f64 + 1.0) * h,
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
        if b - a < 1e-12 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let v = g(x);
    if v >= best_v {
        (x, v)
    } else {
        (-half_width + best as f64 * h, best_v)
    }
}

/// `U ~ Bern(logistic(λ₀ + λ₁ Z≈))` with `Z≈` the standardized dose residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfounderModel {
    pub lambda0: f64,
    pub lambda1: f64,
    /// Target `τ` when the model was solved from `(τ, λ₁)`.
    pub tau: Option<f64>,
    pub residuals: Vec<f64>,
    pub residualizer: Residualizer,
}

impl ConfounderModel {
    pub fn from_lambdas(residual: &StandardizedResidual, lambda0: f64, lambda1: f64) -> Self {
        ConfounderModel {
            lambda0,
            lambda1,
            tau: None,
            residuals: residual.values.clone(),
            residualizer: residual.residualizer.clone(),
        }
    }

    pub fn from_tau(
        residual: &StandardizedResidual,
        tau: f64,
        lambda1: f64,
        branch: RootBranch,
    ) -> Result<Self> {
        let halves = MedianHalves::new(&residual.values)?;
        let lambda0 = solve_lambda0_branch(tau, lambda1, &halves, branch)?;
        Ok(ConfounderModel {
            tau: Some(tau),
            ..Self::from_lambdas(residual, lambda0, lambda1)
        })
    }

    /// Convenience: residualize `cohort` and solve from `(τ, λ₁)`.
    pub fn fit(cohort: &Cohort, tau: f64, lambda1: f64) -> Result<Self> {
        Self::from_tau(
            &standardize_residual(cohort)?,
            tau,
            lambda1,
            RootBranch::Lower,
        )
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.residuals
            .iter()
            .map(|&r| logistic(self.lambda0 + self.lambda1 * r))
            .collect()
    }

    /// `τ` implied by the stored `(λ₀, λ₁)`.
    pub fn implied_tau(&self) -> Result<f64> {
        tau_of(self.lambda0, self.lambda1, &self.residuals)
    }
}

/// `k` independent per-subject draws of `U` under `model`.
///
/// Imputation `j` uses stream `(seed, j)`, so the same seed gives common
/// uniforms across models.
pub fn impute_u(model: &ConfounderModel, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(Error::validation("at least two imputations are required"));
    }
    let probs = model.probabilities();
    Ok((0..k)
        .map(|j| {
            let mut r = rng::stream(seed, j as u64);
            probs
                .iter()
                .map(|&p| if r.random::<f64>() < p { 1.0 } else { 0.0 })
                .collect()
        })
        .collect())
}
