//! Sensitivity zones, sensitivity intervals and `Δ_sup` heatmaps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::{
    impute_u, standardize_residual, ConfounderModel, RootBranch, StandardizedResidual,
};
use super::pooling::{rubin_pool, DesignSums, Interval, PooledEstimate};
use super::sigma::{linear_f_quadratic, matched_moments_quadratic, SigmaMethod, SigmaQuadratic};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matching::MatchedDesign;
use crate::stats;

/// Cartesian product of finite `δ`, `τ` and `λ₁` sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityZone {
    pub delta_set: Vec<f64>,
    pub tau_set: Vec<f64>,
    pub lambda1_set: Vec<f64>,
}

impl SensitivityZone {
    pub fn new(delta_set: Vec<f64>, tau_set: Vec<f64>, lambda1_set: Vec<f64>) -> Result<Self> {
        let z = SensitivityZone {
            delta_set,
            tau_set,
            lambda1_set,
        };
        z.validate()?;
        Ok(z)
    }

    /// `[−δ_sup, δ_sup]` discretized at `points` values, times one `(τ, λ₁)`.
    pub fn symmetric(delta_sup: f64, points: usize, tau: f64, lambda1: f64) -> Result<Self> {
        Self::new(delta_grid(delta_sup, points)?, vec![tau], vec![lambda1])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, set) in [
            ("delta", &self.delta_set),
            ("tau", &self.tau_set),
            ("lambda1", &self.lambda1_set),
        ] {
            if set.is_empty() {
                return Err(Error::validation(format!("{name} set is empty")));
            }
            if set.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} set has non-finite values"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delta_set.len() * self.tau_set.len() * self.lambda1_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evenly spaced grid on `[−δ_sup, δ_sup]`; `[0]` when `δ_sup = 0`.
pub fn delta_grid(delta_sup: f64, points: usize) -> Result<Vec<f64>> {
    if !(delta_sup >= 0.0) || !delta_sup.is_finite() {
        return Err(Error::validation(
            "delta_sup must be finite and nonnegative",
        ));
    }
    if delta_sup == 0.0 || points == 1 {
        return Ok(vec![0.0]);
    }
    if points < 2 {
        return Err(Error::validation("delta grid needs at least one point"));
    }
    let step = 2.0 * delta_sup / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                delta_sup
            } else {
                -delta_sup + i as f64 * step
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityOptions {
    pub alpha: f64,
    /// Number of imputations.
    pub k: usize,
    pub seed: u64,
    pub sigma: SigmaMethod,
    pub branch: RootBranch,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            alpha: 0.05,
            k: 50,
            seed: 0,
            sigma: SigmaMethod::LinearF,
            branch: RootBranch::Lower,
        }
    }
}

impl SensitivityOptions {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("alpha must lie in (0, 1)"));
        }
        if self.k < 2 {
            return Err(Error::validation("at least two imputations are required"));
        }
        Ok(())
    }
}

/// Everything about a `(τ, λ₁)` point that does not depend on `δ`.
pub(crate) struct ZoneKernel {
    pub lambda0: f64,
    /// Per imputation: `Σ (U_e − U_c) / Σ S`.
    pub bias_factors: Vec<f64>,
    sigma: Vec<SigmaQuadratic>,
    sums: DesignSums,
}

impl ZoneKernel {
    pub fn new(
        design: &MatchedDesign,
        cohort: &Cohort,
        residual: &StandardizedResidual,
        tau: f64,
        lambda1: f64,
        options: &SensitivityOptions,
    ) -> Result<Self> {
        let sums = DesignSums::new(design, cohort)?;
        let model = ConfounderModel::from_tau(residual, tau, lambda1, options.branch)?;
        let imputations = impute_u(&model, options.k, options.seed)?;
        let bias_factors = imputations
            .iter()
            .map(|u| sums.bias_factor(design, u))
            .collect();
        let sigma = match options.sigma {
            SigmaMethod::Known { sigma } if sigma > 0.0 => {
                vec![SigmaQuadratic::known(sigma); options.k]
            }
            SigmaMethod::Known { .. } => {
                return Err(Error::validation("known sigma must be positive"))
            }
            SigmaMethod::LinearF => imputations
                .iter()
                .map(|u| linear_f_quadratic(design, cohort, Some(u)))
                .collect::<Result<_>>()?,
            SigmaMethod::MatchedMoments => imputations
                .iter()
                .map(|u| matched_moments_quadratic(design, cohort, Some(u), sums.beta_hat))
                .collect::<Result<_>>()?,
        };
        Ok(ZoneKernel {
            lambda0: model.lambda0,
            bias_factors,
            sigma,
            sums,
        })
    }

    pub fn compliance(&self) -> f64 {
        self.sums.compliance
    }

    /// Pooled estimate at `δ`, plus whether any σ̂ hit the floor.
    pub fn pooled(&self, delta: f64) -> Result<(PooledEstimate, bool)> {
        let estimates: Vec<f64> = self
            .bias_factors
            .iter()
            .map(|b| self.sums.beta_hat - delta * b)
            .collect();
        let mut floored = false;
        let within: Vec<f64> = self
            .sigma
            .iter()
            .map(|q| {
                let (v, f) = q.variance(delta);
                floored |= f;
                self.sums.within_var(v)
            })
            .collect();
        Ok((rubin_pool(&estimates, &within)?, floored))
    }

    /// Per-`δ` confidence intervals.
    pub fn intervals(
        &self,
        deltas: &[f64],
        alpha: f64,
    ) -> Result<Vec<(f64, Interval, PooledEstimate, bool)>> {
        deltas
            .iter()
            .map(|&d| {
                let (p, f) = self.pooled(d)?;
                Ok((d, p.interval(alpha)?, p, f))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZonePointCi {
    pub delta: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda0: f64,
    pub interval: Interval,
    pub estimate: PooledEstimate,
    pub sigma_floored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasiblePoint {
    pub tau: f64,
    pub lambda1: f64,
    pub reason: String,
}

/// Union of per-point confidence intervals over a finite zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInterval {
    /// Hull of the union.
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub zone: SensitivityZone,
    pub per_point_cis: Vec<ZonePointCi>,
    /// Open stretches inside the hull that no per-point interval covers.
    pub gaps: Vec<Interval>,
    pub infeasible: Vec<InfeasiblePoint>,
}

impl SensitivityInterval {
    /// Membership in the union (not just the hull).
    pub fn covers(&self, x: f64) -> bool {
        self.per_point_cis.iter().any(|p| p.interval.contains(x))
    }

    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "delta",
            "tau",
            "lambda1",
            "lambda0",
            "lower",
            "upper",
            "point",
            "within_var",
            "across_var",
            "total_var",
            "dof",
            "normal_fallback",
            "sigma_floored",
        ])?;
        for p in &self.per_point_cis {
            let e = &p.estimate;
            w.write_record([
                p.delta.to_string(),
                p.tau.to_string(),
                p.lambda1.to_string(),
                p.lambda0.to_string(),
                p.interval.lower.to_string(),
                p.interval.upper.to_string(),
                e.point.to_string(),
                e.within_var.to_string(),
                e.across_var.to_string(),
                e.total_var.to_string(),
                e.dof.map_or(String::new(), |d| d.to_string()),
                e.normal_fallback.to_string(),
                p.sigma_floored.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uncovered stretches between sorted, merged intervals.
fn union_gaps(intervals: &[Interval]) -> Vec<Interval> {
    let mut v = intervals.to_vec();
    v.sort_by(|a, b| a.lower.total_cmp(&b.lower));
    let mut gaps = Vec::new();
    let mut reach = v[0].upper;
    for iv in &v[1..] {
        if iv.lower > reach {
            gaps.push(Interval {
                lower: reach,
                upper: iv.lower,
            });
        }
        reach = reach.max(iv.upper);
    }
    gaps
}

/// Sensitivity interval over every feasible point of `zone`.
pub fn sensitivity_interval(
    design: &MatchedDesign,
    cohort: &Cohort,
    zone: &SensitivityZone,
    options: &SensitivityOptions,
) -> Result<SensitivityInterval> {
    zone.validate()?;
    options.validate()?;
    let residual = standardize_residual(cohort)?;
    let mut per_point_cis = Vec::with_capacity(zone.len());
    let mut infeasible = Vec::new();
    for &tau in &zone.tau_set {
        for &lambda1 in &zone.lambda1_set {
            let kernel = match ZoneKernel::new(design, cohort, &residual, tau, lambda1, options) {
                Ok(k) => k,
                Err(Error::Infeasible(reason)) => {
                    infeasible.push(InfeasiblePoint {
                        tau,
                        lambda1,
                        reason,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (delta, interval, estimate, sigma_floored) in
                kernel.intervals(&zone.delta_set, options.alpha)?
            {
                per_point_cis.push(ZonePointCi {
                    delta,
                    tau,
                    lambda1,
                    lambda0: kernel.lambda0,
                    interval,
                    estimate,
                    sigma_floored,
                });
            }
        }
    }
    if per_point_cis.is_empty() {
        return Err(Error::infeasible(
            "every (tau, lambda1) point of the zone is infeasible",
        ));
    }
    let intervals: Vec<Interval> = per_point_cis.iter().map(|p| p.interval).collect();
    Ok(SensitivityInterval {
        lower: intervals
            .iter()
            .map(|i| i.lower)
            .fold(f64::INFINITY, f64::min),
        upper: intervals
            .iter()
            .map(|i| i.upper)
            .fold(f64::NEG_INFINITY, f64::max),
        alpha: options.alpha,
        zone: zone.clone(),
        gaps: union_gaps(&intervals),
        per_point_cis,
        infeasible,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// No `λ₀` reaches this `(τ, λ₁)`.
    Infeasible,
    /// The interval still excluded 0 at the search cap.
    Capped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub tau: f64,
    pub lambda1: f64,
    /// Largest `Δ = δ / sd(R)` whose symmetric zone still excludes 0.
    pub delta_sup: Option<f64>,
    pub status: CellStatus,
}

/// Upper limit of the `Δ` search.
pub const DELTA_CAP: f64 = 1e3;
const DELTA_TOL: f64 = 1e-3;

/// `Δ_sup` per `(τ, λ₁)` cell by bisection on symmetric zones.
pub fn heatmap_grid(
    design: &MatchedDesign,
    cohort: &Cohort,
    tau_grid: &[f64],
    lambda1_grid: &[f64],
    delta_points: usize,
    options: &SensitivityOptions,
) -> Result<Vec<HeatmapCell>> {
    if tau_grid.is_empty() || lambda1_grid.is_empty() {
        return Err(Error::validation("heatmap grids must be nonempty"));
    }
    options.validate()?;
    let residual = standardize_residual(cohort)?;
    let sd_r = stats::sd(&cohort.outcomes());
    if !(sd_r > 0.0) {
        return Err(Error::numerical("outcome has zero standard deviation"));
    }
    let mut cells = Vec::with_capacity(tau_grid.len() * lambda1_grid.len());
    for &tau in tau_grid {
        for &lambda1 in lambda1_grid {
            let kernel = match ZoneKernel::new(design, cohort, &residual, tau, lambda1, options) {
                Ok(k) => k,
                Err(Error::Infeasible(_)) => {
                    cells.push(HeatmapCell {
                        tau,
                        lambda1,
                        delta_sup: None,
                        status: CellStatus::Infeasible,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let excludes = |big_delta: f64| -> Result<bool> {
                let grid = delta_grid(big_delta * sd_r, delta_points)?;
                Ok(kernel
                    .intervals(&grid, options.alpha)?
                    .iter()
                    .all(|(_, iv, _, _)| !iv.contains(0.0)))
            };
            let (value, status) = delta_sup_search(excludes)?;
            cells.push(HeatmapCell {
                tau,
                lambda1,
                delta_sup: Some(value),
                status,
            });
        }
    }
    Ok(cells)
}

fn delta_sup_search(excludes: impl Fn(f64) -> Result<bool>) -> Result<(f64, CellStatus)> {
    if !excludes(0.0)? {
        return Ok((0.0, CellStatus::Ok));
    }
    let (mut lo, mut hi) = (0.0, 0.25);
    while excludes(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > DELTA_CAP {
            return Ok((lo, CellStatus::Capped));
        }
    }
    while hi - lo > DELTA_TOL {
        let mid = 0.5 * (lo + hi);
        if excludes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, CellStatus::Ok))
}

pub fn write_heatmap_csv<W: Write>(cells: &[HeatmapCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "lambda1", "delta_sup", "status"])?;
    for c in cells {
        let status = match c.status {
            CellStatus::Ok => "ok",
            CellStatus::Infeasible => "infeasible",
            CellStatus::Capped => "capped",
        };
        w.write_record([
            c.tau.to_string(),
            c.lambda1.to_string(),
            c.delta_sup.map_or(String::new(), |d| d.to_string()),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = delta_grid(0.5, 21).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[20], 0.5);
        assert!(g[10].abs() < 1e-15);
        assert_eq!(delta_grid(0.0, 21).unwrap(), vec![0.0]);
    }

    #[test]
    fn gaps_between_disjoint_intervals() {
        let iv = |a, b| Interval { lower: a, upper: b };
        let g = union_gaps(&[iv(3.0, 4.0), iv(0.0, 1.0), iv(0.5, 2.0)]);
        assert_eq!(g, vec![iv(2.0, 3.0)]);
    }

    #[test]
    fn bisection_finds_threshold() {
        let (v, s) = delta_sup_search(|d| Ok(d < 0.3141)).unwrap();
        assert_eq!(s, CellStatus::Ok);
        assert!(v <= 0.3141 && 0.3141 - v <= DELTA_TOL);
        assert_eq!(
            delta_sup_search(|_| Ok(true)).unwrap().1,
            CellStatus::Capped
        );
    }
}
