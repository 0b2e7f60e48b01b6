//! Monte-Carlo power of the sensitivity analysis in a favorable situation.

use serde::{Deserialize, Serialize};

use super::interval::{delta_grid, SensitivityOptions, SensitivityZone, ZoneKernel};
use super::model::{standardize_residual, StandardizedResidual};
use crate::cohort::Cohort;
use crate::dgp::{generate_partially_linear_cohort, DgpSpec, PartiallyLinearSpec};
use crate::error::{Error, Result};
use crate::matching::{strengthen, DistanceSpec, MatchedDesign};
use crate::rng::child_seed;

/// A named matching design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedDesign {
    pub name: String,
    pub spec: DistanceSpec,
}

/// One row of a power table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub design: String,
    pub beta: Option<f64>,
    pub xi: Option<f64>,
    pub delta_sup: f64,
    pub tau: f64,
    pub lambda1: f64,
    /// Share of replications whose interval excluded 0.
    pub power: f64,
    /// Mean of `δ_max · K⁻¹ Σ_k Σ(U_e − U_c)/Σ S`.
    pub mean_bias: f64,
    /// Mean `σ̂_total` at `δ_max`.
    pub mean_sd: f64,
    pub compliance: f64,
    pub reps: usize,
    /// Replications skipped because the point was infeasible.
    pub skipped: usize,
}

#[derive(Default, Clone)]
struct Tally {
    rejections: usize,
    bias: f64,
    sd: f64,
    compliance: f64,
    used: usize,
    skipped: usize,
}

impl Tally {
    fn add(&mut self, r: Option<RepOutcome>) {
        match r {
            Some(r) => {
                self.rejections += usize::from(r.reject);
                self.bias += r.bias;
                self.sd += r.sd;
                self.compliance += r.compliance;
                self.used += 1;
            }
            None => self.skipped += 1,
        }
    }

    fn row(
        &self,
        design: &str,
        beta: Option<f64>,
        xi: Option<f64>,
        delta_sup: f64,
        tau: f64,
        lambda1: f64,
    ) -> PowerRow {
        let u = self.used.max(1) as f64;
        PowerRow {
            design: design.to_string(),
            beta,
            xi,
            delta_sup,
            tau,
            lambda1,
            power: self.rejections as f64 / u,
            mean_bias: self.bias / u,
            mean_sd: self.sd / u,
            compliance: self.compliance / u,
            reps: self.used,
            skipped: self.skipped,
        }
    }
}

struct RepOutcome {
    reject: bool,
    bias: f64,
    sd: f64,
    compliance: f64,
}

/// Sensitivity analysis of one replication at one `(τ, λ₁)`; `None` if infeasible.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    design: &MatchedDesign,
    cohort: &Cohort,
    residual: &StandardizedResidual,
    deltas: &[f64],
    tau: f64,
    lambda1: f64,
    options: &SensitivityOptions,
) -> Result<Option<RepOutcome>> {
    let kernel = match ZoneKernel::new(design, cohort, residual, tau, lambda1, options) {
        Ok(k) => k,
        Err(Error::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let ivs = kernel.intervals(deltas, options.alpha)?;
    let reject = ivs.iter().all(|(_, iv, _, _)| !iv.contains(0.0));
    let (d_max, _, at_max, _) = ivs
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty delta set");
    let mean_b = kernel.bias_factors.iter().sum::<f64>() / kernel.bias_factors.len() as f64;
    Ok(Some(RepOutcome {
        reject,
        bias: d_max * mean_b,
        sd: at_max.total_var.sqrt(),
        compliance: kernel.compliance(),
    }))
}

/// Power of each design over `reps` draws of `dgp`; one row per design and `(τ, λ₁)`.
///
/// Replication `r` uses cohort seed `child_seed(dgp.seed, r)`.
pub fn sensitivity_power(
    dgp: &DgpSpec,
    designs: &[NamedDesign],
    zone: &SensitivityZone,
    options: &SensitivityOptions,
    reps: usize,
) -> Result<Vec<PowerRow>> {
    zone.validate()?;
    if reps == 0 || designs.is_empty() {
        return Err(Error::validation(
            "need at least one replication and one design",
        ));
    }
    let points: Vec<(f64, f64)> = zone
        .tau_set
        .iter()
        .flat_map(|&t| zone.lambda1_set.iter().map(move |&l| (t, l)))
        .collect();
    let mut tallies = vec![Tally::default(); designs.len() * points.len()];
    for r in 0..reps {
        let mut spec = dgp.clone();
        spec.seed = child_seed(dgp.seed, r as u64);
        let cohort = spec.generate()?;
        let residual = standardize_residual(&cohort)?;
        let opts = SensitivityOptions {
            seed: child_seed(spec.seed, u64::MAX),
            ..*options
        };
        for (di, d) in designs.iter().enumerate() {
            let design = strengthen(&cohort, &d.spec)?;
            for (pi, &(tau, l1)) in points.iter().enumerate() {
                let out = evaluate(&design, &cohort, &residual, &zone.delta_set, tau, l1, &opts)?;
                tallies[di * points.len() + pi].add(out);
            }
        }
    }
    let delta_sup = zone.delta_set.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let mut rows = Vec::with_capacity(tallies.len());
    for (di, d) in designs.iter().enumerate() {
        for (pi, &(tau, l1)) in points.iter().enumerate() {
            rows.push(tallies[di * points.len() + pi].row(&d.name, None, None, delta_sup, tau, l1));
        }
    }
    Ok(rows)
}

/// One cell of a multi-scenario power study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerScenario {
    pub beta: f64,
    pub xi: f64,
    pub delta_sup: f64,
    pub tau: f64,
    pub lambda1: f64,
}

/// Power study on the logistic-treatment partially linear model.
///
/// Covariates and doses do not depend on `(β, ξ)`, so every scenario of a
/// replication reuses one matching per design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerStudy {
    pub n: usize,
    pub scenarios: Vec<PowerScenario>,
    pub designs: Vec<NamedDesign>,
    pub reps: usize,
    /// Points in the discretized `[−δ_sup, δ_sup]`.
    pub delta_points: usize,
    pub options: SensitivityOptions,
}

pub fn power_study(study: &PowerStudy) -> Result<Vec<PowerRow>> {
    power_study_with_progress(study, |_| {})
}

/// As [`power_study`], calling `progress(r)` after replication `r`.
pub fn power_study_with_progress(
    study: &PowerStudy,
    mut progress: impl FnMut(usize),
) -> Result<Vec<PowerRow>> {
    if study.reps == 0 || study.designs.is_empty() || study.scenarios.is_empty() {
        return Err(Error::validation(
            "need replications, designs and scenarios",
        ));
    }
    let grids: Vec<Vec<f64>> = study
        .scenarios
        .iter()
        .map(|s| delta_grid(s.delta_sup, study.delta_points))
        .collect::<Result<_>>()?;
    let ns = study.scenarios.len();
    let mut tallies = vec![Tally::default(); study.designs.len() * ns];
    for r in 0..study.reps {
        let seed = child_seed(study.options.seed, r as u64);
        let opts = SensitivityOptions {
            seed: child_seed(seed, u64::MAX),
            ..study.options
        };
        let base = generate_partially_linear_cohort(
            &PartiallyLinearSpec::sin_log_sin(0.0, 1.0),
            study.n,
            seed,
        )?;
        let residual = standardize_residual(&base)?;
        let designs: Vec<MatchedDesign> = study
            .designs
            .iter()
            .map(|d| strengthen(&base, &d.spec))
            .collect::<Result<_>>()?;
        for (si, s) in study.scenarios.iter().enumerate() {
            let cohort = generate_partially_linear_cohort(
                &PartiallyLinearSpec::sin_log_sin(s.beta, s.xi),
                study.n,
                seed,
            )?;
            debug_assert!(cohort.doses() == base.doses());
            for (di, design) in designs.iter().enumerate() {
                let out = evaluate(
                    design, &cohort, &residual, &grids[si], s.tau, s.lambda1, &opts,
                )?;
                tallies[di * ns + si].add(out);
            }
        }
        progress(r);
    }
    let mut rows = Vec::with_capacity(tallies.len());
    for (si, s) in study.scenarios.iter().enumerate() {
        for (di, d) in study.designs.iter().enumerate() {
            rows.push(tallies[di * ns + si].row(
                &d.name,
                Some(s.beta),
                Some(s.xi),
                s.delta_sup,
                s.tau,
                s.lambda1,
            ));
        }
    }
    Ok(rows)
}

pub fn write_power_csv<W: std::io::Write>(rows: &[PowerRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "xi",
        "lambda1",
        "design",
        "power",
        "bias",
        "sd",
        "beta",
        "delta_sup",
        "tau",
        "compliance",
        "reps",
        "skipped",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            opt(r.xi),
            r.lambda1.to_string(),
            r.design.clone(),
            r.power.to_string(),
            r.mean_bias.to_string(),
            r.mean_sd.to_string(),
            opt(r.beta),
            r.delta_sup.to_string(),
            r.tau.to_string(),
            r.compliance.to_string(),
            r.reps.to_string(),
            r.skipped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
