//! One function per subcommand: resolve the configuration, run, write outputs.

use nearfar::bias::{bias_ratio, leave_one_out_diagnostic, write_leave_one_out_csv};
use nearfar::cohort::write_cohort;
use nearfar::debias::{two_step_debias, DebiasConfig, PhiTarget, Solver};
use nearfar::density::ErrorDensity;
use nearfar::dgp::{ComplianceMix, DgpKind, DgpSpec, PartiallyLinearSpec};
use nearfar::efficiency::{are, required_sample_size, size_ratio_se, SampleSizeRequest};
use nearfar::inference::{invert_ci, pair_stats, run_test, wald_from_stats, Side, TestMethod};
use nearfar::matching::{balance_report, strengthen, CovariateMetric, DistanceSpec, Encouragement};
use nearfar::presets::{
    audit_preset, run_table2, run_table5, run_table6, table3_m0, table3_m1, table3_preset,
    write_table2_csv, write_table5_csv, Table2Config, Table5Config, Table6Config,
};
use nearfar::sensitivity::{
    gamma_model_audit, heatmap_grid, power_study_with_progress, sensitivity_interval,
    write_heatmap_csv, write_power_csv, AuditRequest, NamedDesign, PowerScenario, PowerStudy,
    SensitivityOptions, SensitivityZone, SigmaMethod,
};
use nearfar::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::{CohortSource, Context, DesignSource};

fn metric(m: MetricArg) -> CovariateMetric {
    match m {
        MetricArg::RankMahalanobis => CovariateMetric::RankMahalanobis,
        MetricArg::Mahalanobis => CovariateMetric::Mahalanobis,
        MetricArg::Euclidean => CovariateMetric::Euclidean,
    }
}

fn encouragement(e: EncouragementArg) -> Encouragement {
    match e {
        EncouragementArg::Lower => Encouragement::LowerDose,
        EncouragementArg::Higher => Encouragement::HigherDose,
    }
}

fn method(m: MethodArg) -> TestMethod {
    match m {
        MethodArg::Wilcoxon => TestMethod::Wilcoxon,
        MethodArg::Sign => TestMethod::Sign,
    }
}

fn density(d: DensityArg) -> ErrorDensity {
    match d {
        DensityArg::Normal => ErrorDensity::standard_normal(),
        DensityArg::Laplace => ErrorDensity::standard_laplace(),
    }
}

fn distance(a: &DistanceArgs, default_sinks: usize) -> DistanceSpec {
    DistanceSpec {
        covariate_metric: metric(a.metric),
        caliper_lambda: a.caliper,
        penalty: a.penalty,
        sinks: a.sinks.unwrap_or(default_sinks),
        forbid_dose_ties: !a.allow_dose_ties,
        encouragement: encouragement(a.encouragement),
    }
}

fn design_source(a: &DesignArgs) -> DesignSource {
    DesignSource {
        design: a.design.clone(),
        distance: distance(&a.distance, 0),
    }
}

fn sigma_method(s: &str) -> Result<SigmaMethod> {
    match s {
        "linear-f" => Ok(SigmaMethod::LinearF),
        "matched-moments" => Ok(SigmaMethod::MatchedMoments),
        _ => s
            .strip_prefix("known:")
            .and_then(|v| v.parse().ok())
            .map(|sigma| SigmaMethod::Known { sigma })
            .ok_or_else(|| {
                Error::validation(format!(
                    "--sigma {s:?}: expected linear-f, matched-moments or known:<value>"
                ))
            }),
    }
}

fn options(a: &SensitivityOptionArgs, seed: u64) -> Result<SensitivityOptions> {
    Ok(SensitivityOptions {
        alpha: a.alpha,
        k: a.k,
        seed,
        sigma: sigma_method(&a.sigma)?,
        ..Default::default()
    })
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let mut cfg: DgpSpec = match ctx.load()? {
        Some(c) => c,
        None => match &a.dgp {
            Some(p) => serde_json::from_str(&crate::config::read(p)?)?,
            None => DgpSpec {
                kind: DgpKind::PartiallyLinear(PartiallyLinearSpec::sin_log_sin(a.beta, a.xi)),
                n: a.n,
                seed: ctx.seed_or(0)?,
            },
        },
    };
    if let Some(s) = ctx.seed_flag {
        cfg.seed = s;
    }
    let cohort = cfg.generate()?;
    write_cohort(&cohort, ctx.create("cohort.csv")?)?;
    ctx.record("generate", Some(cfg.seed), &cfg, &["cohort.csv"])?;
    println!(
        "generate: {} subjects ({}) -> {}",
        cohort.len(),
        cfg.id(),
        ctx.path("cohort.csv").display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct MatchConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub distance: DistanceSpec,
}

/// `match` and `strengthen`; the latter defaults to half the cohort as sinks.
pub fn matching(ctx: &Context, a: &MatchArgs, name: &str, half_sinks: bool) -> Result<()> {
    let (cfg, cohort) = match ctx.load::<MatchConfig>()? {
        Some(c) => {
            let cohort = c.source.load()?;
            (c, cohort)
        }
        None => {
            let source =
                CohortSource::from_args(a.cohort.cohort.as_deref(), a.cohort.schema.as_deref())?;
            let cohort = source.load()?;
            let sinks = if half_sinks { cohort.len() / 2 } else { 0 };
            (
                MatchConfig {
                    source,
                    distance: distance(&a.distance, sinks),
                },
                cohort,
            )
        }
    };
    let design = strengthen(&cohort, &cfg.distance)?;
    design.write_csv(&cohort, ctx.create("design.csv")?)?;
    balance_report(&design, &cohort)?.write_csv(ctx.create("balance.csv")?)?;
    ctx.record(name, None, &cfg, &["design.csv", "balance.csv"])?;
    println!(
        "{name}: {} pairs, {} unmatched, compliance {:.4}, total distance {:.4}",
        design.n_pairs(),
        design.dropped.len(),
        design.compliance_hat.unwrap_or(f64::NAN),
        design.total_distance
    );
    for w in &design.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct EstimateConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub design: DesignSource,
    pub sigma: Option<f64>,
    pub alpha: f64,
    pub method: TestMethod,
}

#[derive(Serialize)]
struct EstimateReport {
    beta_hat: f64,
    compliance_hat: f64,
    sd: Option<f64>,
    n_pairs: usize,
    alpha: f64,
    ci: (f64, f64),
}

pub fn estimate(ctx: &Context, a: &EstimateArgs) -> Result<()> {
    let cfg = match ctx.load()? {
        Some(c) => c,
        None => EstimateConfig {
            source: CohortSource::from_args(
                a.cohort.cohort.as_deref(),
                a.cohort.schema.as_deref(),
            )?,
            design: design_source(&a.design),
            sigma: a.sigma,
            alpha: a.alpha,
            method: method(a.method),
        },
    };
    let cohort = cfg.source.load()?;
    let design = cfg.design.resolve(&cohort)?;
    let stats = pair_stats(&design, &cohort, 0.0)?;
    let wald = wald_from_stats(&stats, cfg.sigma)?;
    let ci = invert_ci(&stats, cfg.method, cfg.alpha, None)?;
    let report = EstimateReport {
        beta_hat: wald.beta_hat,
        compliance_hat: wald.compliance_hat,
        sd: wald.sd,
        n_pairs: wald.n_pairs,
        alpha: cfg.alpha,
        ci,
    };
    ctx.write_json("estimate.json", &report)?;
    ctx.record("estimate", None, &cfg, &["estimate.json"])?;
    println!(
        "estimate: beta_hat {:.4}, {:.0}% CI [{:.4}, {:.4}], compliance {:.4}, {} pairs",
        report.beta_hat,
        100.0 * (1.0 - cfg.alpha),
        ci.0,
        ci.1,
        report.compliance_hat,
        report.n_pairs
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct TestConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub design: DesignSource,
    pub beta0: f64,
    pub method: TestMethod,
    pub side: Side,
}

pub fn test(ctx: &Context, a: &TestArgs) -> Result<()> {
    let cfg = match ctx.load()? {
        Some(c) => c,
        None => TestConfig {
            source: CohortSource::from_args(
                a.cohort.cohort.as_deref(),
                a.cohort.schema.as_deref(),
            )?,
            design: design_source(&a.design),
            beta0: a.beta0,
            method: method(a.method),
            side: match a.side {
                SideArg::Greater => Side::Greater,
                SideArg::Less => Side::Less,
                SideArg::TwoSided => Side::TwoSided,
            },
        },
    };
    let cohort = cfg.source.load()?;
    let design = cfg.design.resolve(&cohort)?;
    let report = run_test(
        &pair_stats(&design, &cohort, cfg.beta0)?,
        cfg.method,
        cfg.side,
    );
    ctx.write_json("test.json", &report)?;
    ctx.record("test", None, &cfg, &["test.json"])?;
    println!(
        "test: statistic {:.4}, p-value {:.6} ({}, {} pairs used)",
        report.statistic,
        report.p_value,
        if report.exact {
            "exact"
        } else {
            "normal approximation"
        },
        report.n_used
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct AreConfig {
    pub mix1: ComplianceMix,
    pub mix2: ComplianceMix,
    pub test: TestMethod,
    /// Zero skips the simulation.
    pub reps: usize,
    pub effect: f64,
    pub alpha: f64,
    pub power: f64,
    pub seed: u64,
}

#[derive(Serialize)]
struct AreReport {
    theo: f64,
    sim: Option<f64>,
    se: Option<f64>,
    reps: usize,
    seed: u64,
}

/// One line of the sample-size comparison table.
#[derive(Serialize)]
struct SizeRow {
    power: f64,
    iota_a_weak: f64,
    iota_a_strong: f64,
    iota_weak: f64,
    iota_strong: f64,
    n_weak: Option<usize>,
    n_strong: Option<usize>,
    sim: Option<f64>,
    se: Option<f64>,
    theo: f64,
}

fn write_rows<T: Serialize>(ctx: &Context, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(ctx.create(name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn are_cmd(ctx: &Context, a: &AreArgs) -> Result<()> {
    let mut cfg = match ctx.load()? {
        Some(c) => c,
        None => {
            let need = |v: Option<f64>, f: &str| {
                v.ok_or_else(|| Error::validation(format!("{f} is required")))
            };
            let d = density(a.density);
            AreConfig {
                mix1: ComplianceMix::new(need(a.iota1, "--iota1")?, a.iota_a1)?
                    .with_density(d.clone()),
                mix2: ComplianceMix::new(need(a.iota2, "--iota2")?, a.iota_a2)?.with_density(d),
                test: method(a.method),
                reps: a.reps,
                effect: a.effect,
                alpha: a.alpha,
                power: a.power,
                seed: ctx.seed_or(0)?,
            }
        }
    };
    if let Some(s) = ctx.seed_flag {
        cfg.seed = s;
    }
    let theo = are(&cfg.mix1, &cfg.mix2, cfg.test)?;
    let (sizes, sim, se) = if cfg.reps > 0 {
        let req = |mix: &ComplianceMix| SampleSizeRequest {
            mix: mix.clone(),
            effect: cfg.effect,
            alpha: cfg.alpha,
            target_power: cfg.power,
            test: cfg.test,
            reps: cfg.reps,
            seed: cfg.seed,
        };
        let n1 = required_sample_size(&req(&cfg.mix1))?.pairs;
        let n2 = required_sample_size(&req(&cfg.mix2))?.pairs;
        (
            Some((n1, n2)),
            Some(n1 as f64 / n2 as f64),
            Some(size_ratio_se(n1, n2, cfg.alpha, cfg.power, cfg.reps)),
        )
    } else {
        (None, None, None)
    };
    let report = AreReport {
        theo,
        sim,
        se,
        reps: cfg.reps,
        seed: cfg.seed,
    };
    let row = SizeRow {
        power: cfg.power,
        iota_a_weak: cfg.mix1.iota_a,
        iota_a_strong: cfg.mix2.iota_a,
        iota_weak: cfg.mix1.iota_c,
        iota_strong: cfg.mix2.iota_c,
        n_weak: sizes.map(|s| s.0),
        n_strong: sizes.map(|s| s.1),
        sim,
        se,
        theo,
    };
    ctx.write_json("are.json", &report)?;
    write_rows(ctx, "are.csv", &[row])?;
    ctx.record("are", Some(cfg.seed), &cfg, &["are.json", "are.csv"])?;
    match (sim, se) {
        (Some(s), Some(e)) => {
            println!("{theo:.2} (simulated {s:.3} +/- {e:.3}, {} reps)", cfg.reps)
        }
        _ => println!("{theo:.2}"),
    }
    Ok(())
}

/// One evaluated size from the power search.
#[derive(Serialize)]
struct SizePoint {
    power_target: f64,
    iota_c: f64,
    iota_a: f64,
    pairs: usize,
    power: f64,
    se: f64,
    chosen: bool,
}

pub fn samplesize(ctx: &Context, a: &SampleSizeArgs) -> Result<()> {
    let mut cfg: SampleSizeRequest = match ctx.load()? {
        Some(c) => c,
        None => SampleSizeRequest {
            mix: ComplianceMix::new(
                a.iota_c
                    .ok_or_else(|| Error::validation("--iota-c is required"))?,
                a.iota_a,
            )?
            .with_density(density(a.density)),
            effect: a.effect,
            alpha: a.alpha,
            target_power: a.power,
            test: method(a.method),
            reps: a.reps,
            seed: ctx.seed_or(0)?,
        },
    };
    if let Some(s) = ctx.seed_flag {
        cfg.seed = s;
    }
    let report = required_sample_size(&cfg)?;
    let rows: Vec<_> = report
        .evaluations
        .iter()
        .map(|p| SizePoint {
            power_target: cfg.target_power,
            iota_c: cfg.mix.iota_c,
            iota_a: cfg.mix.iota_a,
            pairs: p.pairs,
            power: p.power,
            se: p.se,
            chosen: p.pairs == report.pairs,
        })
        .collect();
    ctx.write_json("samplesize.json", &report)?;
    write_rows(ctx, "samplesize.csv", &rows)?;
    ctx.record(
        "samplesize",
        Some(cfg.seed),
        &cfg,
        &["samplesize.json", "samplesize.csv"],
    )?;
    println!(
        "samplesize: {} pairs (power {:.4} +/- {:.4}, {} reps)",
        report.pairs, report.power, report.se, report.reps
    );
    if report.non_monotone {
        eprintln!("warning: estimated power was not monotone in the number of pairs");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct TwoDesignConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub design0: DistanceSpec,
    pub design1: DistanceSpec,
}

fn two_design_config(
    ctx: &Context,
    a: &TwoDesignArgs,
) -> Result<(TwoDesignConfig, nearfar::cohort::Cohort)> {
    if let Some(c) = ctx.load::<TwoDesignConfig>()? {
        let cohort = c.source.load()?;
        return Ok((c, cohort));
    }
    let source = CohortSource::from_args(a.cohort.cohort.as_deref(), a.cohort.schema.as_deref())?;
    let cohort = source.load()?;
    let enc = encouragement(a.encouragement);
    let cfg = TwoDesignConfig {
        source,
        design0: DistanceSpec::default().with_encouragement(enc),
        design1: DistanceSpec::default()
            .with_caliper(a.caliper1)
            .with_sinks(a.sinks1.unwrap_or(cohort.len() / 2))
            .with_encouragement(enc),
    };
    Ok((cfg, cohort))
}

#[derive(Serialize)]
struct BiasReport {
    compliance0: f64,
    compliance1: f64,
    n_pairs0: usize,
    n_pairs1: usize,
    #[serde(flatten)]
    ratio: nearfar::bias::BiasRatio,
}

pub fn bias(ctx: &Context, a: &TwoDesignArgs) -> Result<()> {
    let (cfg, cohort) = two_design_config(ctx, a)?;
    let u = cohort.latent_u().ok_or_else(|| {
        Error::validation("the cohort has no latent u column; use leaveoneout for observed data")
    })?;
    let d0 = strengthen(&cohort, &cfg.design0)?;
    let d1 = strengthen(&cohort, &cfg.design1)?;
    let report = BiasReport {
        compliance0: d0.compute_compliance(&cohort)?,
        compliance1: d1.compute_compliance(&cohort)?,
        n_pairs0: d0.n_pairs(),
        n_pairs1: d1.n_pairs(),
        ratio: bias_ratio(&d0, &d1, &cohort, &u)?,
    };
    ctx.write_json("bias.json", &report)?;
    ctx.record("bias", None, &cfg, &["bias.json"])?;
    println!(
        "bias: Delta {:.4} (compliance {:.4} -> {:.4})",
        report.ratio.delta_ratio, report.compliance0, report.compliance1
    );
    Ok(())
}

pub fn leaveoneout(ctx: &Context, a: &TwoDesignArgs) -> Result<()> {
    let (cfg, cohort) = two_design_config(ctx, a)?;
    let rows = leave_one_out_diagnostic(&cohort, &cfg.design0, &cfg.design1)?;
    write_leave_one_out_csv(&rows, ctx.create("leaveoneout.csv")?)?;
    ctx.record("leaveoneout", None, &cfg, &["leaveoneout.csv"])?;
    let worst = rows
        .iter()
        .map(|r| r.delta_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "leaveoneout: {} covariates, largest Delta {:.4}",
        rows.len(),
        worst
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct SensitivityConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub design: DesignSource,
    pub zone: SensitivityZone,
    pub options: SensitivityOptions,
}

pub fn sensitivity(ctx: &Context, a: &SensitivityArgs) -> Result<()> {
    let mut cfg = match ctx.load()? {
        Some(c) => c,
        None => SensitivityConfig {
            source: CohortSource::from_args(
                a.cohort.cohort.as_deref(),
                a.cohort.schema.as_deref(),
            )?,
            design: design_source(&a.design),
            zone: match &a.zone {
                Some(p) => serde_json::from_str(&crate::config::read(p)?)?,
                None => SensitivityZone::symmetric(a.delta_sup, a.points, a.tau, a.lambda1)?,
            },
            options: options(&a.options, ctx.seed_or(0)?)?,
        },
    };
    if let Some(s) = ctx.seed_flag {
        cfg.options.seed = s;
    }
    let cohort = cfg.source.load()?;
    let design = cfg.design.resolve(&cohort)?;
    let si = sensitivity_interval(&design, &cohort, &cfg.zone, &cfg.options)?;
    ctx.write_json("sensitivity.json", &si)?;
    si.write_points_csv(ctx.create("sensitivity_points.csv")?)?;
    ctx.record(
        "sensitivity",
        Some(cfg.options.seed),
        &cfg,
        &["sensitivity.json", "sensitivity_points.csv"],
    )?;
    println!(
        "sensitivity: [{:.4}, {:.4}], {} zero, {} infeasible points",
        si.lower,
        si.upper,
        if si.covers(0.0) { "covers" } else { "excludes" },
        si.infeasible.len()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct HeatmapConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub design: DesignSource,
    pub tau_grid: Vec<f64>,
    pub lambda1_grid: Vec<f64>,
    pub delta_points: usize,
    pub options: SensitivityOptions,
}

pub fn heatmap(ctx: &Context, a: &HeatmapArgs) -> Result<()> {
    let mut cfg = match ctx.load()? {
        Some(c) => c,
        None => HeatmapConfig {
            source: CohortSource::from_args(
                a.cohort.cohort.as_deref(),
                a.cohort.schema.as_deref(),
            )?,
            design: design_source(&a.design),
            tau_grid: a.tau.clone(),
            lambda1_grid: a.lambda1.clone(),
            delta_points: a.points,
            options: options(&a.options, ctx.seed_or(0)?)?,
        },
    };
    if let Some(s) = ctx.seed_flag {
        cfg.options.seed = s;
    }
    let cohort = cfg.source.load()?;
    let design = cfg.design.resolve(&cohort)?;
    let cells = heatmap_grid(
        &design,
        &cohort,
        &cfg.tau_grid,
        &cfg.lambda1_grid,
        cfg.delta_points,
        &cfg.options,
    )?;
    write_heatmap_csv(&cells, ctx.create("heatmap.csv")?)?;
    ctx.record("heatmap", Some(cfg.options.seed), &cfg, &["heatmap.csv"])?;
    let ok = cells.iter().filter(|c| c.delta_sup.is_some()).count();
    println!(
        "heatmap: {} cells, {} with a finite Delta_sup",
        cells.len(),
        ok
    );
    Ok(())
}

fn run_power(ctx: &Context, study: &PowerStudy, file: &str) -> Result<usize> {
    let total = study.reps;
    let rows = power_study_with_progress(study, |r| {
        if (r + 1) % 50 == 0 || r + 1 == total {
            eprintln!("power: replication {}/{}", r + 1, total);
        }
    })?;
    write_power_csv(&rows, ctx.create(file)?)?;
    Ok(rows.len())
}

pub fn power(ctx: &Context, a: &PowerArgs) -> Result<()> {
    let mut study = match ctx.load()? {
        Some(c) => c,
        None => {
            let mut scenarios = Vec::new();
            for &xi in &a.xi {
                for &lambda1 in &a.lambda1 {
                    scenarios.push(PowerScenario {
                        beta: a.beta,
                        xi,
                        delta_sup: a.delta_sup,
                        tau: a.tau,
                        lambda1,
                    });
                }
            }
            PowerStudy {
                n: a.n,
                scenarios,
                designs: vec![
                    NamedDesign {
                        name: "M0".into(),
                        spec: table3_m0(),
                    },
                    NamedDesign {
                        name: "M1".into(),
                        spec: table3_m1().with_sinks(a.n / 2),
                    },
                ],
                reps: a.reps,
                delta_points: a.points,
                options: SensitivityOptions {
                    k: a.k,
                    seed: ctx.seed_or(0)?,
                    sigma: SigmaMethod::Known { sigma: 1.0 },
                    ..Default::default()
                },
            }
        }
    };
    if let Some(s) = ctx.seed_flag {
        study.options.seed = s;
    }
    let rows = run_power(ctx, &study, "power.csv")?;
    ctx.record("power", Some(study.options.seed), &study, &["power.csv"])?;
    println!(
        "power: {rows} rows, {} replications -> {}",
        study.reps,
        ctx.path("power.csv").display()
    );
    Ok(())
}

pub fn audit(ctx: &Context, a: &AuditArgs) -> Result<()> {
    let mut req: AuditRequest = match ctx.load()? {
        Some(c) => c,
        None => {
            let mut r = audit_preset(a.reps, ctx.seed_or(0)?).remove(0);
            r.spec = nearfar::dgp::SemiparametricSpec::normal_base(a.gamma);
            r.n = a.n;
            r.block_size = (a.block > 0).then_some(a.block);
            r.alpha = a.alpha;
            r
        }
    };
    if let Some(s) = ctx.seed_flag {
        req.seed = s;
    }
    let report = gamma_model_audit(&req)?;
    ctx.write_json("audit.json", &report)?;
    ctx.record("audit", Some(req.seed), &req, &["audit.json"])?;
    println!(
        "audit: gamma {}, rejection rate {:.4} over {} runs, median p {:.4}",
        report.gamma, report.rejection_rate, report.reps, report.median_p_value
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct DebiasCommandConfig {
    #[serde(flatten)]
    pub source: CohortSource,
    pub distance: DistanceSpec,
    pub debias: DebiasConfig,
    pub sink_caliper: Option<f64>,
}

fn write_debias(
    ctx: &Context,
    prefix: &str,
    cohort: &nearfar::cohort::Cohort,
    out: &nearfar::debias::DebiasOutcome,
) -> Result<()> {
    out.stage_two
        .write_csv(cohort, ctx.create(&format!("{prefix}_design.csv"))?)?;
    out.comparison
        .write_csv(ctx.create(&format!("{prefix}.csv"))?)?;
    ctx.write_json(&format!("{prefix}.json"), out)
}

fn debias_summary(name: &str, out: &nearfar::debias::DebiasOutcome) {
    println!(
        "{name}: {} -> {} pairs, compliance {:.4} -> {:.4}, phi {:.4}, {} ({} violations)",
        out.stage_one.n_pairs(),
        out.stage_two.n_pairs(),
        out.stage_one.compliance_hat.unwrap_or(f64::NAN),
        out.stage_two.compliance_hat.unwrap_or(f64::NAN),
        out.phi,
        if out.solution.optimal {
            "optimal"
        } else {
            "best found"
        },
        out.violations.len()
    );
}

pub fn debias(ctx: &Context, a: &DebiasArgs) -> Result<()> {
    let cfg = match ctx.load()? {
        Some(c) => c,
        None => DebiasCommandConfig {
            source: CohortSource::from_args(
                a.cohort.cohort.as_deref(),
                a.cohort.schema.as_deref(),
            )?,
            distance: distance(&a.distance, 0),
            debias: DebiasConfig {
                target: match (a.phi, a.k) {
                    (Some(phi), _) => PhiTarget::Phi(phi),
                    (None, Some(k)) => PhiTarget::K(k),
                    (None, None) => PhiTarget::K(1.5),
                },
                solver: match a.solver {
                    SolverArg::Auto => Solver::Auto,
                    SolverArg::Exact => Solver::ExactBnb,
                    SolverArg::Local => Solver::LocalSearch,
                },
                time_budget: a.budget,
                min_pairs: a.min_pairs,
            },
            sink_caliper: a.sink_caliper,
        },
    };
    let cohort = cfg.source.load()?;
    let out = two_step_debias(&cohort, &cfg.distance, &cfg.debias, cfg.sink_caliper)?;
    write_debias(ctx, "debias", &cohort, &out)?;
    ctx.record(
        "debias",
        None,
        &cfg,
        &["debias.csv", "debias_design.csv", "debias.json"],
    )?;
    debias_summary("debias", &out);
    if !out.violations.is_empty() {
        return Err(Error::numerical(format!(
            "the final design violates {} constraints",
            out.violations.len()
        )));
    }
    Ok(())
}

/// A preset with its resolved parameters.
#[derive(Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum SimulateConfig {
    Table2(Table2Config),
    Table3(PowerStudy),
    Table5(Table5Config),
    Table6(Table6Config),
    Audit { requests: Vec<AuditRequest> },
}

impl SimulateConfig {
    fn preset(
        p: PresetArg,
        reps: Option<usize>,
        seed: impl Fn(u64) -> Result<u64>,
    ) -> Result<Self> {
        Ok(match p {
            PresetArg::Table2 => {
                let mut c = Table2Config::preset();
                c.reps = reps.unwrap_or(c.reps);
                c.seed = seed(c.seed)?;
                SimulateConfig::Table2(c)
            }
            PresetArg::Table3 => {
                SimulateConfig::Table3(table3_preset(reps.unwrap_or(1000), seed(7)?))
            }
            PresetArg::Table5 => {
                let mut c = Table5Config::preset();
                c.reps = reps.unwrap_or(c.reps);
                c.seed = seed(c.seed)?;
                SimulateConfig::Table5(c)
            }
            PresetArg::Table6 => {
                let mut c = Table6Config::preset();
                c.seed = seed(c.seed)?;
                SimulateConfig::Table6(c)
            }
            PresetArg::Audit => SimulateConfig::Audit {
                requests: audit_preset(reps.unwrap_or(200), seed(3)?),
            },
        })
    }

    fn name(&self) -> &'static str {
        match self {
            SimulateConfig::Table2(_) => "table2",
            SimulateConfig::Table3(_) => "table3",
            SimulateConfig::Table5(_) => "table5",
            SimulateConfig::Table6(_) => "table6",
            SimulateConfig::Audit { .. } => "audit",
        }
    }

    fn seed(&self) -> u64 {
        match self {
            SimulateConfig::Table2(c) => c.seed,
            SimulateConfig::Table3(s) => s.options.seed,
            SimulateConfig::Table5(c) => c.seed,
            SimulateConfig::Table6(c) => c.seed,
            SimulateConfig::Audit { requests } => requests.first().map_or(0, |r| r.seed),
        }
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            SimulateConfig::Table2(c) => c.seed = seed,
            SimulateConfig::Table3(s) => s.options.seed = seed,
            SimulateConfig::Table5(c) => c.seed = seed,
            SimulateConfig::Table6(c) => c.seed = seed,
            SimulateConfig::Audit { requests } => requests.iter_mut().for_each(|r| r.seed = seed),
        }
    }
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let mut cfg = match ctx.load::<SimulateConfig>()? {
        Some(c) => c,
        None => SimulateConfig::preset(a.preset, a.reps, |d| ctx.seed_or(d))?,
    };
    let wanted = SimulateConfig::preset(a.preset, Some(1), Ok)?.name();
    if cfg.name() != wanted {
        return Err(Error::validation(format!(
            "--config holds preset {} but {wanted} was requested",
            cfg.name()
        )));
    }
    if let Some(s) = ctx.seed_flag {
        cfg.set_seed(s);
    }
    let name = cfg.name();
    let outputs: Vec<String> = match &cfg {
        SimulateConfig::Table2(c) => {
            let rows = run_table2(c)?;
            write_table2_csv(&rows, ctx.create("table2.csv")?)?;
            println!(
                "simulate table2: {} rows, {} reps -> {}",
                rows.len(),
                c.reps,
                ctx.path("table2.csv").display()
            );
            vec!["table2.csv".into()]
        }
        SimulateConfig::Table3(study) => {
            let rows = run_power(ctx, study, "table3.csv")?;
            println!(
                "simulate table3: {rows} rows, {} reps -> {}",
                study.reps,
                ctx.path("table3.csv").display()
            );
            vec!["table3.csv".into()]
        }
        SimulateConfig::Table5(c) => {
            let results = run_table5(c)?;
            write_table5_csv(&results, ctx.create("table5.csv")?)?;
            let deltas: Vec<String> = results
                .iter()
                .map(|r| format!("{:.3}", r.regime.delta_ratio))
                .collect();
            println!(
                "simulate table5: Delta by model [{}] -> {}",
                deltas.join(", "),
                ctx.path("table5.csv").display()
            );
            vec!["table5.csv".into()]
        }
        SimulateConfig::Table6(c) => {
            let (cohort, out) = run_table6(c)?;
            write_debias(ctx, "table6", &cohort, &out)?;
            debias_summary("simulate table6", &out);
            vec![
                "table6.csv".into(),
                "table6_design.csv".into(),
                "table6.json".into(),
            ]
        }
        SimulateConfig::Audit { requests } => {
            let reports = requests
                .iter()
                .map(gamma_model_audit)
                .collect::<Result<Vec<_>>>()?;
            ctx.write_json("audit.json", &reports)?;
            let rates: Vec<String> = reports
                .iter()
                .map(|r| format!("gamma {} -> {:.3}", r.gamma, r.rejection_rate))
                .collect();
            println!("simulate audit: rejection rates {}", rates.join(", "));
            vec!["audit.json".into()]
        }
    };
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.record(&format!("simulate_{name}"), Some(cfg.seed()), &cfg, &refs)
}
