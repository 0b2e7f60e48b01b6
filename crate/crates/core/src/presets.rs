//! Frozen simulation configurations, runnable by name.
//!
//! Every preset is plain data: build it, optionally adjust `reps` and `seed`,
//! serialize it next to the output, and run it.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::{simulate_bias_regime, BiasRegime};
use crate::cohort::Cohort;
use crate::debias::{two_step_debias, DebiasConfig, DebiasOutcome};
use crate::dgp::{
    generate_partially_linear_cohort, ComplianceMix, PartiallyLinearSpec, SemiparametricSpec,
};
use crate::efficiency::{are, required_sample_size, SampleSizeRequest};
use crate::error::{Error, Result};
use crate::inference::TestMethod;
use crate::matching::{DistanceSpec, Encouragement};
use crate::sensitivity::{
    AuditRequest, AuditStratum, NamedDesign, PowerScenario, PowerStudy, SensitivityOptions,
    SigmaMethod,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Table2,
    Table3,
    Table5,
    Table6,
    Audit,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table2" => Ok(Preset::Table2),
            "table3" => Ok(Preset::Table3),
            "table5" => Ok(Preset::Table5),
            "table6" => Ok(Preset::Table6),
            "audit" => Ok(Preset::Audit),
            other => Err(Error::validation(format!(
                "unknown preset '{other}' (expected table2, table3, table5, table6 or audit)"
            ))),
        }
    }
}

/// Weak and strong compliance rates compared in the sample-size table.
pub const STRENGTH_PAIRS: [(f64, f64); 3] = [(0.5, 0.6), (0.4, 0.7), (0.3, 0.8)];

/// How always-takers are set for a given `ι_C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceRule {
    /// `ι_A = 0`
    Zero,
    /// `ι_A = (1 − ι_C)/2`
    HalfRemainder,
}

impl NuisanceRule {
    pub fn iota_a(self, iota_c: f64) -> f64 {
        match self {
            NuisanceRule::Zero => 0.0,
            NuisanceRule::HalfRemainder => (1.0 - iota_c) / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Config {
    pub strength_pairs: Vec<(f64, f64)>,
    pub nuisance: Vec<NuisanceRule>,
    pub powers: Vec<f64>,
    pub effect: f64,
    pub alpha: f64,
    pub test: TestMethod,
    pub reps: usize,
    pub seed: u64,
}

impl Table2Config {
    pub fn preset() -> Self {
        Table2Config {
            strength_pairs: STRENGTH_PAIRS.to_vec(),
            nuisance: vec![NuisanceRule::Zero, NuisanceRule::HalfRemainder],
            powers: vec![0.8],
            effect: 0.1,
            alpha: 0.05,
            test: TestMethod::Wilcoxon,
            reps: 2000,
            seed: 7,
        }
    }

    /// The request for one cell; all cells share the seed so sizes use common random numbers.
    pub fn request(
        &self,
        iota_c: f64,
        rule: NuisanceRule,
        power: f64,
    ) -> Result<SampleSizeRequest> {
        Ok(SampleSizeRequest {
            mix: ComplianceMix::new(iota_c, rule.iota_a(iota_c))?,
            effect: self.effect,
            alpha: self.alpha,
            target_power: power,
            test: self.test,
            reps: self.reps,
            seed: self.seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub power: f64,
    pub nuisance: NuisanceRule,
    pub iota_weak: f64,
    pub iota_strong: f64,
    pub n_weak: usize,
    pub n_strong: usize,
    /// `n_weak / n_strong`
    pub sim: f64,
    pub theo: f64,
}

pub fn run_table2(cfg: &Table2Config) -> Result<Vec<Table2Row>> {
    let mut rows = Vec::new();
    for &power in &cfg.powers {
        for &rule in &cfg.nuisance {
            for &(weak, strong) in &cfg.strength_pairs {
                let rw = cfg.request(weak, rule, power)?;
                let rs = cfg.request(strong, rule, power)?;
                let n_weak = required_sample_size(&rw)?.pairs;
                let n_strong = required_sample_size(&rs)?.pairs;
                rows.push(Table2Row {
                    power,
                    nuisance: rule,
                    iota_weak: weak,
                    iota_strong: strong,
                    n_weak,
                    n_strong,
                    sim: n_weak as f64 / n_strong as f64,
                    theo: are(&rw.mix, &rs.mix, cfg.test)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Matching used for the unstrengthened design of the power table.
pub fn table3_m0() -> DistanceSpec {
    DistanceSpec::default().with_encouragement(Encouragement::HigherDose)
}

/// Half-sample strengthened design of the power table (1000 subjects, 500 sinks).
pub fn table3_m1() -> DistanceSpec {
    DistanceSpec::default()
        .with_caliper(1.4)
        .with_sinks(500)
        .with_encouragement(Encouragement::HigherDose)
}

/// Null scenario used for the size check.
pub fn table3_size_scenario() -> PowerScenario {
    PowerScenario {
        beta: 0.0,
        xi: 1.0,
        delta_sup: 0.0,
        tau: 0.01,
        lambda1: 1.0,
    }
}

pub fn table3_study(scenarios: Vec<PowerScenario>, reps: usize, seed: u64) -> PowerStudy {
    PowerStudy {
        n: 1000,
        scenarios,
        designs: vec![
            NamedDesign {
                name: "M0".into(),
                spec: table3_m0(),
            },
            NamedDesign {
                name: "M1".into(),
                spec: table3_m1(),
            },
        ],
        reps,
        delta_points: 21,
        options: SensitivityOptions {
            sigma: SigmaMethod::Known { sigma: 1.0 },
            seed,
            ..Default::default()
        },
    }
}

/// The full grid: the null scenario, then both power blocks.
pub fn table3_preset(reps: usize, seed: u64) -> PowerStudy {
    let mut scenarios = vec![table3_size_scenario()];
    for xi in [1.0, 1.2] {
        for l1 in [1.0, 1.5, 2.0, 2.5, 3.0] {
            scenarios.push(PowerScenario {
                beta: 0.8,
                xi,
                delta_sup: 0.5,
                tau: 0.01,
                lambda1: l1,
            });
        }
    }
    for xi in [4.0, 5.0] {
        for l1 in [6.0, 9.0, 12.0, 15.0, 18.0] {
            scenarios.push(PowerScenario {
                beta: 4.0,
                xi,
                delta_sup: 10.0,
                tau: 0.01,
                lambda1: l1,
            });
        }
    }
    table3_study(scenarios, reps, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table5Config {
    pub n: usize,
    pub models: Vec<u8>,
    pub designs: Vec<NamedDesign>,
    pub reps: usize,
    pub seed: u64,
}

impl Table5Config {
    pub fn preset() -> Self {
        Table5Config {
            n: 400,
            models: vec![1, 2, 3],
            designs: vec![
                NamedDesign {
                    name: "M0".into(),
                    spec: table3_m0(),
                },
                NamedDesign {
                    name: "M1".into(),
                    spec: DistanceSpec::default()
                        .with_caliper(8.0)
                        .with_sinks(200)
                        .with_encouragement(Encouragement::HigherDose),
                },
            ],
            reps: 2000,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table5Result {
    pub model: u8,
    pub regime: BiasRegime,
}

pub fn run_table5(cfg: &Table5Config) -> Result<Vec<Table5Result>> {
    let designs: Vec<(String, DistanceSpec)> = cfg
        .designs
        .iter()
        .map(|d| (d.name.clone(), d.spec.clone()))
        .collect();
    cfg.models
        .iter()
        .map(|&m| {
            let spec = PartiallyLinearSpec::threshold_model(m, 0.0)?;
            Ok(Table5Result {
                model: m,
                regime: simulate_bias_regime(&spec, cfg.n, &designs, cfg.reps, cfg.seed)?,
            })
        })
        .collect()
}

/// Rows `model, design, compliance, abs_u_diff, abs_bias, delta_ratio`.
pub fn write_table5_csv<W: Write>(results: &[Table5Result], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model",
        "design",
        "compliance",
        "abs_u_diff",
        "abs_bias",
        "delta_ratio",
    ])?;
    for r in results {
        for c in &r.regime.columns {
            w.write_record([
                r.model.to_string(),
                c.design.clone(),
                c.compliance.to_string(),
                c.abs_u_diff.to_string(),
                c.abs_bias.to_string(),
                r.regime.delta_ratio.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table6Config {
    pub n: usize,
    pub seed: u64,
    pub xi: f64,
    pub spec: DistanceSpec,
    pub debias: DebiasConfig,
    /// Caliper of the half-sample comparison design.
    pub sink_caliper: Option<f64>,
}

impl Table6Config {
    pub fn preset() -> Self {
        Table6Config {
            n: 200,
            seed: 11,
            xi: 1.0,
            spec: table3_m0(),
            debias: DebiasConfig {
                time_budget: 30.0,
                ..DebiasConfig::with_k(1.5)
            },
            sink_caliper: Some(1.0),
        }
    }

    pub fn cohort(&self) -> Result<Cohort> {
        generate_partially_linear_cohort(
            &PartiallyLinearSpec::sin_log_sin(0.0, self.xi),
            self.n,
            self.seed,
        )
    }
}

pub fn run_table6(cfg: &Table6Config) -> Result<(Cohort, DebiasOutcome)> {
    let cohort = cfg.cohort()?;
    let out = two_step_debias(&cohort, &cfg.spec, &cfg.debias, cfg.sink_caliper)?;
    Ok((cohort, out))
}

/// Audit runs at `γ = 1` and `γ = 0`.
pub fn audit_preset(reps: usize, seed: u64) -> Vec<AuditRequest> {
    [1.0, 0.0]
        .into_iter()
        .map(|gamma| AuditRequest {
            spec: SemiparametricSpec::normal_base(gamma),
            n: 2400,
            block_size: Some(550),
            distance: DistanceSpec::default(),
            stratum: AuditStratum::default(),
            reps,
            alpha: 0.05,
            seed,
        })
        .collect()
}

/// Rows `power, nuisance, iota_weak, iota_strong, n_weak, n_strong, sim, theo`.
pub fn write_table2_csv<W: Write>(rows: &[Table2Row], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
