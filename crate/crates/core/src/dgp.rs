//! Seeded synthetic data generators.
//!
//! Every generator is a pure function of its spec and seed. Subject `i` draws
//! from its own stream `rng::stream(seed, i)`, so a subject's latent draws do
//! not depend on the cohort size.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, LatentClass, Provenance, Subject};
use crate::density::ErrorDensity;
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::{self, Rng};

/// Compliance-class proportions, class-specific control means and error law.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplianceMix {
    pub iota_c: f64,
    pub iota_a: f64,
    pub iota_n: f64,
    #[serde(default)]
    pub mu_c: f64,
    #[serde(default)]
    pub mu_a: f64,
    #[serde(default)]
    pub mu_n: f64,
    #[serde(default = "ErrorDensity::standard_normal")]
    pub error_density: ErrorDensity,
}

impl ComplianceMix {
    /// Equal class means, standard normal error, always-takers and
    /// never-takers splitting the non-compliers as given.
    pub fn new(iota_c: f64, iota_a: f64) -> Result<Self> {
        let mix = ComplianceMix {
            iota_c,
            iota_a,
            iota_n: 1.0 - iota_c - iota_a,
            mu_c: 0.0,
            mu_a: 0.0,
            mu_n: 0.0,
            error_density: ErrorDensity::standard_normal(),
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn with_means(mut self, mu_c: f64, mu_a: f64, mu_n: f64) -> Self {
        self.mu_c = mu_c;
        self.mu_a = mu_a;
        self.mu_n = mu_n;
        self
    }

    pub fn with_density(mut self, density: ErrorDensity) -> Self {
        self.error_density = density;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let iotas = [self.iota_c, self.iota_a, self.iota_n];
        if iotas.iter().any(|v| !(*v >= 0.0) || *v > 1.0) {
            return Err(Error::validation(
                "compliance proportions must lie in [0, 1]",
            ));
        }
        if (iotas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::validation("compliance proportions must sum to 1"));
        }
        if self.iota_c <= 0.0 {
            return Err(Error::validation("compliance rate must be positive"));
        }
        if ![self.mu_c, self.mu_a, self.mu_n]
            .iter()
            .all(|m| m.is_finite())
        {
            return Err(Error::validation("class means must be finite"));
        }
        self.error_density.validate()
    }

    pub fn mean(&self, class: LatentClass) -> f64 {
        match class {
            LatentClass::Complier => self.mu_c,
            LatentClass::AlwaysTaker => self.mu_a,
            LatentClass::NeverTaker => self.mu_n,
        }
    }

    /// Draws a class from one uniform variate.
    pub fn class_from_uniform(&self, u: f64) -> LatentClass {
        if u < self.iota_c {
            LatentClass::Complier
        } else if u < self.iota_c + self.iota_a {
            LatentClass::AlwaysTaker
        } else {
            LatentClass::NeverTaker
        }
    }
}

/// Outcome function `f(X)` of the partially linear model.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum OutcomeForm {
    /// `0.2 X1 + 0.5 log|X2| + 0.3 sin X3` on three standard normal covariates.
    SinLogSin,
    /// `sin X1 + X2^3` on two standard normal covariates.
    SinCubic,
    /// `Σ γ_j X_j` on standard normal covariates.
    Linear { coefficients: Vec<f64> },
}

impl OutcomeForm {
    pub fn p(&self) -> usize {
        match self {
            OutcomeForm::SinLogSin => 3,
            OutcomeForm::SinCubic => 2,
            OutcomeForm::Linear { coefficients } => coefficients.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            OutcomeForm::SinLogSin => 0.2 * x[0] + 0.5 * x[1].abs().ln() + 0.3 * x[2].sin(),
            OutcomeForm::SinCubic => x[0].sin() + x[1].powi(3),
            OutcomeForm::Linear { coefficients } => {
                coefficients.iter().zip(x).map(|(g, v)| g * v).sum()
            }
        }
    }
}

/// Treatment assignment given dose and covariates.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TreatmentRule {
    /// `D ~ Bern(logistic(ξ Z̃))`, independent of the outcome error.
    Logistic { xi: f64 },
    /// `D = 1{c1 Z̃³ + c2 Z̃ + Σ a_j X_j + ε2 > c3}` with `corr(ε1, ε2) = rho`.
    Threshold {
        c1: f64,
        c2: f64,
        c3: f64,
        x_coefficients: Vec<f64>,
        rho: f64,
    },
}

/// Shape of `E[U | Z̃]` for an additive confounder.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ConfounderShape {
    /// `z`
    Identity,
    /// `1 / (z − 1)`
    ReciprocalShift,
    /// `exp(z)`
    Exp,
}

impl ConfounderShape {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            ConfounderShape::Identity => z,
            ConfounderShape::ReciprocalShift => 1.0 / (z - 1.0),
            ConfounderShape::Exp => z.exp(),
        }
    }
}

/// Law of the unmeasured confounder `U_tot`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Confounder {
    /// `U = 0` for everyone.
    None,
    /// `U = g(Z̃) + N(0, noise_sd²)`.
    Additive {
        shape: ConfounderShape,
        noise_sd: f64,
    },
    /// `U ~ Bern(logistic(λ0 + λ1 Z̃_std))` with `Z̃_std` the dose standardized
    /// by its population mean and sd.
    Logistic { lambda0: f64, lambda1: f64 },
}

/// Parameters of the partially linear outcome model.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PartiallyLinearSpec {
    pub outcome: OutcomeForm,
    pub beta: f64,
    pub delta: f64,
    pub treatment: TreatmentRule,
    pub confounder: Confounder,
    pub dose_mean: f64,
    pub dose_sd: f64,
    #[serde(default = "one")]
    pub error_sd: f64,
}

fn one() -> f64 {
    1.0
}

impl PartiallyLinearSpec {
    /// Three-covariate model with logistic treatment in the dose; no confounding.
    pub fn sin_log_sin(beta: f64, xi: f64) -> Self {
        PartiallyLinearSpec {
            outcome: OutcomeForm::SinLogSin,
            beta,
            delta: 0.0,
            treatment: TreatmentRule::Logistic { xi },
            confounder: Confounder::None,
            dose_mean: 0.0,
            dose_sd: 1.0,
            error_sd: 1.0,
        }
    }

    /// The three confounded threshold-treatment models (`model` in 1..=3).
    pub fn threshold_model(model: u8, beta: f64) -> Result<Self> {
        let (delta, c1, c3, shape, mean, sd) = match model {
            1 => (1.0, 0.0, 0.0, ConfounderShape::Identity, 0.0, 1.0),
            2 => (1.0, 1.0, 4.0, ConfounderShape::ReciprocalShift, 1.0, 5.0),
            3 => (1e-6, 1.0, 4.0, ConfounderShape::Exp, 1.0, 5.0),
            m => return Err(Error::validation(format!("unknown threshold model {m}"))),
        };
        Ok(PartiallyLinearSpec {
            outcome: OutcomeForm::SinCubic,
            beta,
            delta,
            treatment: TreatmentRule::Threshold {
                c1,
                c2: 1.0,
                c3,
                x_coefficients: vec![0.2, 0.4],
                rho: 0.5,
            },
            confounder: Confounder::Additive {
                shape,
                noise_sd: 1.0,
            },
            dose_mean: mean,
            dose_sd: sd,
            error_sd: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.beta,
            self.delta,
            self.dose_mean,
            self.dose_sd,
            self.error_sd,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.dose_sd <= 0.0 || self.error_sd < 0.0 {
            return Err(Error::validation(
                "partially linear spec has invalid scalars",
            ));
        }
        if let TreatmentRule::Threshold {
            x_coefficients,
            rho,
            ..
        } = &self.treatment
        {
            if x_coefficients.len() > self.outcome.p() {
                return Err(Error::validation(
                    "more treatment coefficients than covariates",
                ));
            }
            if !(rho.abs() <= 1.0) {
                return Err(Error::validation("error correlation must lie in [-1, 1]"));
            }
        }
        if let Confounder::Additive { noise_sd, .. } = &self.confounder {
            if !(*noise_sd >= 0.0) {
                return Err(Error::validation("confounder noise sd must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Log-base `χ(z, x)` of the semiparametric dose density.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ChiForm {
    /// `−(z − b·x)² / (2 s²)`
    Quadratic { scale: f64, x_coefficient: f64 },
    /// `−z⁴ / (4 s⁴)`
    Quartic { scale: f64 },
    /// `slope · z`; never normalizable on the real line.
    Linear { slope: f64 },
}

impl ChiForm {
    pub fn eval(&self, z: f64, x: f64) -> f64 {
        match *self {
            ChiForm::Quadratic {
                scale,
                x_coefficient,
            } => {
                let c = z - x_coefficient * x;
                -c * c / (2.0 * scale * scale)
            }
            ChiForm::Quartic { scale } => -(z / scale).powi(4) / 4.0,
            ChiForm::Linear { slope } => slope * z,
        }
    }
}

/// Semiparametric dose model with a binary confounder tilting the dose law.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SemiparametricSpec {
    pub gamma: f64,
    pub chi: ChiForm,
    /// `P(U = 1)`.
    #[serde(default = "half")]
    pub p_u: f64,
    /// Treatment effect in the auxiliary outcome `R = βD + X + U + ε`.
    #[serde(default = "one")]
    pub beta: f64,
}

fn half() -> f64 {
    0.5
}

impl SemiparametricSpec {
    pub fn normal_base(gamma: f64) -> Self {
        SemiparametricSpec {
            gamma,
            chi: ChiForm::Quadratic {
                scale: 1.0,
                x_coefficient: 0.5,
            },
            p_u: 0.5,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !(0.0..=1.0).contains(&self.p_u) {
            return Err(Error::validation(
                "semiparametric spec has invalid gamma or p_u",
            ));
        }
        match self.chi {
            ChiForm::Quadratic { scale, .. } | ChiForm::Quartic { scale } if scale > 0.0 => Ok(()),
            ChiForm::Linear { .. } => Err(Error::validation(
                "linear chi gives a divergent normalizing integral",
            )),
            _ => Err(Error::validation("chi scale must be positive")),
        }
    }

    /// Integration window wide enough that the tilted density is negligible outside.
    fn window(&self, x: f64, u: f64) -> (f64, f64) {
        match self.chi {
            ChiForm::Quadratic {
                scale,
                x_coefficient,
            } => {
                let centre = x_coefficient * x + self.gamma * u * scale * scale;
                (centre - 14.0 * scale, centre + 14.0 * scale)
            }
            ChiForm::Quartic { scale } => {
                // mode solves z³/s⁴ = γu
                let centre = (self.gamma * u * scale.powi(4)).cbrt();
                (centre - 10.0 * scale, centre + 10.0 * scale)
            }
            ChiForm::Linear { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn log_kernel(&self, z: f64, x: f64, u: f64) -> f64 {
        self.chi.eval(z, x) + self.gamma * z * u
    }

    /// Normalizing integral `∫ exp{χ(z, x) + γ z u} dz`.
    pub fn normalizing_constant(&self, x: f64, u: f64) -> Result<f64> {
        self.validate()?;
        match self.chi {
            ChiForm::Quadratic {
                scale,
                x_coefficient,
            } => {
                let m = x_coefficient * x;
                let t = self.gamma * u;
                Ok(scale
                    * (2.0 * std::f64::consts::PI).sqrt()
                    * (t * m + t * t * scale * scale / 2.0).exp())
            }
            _ => {
                let (lo, hi) = self.window(x, u);
                integrate(|z| self.log_kernel(z, x, u).exp(), lo, hi, 1e-12)
            }
        }
    }

    /// Draws one dose given covariate and confounder.
    fn sample_dose(&self, x: f64, u: f64, rng: &mut Rng) -> Result<f64> {
        match self.chi {
            ChiForm::Quadratic {
                scale,
                x_coefficient,
            } => {
                let z: f64 = StandardNormal.sample(rng);
                Ok(x_coefficient * x + self.gamma * u * scale * scale + scale * z)
            }
            _ => {
                // Inverse cdf by bisection on the quadrature cdf.
                let (lo, hi) = self.window(x, u);
                let norm = self.normalizing_constant(x, u)?;
                let target: f64 = rng.random::<f64>() * norm;
                let cdf = |z: f64| integrate(|t| self.log_kernel(t, x, u).exp(), lo, z, 1e-13);
                let (mut a, mut b) = (lo, hi);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    if cdf(mid)? < target {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                Ok(0.5 * (a + b))
            }
        }
    }
}

/// A data-generating process.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    ComplianceMix { mix: ComplianceMix, beta: f64 },
    PartiallyLinear(PartiallyLinearSpec),
    SemiparametricDose(SemiparametricSpec),
}

/// A complete generator request.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn id(&self) -> &'static str {
        match self.kind {
            DgpKind::ComplianceMix { .. } => "compliance_mix",
            DgpKind::PartiallyLinear(_) => "partially_linear",
            DgpKind::SemiparametricDose(_) => "semiparametric_dose",
        }
    }

    pub fn generate(&self) -> Result<Cohort> {
        match &self.kind {
            DgpKind::ComplianceMix { mix, beta } => {
                generate_compliance_cohort(mix, self.n, *beta, self.seed)
            }
            DgpKind::PartiallyLinear(spec) => {
                generate_partially_linear_cohort(spec, self.n, self.seed)
            }
            DgpKind::SemiparametricDose(spec) => {
                generate_semiparametric_dose_cohort(spec, self.n, self.seed)
            }
        }
    }
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Pre-paired compliance cohort.
///
/// Subjects `2i` and `2i + 1` form pair `i`. A fair coin picks the encouraged
/// member, who gets dose 0; the other gets dose 1. The pair's error draw is
/// carried by member `2i` alone, so the within-pair outcome difference has
/// exactly the error law of the mix.
pub fn generate_compliance_cohort(
    mix: &ComplianceMix,
    n: usize,
    beta: f64,
    seed: u64,
) -> Result<Cohort> {
    mix.validate()?;
    if n == 0 || n % 2 == 1 {
        return Err(Error::validation(
            "compliance cohorts need an even, positive size",
        ));
    }
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n / 2 {
        let mut rng = rng::stream(seed, i as u64);
        let first_encouraged = rng.random::<bool>();
        let eps = mix.error_density.sample(&mut rng);
        for j in 0..2 {
            let class = mix.class_from_uniform(rng.random::<f64>());
            let encouraged = (j == 0) == first_encouraged;
            let (d_t, d_c) = class.potential_treatments();
            let d = if encouraged { d_t } else { d_c };
            let r_c = mix.mean(class) + if j == 0 { eps } else { 0.0 };
            let r_t = r_c + beta;
            subjects.push(Subject {
                id: format!("s{}", 2 * i + j),
                dose: if encouraged { 0.0 } else { 1.0 },
                treatment: d,
                outcome: if d { r_t } else { r_c },
                covariates: Vec::new(),
                latent_u: None,
                latent_class: Some(class),
                potential_outcomes: Some((r_t, r_c)),
            });
        }
    }
    Cohort::new(
        subjects,
        Vec::new(),
        Provenance::Generated {
            seed,
            dgp_id: "compliance_mix".into(),
        },
    )
}

/// Partially linear cohort `R = βD + f(X) + δU + ε`.
pub fn generate_partially_linear_cohort(
    spec: &PartiallyLinearSpec,
    n: usize,
    seed: u64,
) -> Result<Cohort> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::validation("cohort size must be at least 2"));
    }
    let p = spec.outcome.p();
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, i as u64);
        let x: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let z_std = normal(&mut rng);
        let dose = spec.dose_mean + spec.dose_sd * z_std;
        let e1 = normal(&mut rng);
        let e2 = normal(&mut rng);
        let coin: f64 = rng.random();
        let e3 = normal(&mut rng);
        let eps = spec.error_sd * e1;
        let d = match &spec.treatment {
            TreatmentRule::Logistic { xi } => coin < logistic(xi * dose),
            TreatmentRule::Threshold {
                c1,
                c2,
                c3,
                x_coefficients,
                rho,
            } => {
                let e2 = rho * e1 + (1.0 - rho * rho).sqrt() * e2;
                let lin: f64 = x_coefficients.iter().zip(&x).map(|(a, v)| a * v).sum();
                c1 * dose.powi(3) + c2 * dose + lin + e2 > *c3
            }
        };
        let u = match &spec.confounder {
            Confounder::None => 0.0,
            Confounder::Additive { shape, noise_sd } => shape.eval(dose) + noise_sd * e3,
            Confounder::Logistic { lambda0, lambda1 } => {
                if coin_from(e3) < logistic(lambda0 + lambda1 * z_std) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let base = spec.outcome.eval(&x) + spec.delta * u + eps;
        let r_t = spec.beta + base;
        subjects.push(Subject {
            id: format!("s{i}"),
            dose,
            treatment: d,
            outcome: if d { r_t } else { base },
            covariates: x,
            latent_u: Some(u),
            latent_class: None,
            potential_outcomes: Some((r_t, base)),
        });
    }
    Cohort::new(
        subjects,
        names(p),
        Provenance::Generated {
            seed,
            dgp_id: "partially_linear".into(),
        },
    )
}

/// Maps a standard normal draw to a uniform one.
fn coin_from(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Cohort whose doses follow the tilted density `∝ exp{χ(z, x) + γ z u}`.
///
/// One standard normal covariate, binary `U`, treatment
/// `D ~ Bern(logistic(Z̃))` and outcome `R = βD + X + U + ε`.
pub fn generate_semiparametric_dose_cohort(
    spec: &SemiparametricSpec,
    n: usize,
    seed: u64,
) -> Result<Cohort> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::validation("cohort size must be at least 2"));
    }
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, i as u64);
        let x = normal(&mut rng);
        let u = if rng.random::<f64>() < spec.p_u {
            1.0
        } else {
            0.0
        };
        let dose = spec.sample_dose(x, u, &mut rng)?;
        let d = rng.random::<f64>() < logistic(dose);
        let base = x + u + normal(&mut rng);
        let r_t = spec.beta + base;
        subjects.push(Subject {
            id: format!("s{i}"),
            dose,
            treatment: d,
            outcome: if d { r_t } else { base },
            covariates: vec![x],
            latent_u: Some(u),
            latent_class: None,
            potential_outcomes: Some((r_t, base)),
        });
    }
    Cohort::new(
        subjects,
        names(1),
        Provenance::Generated {
            seed,
            dgp_id: "semiparametric_dose".into(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_compliers_follow_encouragement() {
        let mix = ComplianceMix::new(1.0, 0.0).unwrap();
        let c = generate_compliance_cohort(&mix, 200, 0.3, 5).unwrap();
        for s in c.subjects() {
            assert_eq!(s.treatment, s.dose == 0.0);
        }
    }

    #[test]
    fn odd_size_rejected() {
        let mix = ComplianceMix::new(0.5, 0.25).unwrap();
        assert!(generate_compliance_cohort(&mix, 7, 0.0, 1).is_err());
        assert!(ComplianceMix::new(0.0, 0.5).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PartiallyLinearSpec::sin_log_sin(0.8, 1.0);
        let a = generate_partially_linear_cohort(&spec, 50, 9).unwrap();
        let b = generate_partially_linear_cohort(&spec, 50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outcomes_reconstruct_from_latents() {
        let spec = PartiallyLinearSpec::threshold_model(2, 1.5).unwrap();
        let c = generate_partially_linear_cohort(&spec, 100, 3).unwrap();
        for s in c.subjects() {
            let (r_t, r_c) = s.potential_outcomes.unwrap();
            assert!((r_t - r_c - 1.5).abs() < 1e-10);
            assert_eq!(s.outcome, if s.treatment { r_t } else { r_c });
        }
    }

    #[test]
    fn spec_json_uses_kind_tag() {
        let spec = DgpSpec {
            kind: DgpKind::PartiallyLinear(PartiallyLinearSpec::sin_log_sin(0.8, 1.0)),
            n: 10,
            seed: 1,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"partially_linear\""));
        let back: DgpSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.generate().unwrap(), spec.generate().unwrap());
        let bad = text.replace("sin_log_sin", "mystery");
        assert!(serde_json::from_str::<DgpSpec>(&bad).is_err());
    }

    #[test]
    fn quartic_normalizer_and_sampler() {
        let spec = SemiparametricSpec {
            gamma: 1.0,
            chi: ChiForm::Quartic { scale: 1.0 },
            p_u: 0.5,
            beta: 1.0,
        };
        let c = generate_semiparametric_dose_cohort(&spec, 400, 2).unwrap();
        let mean = |u: f64| {
            let v: Vec<f64> = c
                .subjects()
                .iter()
                .filter(|s| s.latent_u == Some(u))
                .map(|s| s.dose)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(1.0) > mean(0.0));
        let linear = SemiparametricSpec {
            chi: ChiForm::Linear { slope: 1.0 },
            ..spec
        };
        assert!(linear.normalizing_constant(0.0, 1.0).is_err());
    }
}
