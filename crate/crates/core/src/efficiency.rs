//! Strength versus sample size: ψ functions, relative efficiency and
//! Monte-Carlo sample-size planning.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dgp::ComplianceMix;
use crate::error::{Error, Result};
use crate::inference::{wilcoxon_with_limit, Side, TestMethod, EXACT_LIMIT};
use crate::rng;

/// Names of the ten ψ_wilc coefficients in order.
pub const PSI_COEFFICIENTS: [&str; 10] =
    ["A", "B1", "B2", "B3", "C1", "C2", "C3", "D1", "D2", "D3"];

/// ψ_wilc with its coefficients and the ι monomials they multiply.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiBreakdown {
    pub value: f64,
    pub coefficients: [f64; 10],
    pub monomials: [f64; 10],
}

fn require_symmetric(mix: &ComplianceMix) -> Result<()> {
    mix.validate()?;
    if !mix.error_density.is_symmetric() {
        return Err(Error::validation(
            "error density must be symmetric about zero",
        ));
    }
    Ok(())
}

/// ψ for the Wilcoxon signed rank test.
pub fn psi_wilcoxon(mix: &ComplianceMix) -> Result<PsiBreakdown> {
    require_symmetric(mix)?;
    let ff = |x: f64| mix.error_density.self_convolution(x);
    let (mc, ma, mn) = (mix.mu_c, mix.mu_a, mix.mu_n);
    let f0 = ff(0.0)?;
    let coefficients = [
        2.0 * f0,
        6.0 * ff(ma - mc)?,
        4.0 * f0 + 2.0 * ff(2.0 * ma - 2.0 * mc)?,
        2.0 * ff(ma - mc)?,
        6.0 * ff(mn - mc)?,
        4.0 * f0 + 2.0 * ff(2.0 * mn - 2.0 * mc)?,
        2.0 * ff(mn - mc)?,
        8.0 * ff(ma - mn)? + 4.0 * ff(ma + mn - 2.0 * mc)?,
        4.0 * ff(mn - mc)? + 2.0 * ff(2.0 * ma - mn - mc)?,
        4.0 * ff(ma - mc)? + 2.0 * ff(ma - 2.0 * mn + mc)?,
    ];
    let (c, a, n) = (mix.iota_c, mix.iota_a, mix.iota_n);
    let monomials = [
        c.powi(4),
        c.powi(3) * a,
        c * c * a * a,
        c * a.powi(3),
        c.powi(3) * n,
        c * c * n * n,
        c * n.powi(3),
        c * c * a * n,
        c * a * a * n,
        c * a * n * n,
    ];
    let value = coefficients
        .iter()
        .zip(&monomials)
        .map(|(k, m)| k * m)
        .sum();
    Ok(PsiBreakdown {
        value,
        coefficients,
        monomials,
    })
}

/// ψ for the sign test.
pub fn psi_sign(mix: &ComplianceMix) -> Result<f64> {
    require_symmetric(mix)?;
    let f = |x: f64| mix.error_density.pdf(x);
    let (c, a, n) = (mix.iota_c, mix.iota_a, mix.iota_n);
    Ok(c * c * f(0.0) + c * n * f(mix.mu_n - mix.mu_c) + c * a * f(mix.mu_c - mix.mu_a))
}

pub fn psi(mix: &ComplianceMix, test: TestMethod) -> Result<f64> {
    match test {
        TestMethod::Wilcoxon => Ok(psi_wilcoxon(mix)?.value),
        TestMethod::Sign => psi_sign(mix),
    }
}

/// Limit of `I₁ / I₂`, the pairs IV 1 needs relative to IV 2: `ψ²(mix2) / ψ²(mix1)`.
pub fn are(mix1: &ComplianceMix, mix2: &ComplianceMix, test: TestMethod) -> Result<f64> {
    let p1 = psi(mix1, test)?;
    if p1 == 0.0 {
        return Err(Error::numerical("psi of the first IV is zero"));
    }
    let p2 = psi(mix2, test)?;
    Ok(p2 * p2 / (p1 * p1))
}

/// `n_pairs · ι_C²`.
pub fn effective_sample_size(n_pairs: f64, iota_c: f64) -> Result<f64> {
    if !(n_pairs >= 0.0) || !(0.0..=1.0).contains(&iota_c) {
        return Err(Error::validation(
            "pairs must be nonnegative and the compliance rate in [0, 1]",
        ));
    }
    Ok(n_pairs * iota_c * iota_c)
}

/// Inputs of a sample-size search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSizeRequest {
    pub mix: ComplianceMix,
    /// `β − β₀`
    pub effect: f64,
    pub alpha: f64,
    pub target_power: f64,
    pub test: TestMethod,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub pairs: usize,
    pub power: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub pairs: usize,
    pub power: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
    /// Every evaluated size, in evaluation order.
    pub evaluations: Vec<PowerPoint>,
    /// Some larger size had lower estimated power than a smaller one.
    pub non_monotone: bool,
}

/// Smallest lower bound of the search bracket.
pub const MIN_PAIRS: usize = 16;
/// Largest size the search will try.
pub const MAX_PAIRS: usize = 1 << 18;

/// Draws the adjusted pair statistic `Y − β₀S` for one pair.
///
/// The encouraged and control members get independent classes; the pair's
/// location is `μ_e − μ_c + (β − β₀)(d_T,e − d_C,c)` and the pair error is
/// one draw from the mix's density.
fn draw_pair(mix: &ComplianceMix, effect: f64, rng: &mut rng::Rng) -> f64 {
    let e = mix.class_from_uniform(rng.random::<f64>());
    let c = mix.class_from_uniform(rng.random::<f64>());
    let eps = mix.error_density.sample(rng);
    let s = f64::from(u8::from(e.potential_treatments().0))
        - f64::from(u8::from(c.potential_treatments().1));
    mix.mean(e) - mix.mean(c) + effect * s + eps
}

/// Monte-Carlo power of the one-sided test at `pairs` pairs.
///
/// Replication `r` uses stream `r` and its first `pairs` draws, so powers at
/// different sizes share random numbers.
pub fn simulated_power(req: &SampleSizeRequest, pairs: usize) -> Result<PowerPoint> {
    req.mix.validate()?;
    if req.reps == 0 || pairs == 0 {
        return Err(Error::validation("reps and pairs must be positive"));
    }
    let mut hits = 0usize;
    let mut values = vec![0.0; pairs];
    for r in 0..req.reps {
        let mut g = rng::stream(req.seed, r as u64);
        for v in values.iter_mut() {
            *v = draw_pair(&req.mix, req.effect, &mut g);
        }
        let p = match req.test {
            TestMethod::Wilcoxon => {
                wilcoxon_with_limit(&values, Side::Greater, 0.0, EXACT_LIMIT).p_value
            }
            TestMethod::Sign => {
                let stats = crate::inference::PairStats {
                    y: Vec::new(),
                    s: Vec::new(),
                    beta0: 0.0,
                    adjusted: values.clone(),
                };
                crate::inference::sign_test(&stats, Side::Greater).p_value
            }
        };
        if p <= req.alpha {
            hits += 1;
        }
    }
    let power = hits as f64 / req.reps as f64;
    Ok(PowerPoint {
        pairs,
        power,
        se: (power * (1.0 - power) / req.reps as f64).sqrt(),
    })
}

/// Smallest pair count whose simulated power reaches the target.
///
/// The upper end starts at [`MIN_PAIRS`] and doubles until the target is met
/// (never beyond [`MAX_PAIRS`]); bisection then stops once the bracket width
/// is at most `max(1, 0.5% of its midpoint)`. The upper end is returned.
pub fn required_sample_size(req: &SampleSizeRequest) -> Result<SampleSizeReport> {
    if !(req.alpha > 0.0 && req.alpha <= req.target_power && req.target_power < 1.0) {
        return Err(Error::validation("need 0 < alpha <= target_power < 1"));
    }
    if !(req.effect > 0.0) {
        return Err(Error::validation("effect must be positive"));
    }
    let mut evaluations: Vec<PowerPoint> = Vec::new();
    let eval = |pairs: usize, evals: &mut Vec<PowerPoint>| -> Result<f64> {
        let pt = simulated_power(req, pairs)?;
        let p = pt.power;
        evals.push(pt);
        Ok(p)
    };
    let mut lo = 0usize;
    let mut hi = MIN_PAIRS;
    while eval(hi, &mut evaluations)? < req.target_power {
        if hi >= MAX_PAIRS {
            return Err(Error::numerical(format!(
                "target power not reached at {MAX_PAIRS} pairs"
            )));
        }
        lo = hi;
        hi = (hi * 2).min(MAX_PAIRS);
    }
    if lo > 0 {
        loop {
            let mid = (lo + hi) / 2;
            let width = hi - lo;
            if width as f64 <= (0.005 * mid as f64).max(1.0) {
                break;
            }
            if eval(mid, &mut evaluations)? >= req.target_power {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let mut sorted = evaluations.clone();
    sorted.sort_by_key(|p| p.pairs);
    let non_monotone = sorted.windows(2).any(|w| w[1].power + 1e-12 < w[0].power);
    let at = evaluations
        .iter()
        .rev()
        .find(|p| p.pairs == hi)
        .cloned()
        .expect("evaluated");
    Ok(SampleSizeReport {
        pairs: hi,
        power: at.power,
        se: at.se,
        reps: req.reps,
        seed: req.seed,
        evaluations,
        non_monotone,
    })
}

/// Approximate Monte-Carlo standard error of a ratio `n1 / n2` of searched sizes.
///
/// Near the target, power behaves like `Φ(c√n − z_α)`, so a power error of
/// `se_p` moves `n` by a relative `2 se_p / (φ(z_γ)(z_α + z_γ))`. The two
/// sizes are treated as independent.
pub fn size_ratio_se(n1: usize, n2: usize, alpha: f64, power: f64, reps: usize) -> f64 {
    let (za, zg) = (
        crate::stats::normal_quantile(1.0 - alpha),
        crate::stats::normal_quantile(power),
    );
    let phi = (-0.5 * zg * zg).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let se_p = (power * (1.0 - power) / reps as f64).sqrt();
    let rel = 2.0 * se_p / (phi * (za + zg));
    n1 as f64 / n2 as f64 * (2.0 * rel * rel).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ErrorDensity;

    #[test]
    fn equal_means_reduce_to_linear_forms() {
        for (c, a) in [(0.5, 0.25), (0.3, 0.7), (0.9, 0.0)] {
            let mix = ComplianceMix::new(c, a).unwrap();
            let f0 = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
            let w = psi_wilcoxon(&mix).unwrap();
            assert!((w.value - 2.0 * f0 * c).abs() < 1e-12);
            let s = psi_sign(&mix).unwrap();
            assert!((s - c / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_two_ratios() {
        for (c1, c2, want) in [(0.5, 0.6, 1.44), (0.4, 0.7, 3.0625), (0.3, 0.8, 64.0 / 9.0)] {
            let m1 = ComplianceMix::new(c1, 0.0).unwrap();
            let m2 = ComplianceMix::new(c2, 0.0).unwrap();
            for t in [TestMethod::Wilcoxon, TestMethod::Sign] {
                assert!((are(&m1, &m2, t).unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn effective_sizes() {
        assert!((effective_sample_size(14000.0, 0.51).unwrap() - 3641.4).abs() < 0.1);
        assert!((effective_sample_size(28000.0, 0.27).unwrap() - 2041.2).abs() < 0.1);
    }

    #[test]
    fn asymmetric_density_is_rejected() {
        let exp = crate::density::CustomDensity::new(
            "exp",
            |x: f64| if x >= 0.0 { (-x).exp() } else { 0.0 },
            |x: f64| if x >= 0.0 { 1.0 - (-x).exp() } else { 0.0 },
            |r: &mut rng::Rng| -(1.0 - r.random::<f64>()).ln(),
            (0.0, f64::INFINITY),
            4.0,
        )
        .unwrap();
        let mix = ComplianceMix::new(0.5, 0.2)
            .unwrap()
            .with_density(ErrorDensity::Custom(exp));
        assert!(psi_wilcoxon(&mix).is_err());
    }

    #[test]
    fn power_at_alpha_target_is_minimal() {
        let req = SampleSizeRequest {
            mix: ComplianceMix::new(0.5, 0.0).unwrap(),
            effect: 0.1,
            alpha: 0.05,
            target_power: 0.05,
            test: TestMethod::Wilcoxon,
            reps: 200,
            seed: 3,
        };
        // Exact small-sample tests are conservative, so the first doubling may be needed.
        let rep = required_sample_size(&req).unwrap();
        assert!(rep.pairs <= 2 * MIN_PAIRS && rep.power >= 0.05);
    }
}
