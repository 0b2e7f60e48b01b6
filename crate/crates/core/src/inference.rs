//! Randomization tests, the Wald estimator and test-inversion intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matching::MatchedDesign;
use crate::stats::normal_cdf;

/// Per-pair encouraged-minus-control differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// `Y_i = (Z_i1 − Z_i2)(R_i1 − R_i2)`
    pub y: Vec<f64>,
    /// `S_i = (Z_i1 − Z_i2)(D_i1 − D_i2)`
    pub s: Vec<f64>,
    pub beta0: f64,
    /// `Y_i − β₀ S_i`
    pub adjusted: Vec<f64>,
}

impl PairStats {
    pub fn new(y: Vec<f64>, s: Vec<f64>, beta0: f64) -> Self {
        let adjusted = y.iter().zip(&s).map(|(a, b)| a - beta0 * b).collect();
        PairStats {
            y,
            s,
            beta0,
            adjusted,
        }
    }

    pub fn at(&self, beta0: f64) -> PairStats {
        PairStats::new(self.y.clone(), self.s.clone(), beta0)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Pair statistics of an encoded design.
pub fn pair_stats(design: &MatchedDesign, cohort: &Cohort, beta0: f64) -> Result<PairStats> {
    design.require_encoded()?;
    let (y, s) = design
        .pairs
        .iter()
        .map(|&(e, c)| {
            let (se, sc) = (cohort.subject(e), cohort.subject(c));
            (se.outcome - sc.outcome, se.d() - sc.d())
        })
        .unzip();
    Ok(PairStats::new(y, s, beta0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Wilcoxon,
    Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Greater,
    Less,
    TwoSided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub side: Side,
    pub beta0: f64,
    pub exact: bool,
    /// Pairs left after dropping zeros.
    pub n_used: usize,
    /// Every adjusted value was zero; p is reported as 1.
    pub degenerate: bool,
}

/// Largest nonzero count handled by the exact null distribution.
pub const EXACT_LIMIT: usize = 30;

fn combine(upper: f64, lower: f64, side: Side) -> f64 {
    match side {
        Side::Greater => upper,
        Side::Less => lower,
        Side::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
    .clamp(0.0, 1.0)
}

fn degenerate(method: TestMethod, side: Side, beta0: f64) -> TestReport {
    TestReport {
        statistic: 0.0,
        p_value: 1.0,
        method,
        side,
        beta0,
        exact: true,
        n_used: 0,
        degenerate: true,
    }
}

/// Wilcoxon signed rank test of symmetry about zero.
///
/// Zeros are dropped and tied absolute values get average ranks. The null
/// distribution is exact up to [`EXACT_LIMIT`] nonzero values and normal with
/// continuity correction beyond.
pub fn wilcoxon_signed_rank(stats: &PairStats, side: Side) -> TestReport {
    wilcoxon_with_limit(&stats.adjusted, side, stats.beta0, EXACT_LIMIT)
}

pub(crate) fn wilcoxon_with_limit(
    values: &[f64],
    side: Side,
    beta0: f64,
    exact_limit: usize,
) -> TestReport {
    let nz: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return degenerate(TestMethod::Wilcoxon, side, beta0);
    }
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    let ranks = crate::stats::average_ranks(&abs);
    let t_plus: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let exact = n <= exact_limit;
    let (upper, lower) = if exact {
        // Twice the ranks are integers; count subsets by their doubled sum.
        let r2: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = r2.iter().sum();
        let mut counts = vec![0.0_f64; total + 1];
        counts[0] = 1.0;
        for &r in &r2 {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let t2 = (2.0 * t_plus).round() as usize;
        let upper: f64 = counts[t2..].iter().sum::<f64>() / all;
        let lower: f64 = counts[..=t2].iter().sum::<f64>() / all;
        (upper, lower)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            var -= (t * t * t - t) / 48.0;
            i = j;
        }
        let sd = var.sqrt();
        let upper = 1.0 - normal_cdf((t_plus - mean - 0.5) / sd);
        let lower = normal_cdf((t_plus - mean + 0.5) / sd);
        (upper, lower)
    };
    TestReport {
        statistic: t_plus,
        p_value: combine(upper, lower, side),
        method: TestMethod::Wilcoxon,
        side,
        beta0,
        exact,
        n_used: n,
        degenerate: false,
    }
}

/// Sign test: the count of positive values against Binomial(n, 1/2).
pub fn sign_test(stats: &PairStats, side: Side) -> TestReport {
    let pos = stats.adjusted.iter().filter(|v| **v > 0.0).count() as u64;
    let neg = stats.adjusted.iter().filter(|v| **v < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return degenerate(TestMethod::Sign, side, stats.beta0);
    }
    let bin = Binomial::new(0.5, n).expect("valid binomial");
    let upper = if pos == 0 { 1.0 } else { bin.sf(pos - 1) };
    let lower = bin.cdf(pos);
    TestReport {
        statistic: pos as f64,
        p_value: combine(upper, lower, side),
        method: TestMethod::Sign,
        side,
        beta0: stats.beta0,
        exact: true,
        n_used: n as usize,
        degenerate: false,
    }
}

pub fn run_test(stats: &PairStats, method: TestMethod, side: Side) -> TestReport {
    match method {
        TestMethod::Wilcoxon => wilcoxon_signed_rank(stats, side),
        TestMethod::Sign => sign_test(stats, side),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    pub beta_hat: f64,
    pub compliance_hat: f64,
    /// `√2 σ̂ / (√I ι̂_C)` when `σ̂` is supplied.
    pub sd: Option<f64>,
    pub n_pairs: usize,
}

/// Wald estimator `Σ Y_i / Σ S_i` from pair statistics.
pub fn wald_from_stats(stats: &PairStats, sigma_hat: Option<f64>) -> Result<WaldReport> {
    let sum_s: f64 = stats.s.iter().sum();
    if sum_s == 0.0 {
        return Err(Error::numerical(
            "compliance sum is zero; the Wald estimator is undefined",
        ));
    }
    let n = stats.len() as f64;
    let iota = sum_s / n;
    Ok(WaldReport {
        beta_hat: stats.y.iter().sum::<f64>() / sum_s,
        compliance_hat: iota,
        sd: sigma_hat.map(|s| std::f64::consts::SQRT_2 * s / (n.sqrt() * iota.abs())),
        n_pairs: stats.len(),
    })
}

pub fn wald_estimate(
    design: &MatchedDesign,
    cohort: &Cohort,
    sigma_hat: Option<f64>,
) -> Result<WaldReport> {
    wald_from_stats(&pair_stats(design, cohort, 0.0)?, sigma_hat)
}

/// Confidence interval `{β₀ : p(β₀) > α}` by bisection on each boundary.
///
/// The default bracket is `β̂ ± 20·sd`, with `sd` from the Wald formula and
/// `σ̂ = sd(Y − β̂S)/√2`; it is widened geometrically until both ends reject.
pub fn invert_ci(
    stats: &PairStats,
    method: TestMethod,
    alpha: f64,
    bracket: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation("alpha must lie in (0, 1)"));
    }
    let wald = wald_from_stats(stats, None)?;
    let centre = wald.beta_hat;
    let p = |b: f64| run_test(&stats.at(b), method, Side::TwoSided).p_value;
    if p(centre) <= alpha {
        return Err(Error::numerical(
            "the test rejects at the point estimate; no interval around it",
        ));
    }
    let resid: Vec<f64> = stats
        .y
        .iter()
        .zip(&stats.s)
        .map(|(y, s)| y - centre * s)
        .collect();
    let sigma = crate::stats::sd(&resid) / std::f64::consts::SQRT_2;
    let width = (20.0 * std::f64::consts::SQRT_2 * sigma
        / ((stats.len() as f64).sqrt() * wald.compliance_hat.abs()))
    .max(1e-3);
    let (mut lo, mut hi) = bracket.unwrap_or((centre - width, centre + width));
    if !(lo < centre && centre < hi) {
        return Err(Error::validation("bracket must contain the point estimate"));
    }
    let mut grow = 0;
    while p(lo) > alpha || p(hi) > alpha {
        if grow == 60 || bracket.is_some() {
            return Err(Error::numerical(
                "bracket does not contain the acceptance boundary",
            ));
        }
        if p(lo) > alpha {
            lo = centre - 2.0 * (centre - lo);
        }
        if p(hi) > alpha {
            hi = centre + 2.0 * (hi - centre);
        }
        grow += 1;
    }
    let boundary = |mut inside: f64, mut outside: f64| {
        while (outside - inside).abs() > 1e-6 {
            let mid = 0.5 * (inside + outside);
            if p(mid) > alpha {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    Ok((boundary(centre, lo), boundary(centre, hi)))
}
