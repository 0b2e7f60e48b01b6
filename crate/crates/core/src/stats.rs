//! Small statistical helpers: moments, ranks, Spearman, least squares.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n − 1`.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Ranks `1..=n` with ties replaced by their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; NaN when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman correlation test result.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n − 2` df.
    pub p_value: f64,
    pub n: usize,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::validation(
            "spearman needs two equal-length samples of size >= 3",
        ));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y));
    if !rho.is_finite() {
        return Err(Error::numerical(
            "spearman correlation undefined for a constant sample",
        ));
    }
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numerical(e.to_string()))?;
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(Spearman { rho, p_value, n })
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::numerical("t degrees of freedom must be positive"));
    }
    if df > 1e5 {
        // Cornish-Fisher expansion; the generic inverse stalls for huge df.
        let z = normal_quantile(p);
        let (z2, z3) = (z * z, z * z * z);
        return Ok(z
            + (z3 + z) / (4.0 * df)
            + (5.0 * z3 * z2 + 16.0 * z3 + 3.0 * z) / (96.0 * df * df));
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numerical(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

/// Least-squares fit with an intercept.
#[derive(Clone, Debug)]
pub struct OlsFit {
    /// Intercept first, then one slope per column.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// A ridge term was needed because the normal equations were singular.
    pub ridged: bool,
}

/// Regresses `y` on the columns of `x` (each inner vector is one column) plus an intercept.
pub fn ols(y: &[f64], columns: &[Vec<f64>]) -> Result<OlsFit> {
    let n = y.len();
    let p = columns.len() + 1;
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::validation(
            "regressor lengths differ from response length",
        ));
    }
    if n < p {
        return Err(Error::validation(
            "fewer observations than regression coefficients",
        ));
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &yv;
    let (beta, ridged) = match xtx.clone().cholesky() {
        Some(ch) if min_pivot_ok(&xtx, &ch) => (ch.solve(&xty), false),
        _ => {
            let ridge = 1e-8 * xtx.trace() / p as f64;
            let ch = (xtx + DMatrix::identity(p, p) * ridge)
                .cholesky()
                .ok_or_else(|| Error::numerical("normal equations are singular"))?;
            (ch.solve(&xty), true)
        }
    };
    let fitted = &design * &beta;
    let residuals = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        residuals,
        ridged,
    })
}

/// Rejects numerically singular factorizations (tiny pivot relative to the diagonal).
fn min_pivot_ok(a: &DMatrix<f64>, ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = ch.l_dirty();
    (0..a.nrows()).all(|i| {
        let pivot = l[(i, i)] * l[(i, i)];
        pivot > 1e-12 * a[(i, i)].abs().max(f64::MIN_POSITIVE)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let fit = ols(&y, &[x]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-9);
        assert!(!fit.ridged);
    }

    #[test]
    fn collinear_columns_fall_back_to_ridge() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.clone();
        let fit = ols(&y, &[x.clone(), x]).unwrap();
        assert!(fit.ridged);
    }

    #[test]
    fn spearman_monotone_and_known_p() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let s = spearman(&x, &y).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12);
        assert_eq!(s.p_value, 0.0);
        // r = 0.5 with n = 12: t = 0.5·sqrt(10/0.75) = 1.8257, two-sided p ≈ 0.0979
        let t = 0.5 * (10.0f64 / 0.75).sqrt();
        let p = 2.0 * StudentsT::new(0.0, 1.0, 10.0).unwrap().cdf(-t);
        assert!((p - 0.0979).abs() < 1e-3);
    }
}
