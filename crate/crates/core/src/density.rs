//! Error densities and their self-convolutions.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::Rng;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Sampler = Arc<dyn Fn(&mut Rng) -> f64 + Send + Sync>;

/// User-supplied density given as a (pdf, cdf, sampler) triple.
#[derive(Clone)]
pub struct CustomDensity {
    name: String,
    pdf: RealFn,
    cdf: RealFn,
    sampler: Sampler,
    support: (f64, f64),
    scale: f64,
    symmetric: bool,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl CustomDensity {
    /// Registers a density.
    ///
    /// `scale` bounds the region used for numerical integration on unbounded
    /// supports (integrals run over ±12·scale). The pdf must integrate to one
    /// within 1e-8; symmetry about zero is checked and recorded.
    pub fn new(
        name: impl Into<String>,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut Rng) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
        scale: f64,
    ) -> Result<Self> {
        if !(scale > 0.0) || !(support.0 < support.1) {
            return Err(Error::validation(
                "density needs positive scale and a nonempty support",
            ));
        }
        let d = CustomDensity {
            name: name.into(),
            pdf: Arc::new(pdf),
            cdf: Arc::new(cdf),
            sampler: Arc::new(sampler),
            support,
            scale,
            symmetric: false,
        };
        let (lo, hi) = d.window();
        let mass = integrate(|x| (d.pdf)(x), lo, hi, 1e-12)?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!(
                "density {} integrates to {mass}, not 1",
                d.name
            )));
        }
        let symmetric = (0..=200).all(|k| {
            let x = hi.min(-lo) * k as f64 / 200.0;
            ((d.pdf)(x) - (d.pdf)(-x)).abs() <= 1e-12 * (1.0 + (d.pdf)(x).abs())
        }) && (support.0 == -support.1);
        Ok(CustomDensity { symmetric, ..d })
    }

    fn window(&self) -> (f64, f64) {
        (
            self.support.0.max(-12.0 * self.scale),
            self.support.1.min(12.0 * self.scale),
        )
    }
}

/// Distribution of a pair-level error term.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorDensity {
    Normal {
        sd: f64,
    },
    Laplace {
        scale: f64,
    },
    #[serde(skip)]
    Custom(CustomDensity),
}

impl Default for ErrorDensity {
    fn default() -> Self {
        ErrorDensity::Normal { sd: 1.0 }
    }
}

impl ErrorDensity {
    pub fn standard_normal() -> Self {
        ErrorDensity::Normal { sd: 1.0 }
    }

    pub fn standard_laplace() -> Self {
        ErrorDensity::Laplace { scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorDensity::Normal { sd } if !(*sd > 0.0 && sd.is_finite()) => {
                Err(Error::validation("normal sd must be positive"))
            }
            ErrorDensity::Laplace { scale } if !(*scale > 0.0 && scale.is_finite()) => {
                Err(Error::validation("laplace scale must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ErrorDensity::Normal { sd } => {
                let z = x / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
            }
            ErrorDensity::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            ErrorDensity::Custom(c) => (c.pdf)(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ErrorDensity::Normal { sd } => 0.5 * erfc(-x / (sd * SQRT_2)),
            ErrorDensity::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            ErrorDensity::Custom(c) => (c.cdf)(x),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            ErrorDensity::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            ErrorDensity::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            ErrorDensity::Custom(c) => (c.sampler)(rng),
        }
    }

    /// Whether the density is symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        match self {
            ErrorDensity::Custom(c) => c.symmetric,
            _ => true,
        }
    }

    /// Integration window used for unbounded supports.
    pub fn window(&self) -> (f64, f64) {
        match self {
            ErrorDensity::Normal { sd } => (-12.0 * sd, 12.0 * sd),
            ErrorDensity::Laplace { scale } => (-40.0 * scale, 40.0 * scale),
            ErrorDensity::Custom(c) => c.window(),
        }
    }

    /// `{f*f}(x)`, closed form where available.
    pub fn self_convolution(&self, x: f64) -> Result<f64> {
        match self {
            ErrorDensity::Normal { sd } => {
                let s2 = 2.0 * sd * sd;
                Ok((-x * x / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt())
            }
            ErrorDensity::Laplace { scale } => {
                let a = x.abs() / scale;
                Ok((1.0 + a) * (-a).exp() / (4.0 * scale))
            }
            ErrorDensity::Custom(_) => self.self_convolution_numeric(x),
        }
    }

    /// `{f*f}(x)` by adaptive quadrature, whatever the family.
    pub fn self_convolution_numeric(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.window();
        // the integrand f(x−y)f(y) is supported on y ∈ [lo, hi] ∩ [x−hi, x−lo]
        let a = lo.max(x - hi);
        let b = hi.min(x - lo);
        if a >= b {
            return Ok(0.0);
        }
        // split at the kinks of non-smooth densities (0 and x)
        let mut cuts = vec![a, b];
        for c in [0.0, x, 0.5 * x] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += integrate(|y| self.pdf(x - y) * self.pdf(y), w[0], w[1], 1e-12)?;
        }
        Ok(total)
    }
}
