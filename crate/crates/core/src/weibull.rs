//! Two-parameter Weibull marginal: distribution functions, moments and
//! analytic partial derivatives in `(k, lambda)` up to second order.
//!
//! All densities are evaluated in log space,
//! `log k - log lambda + (k - 1) log(x / lambda) - (x / lambda)^k`,
//! so large `(x / lambda)^k` never overflows an intermediate `exp`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Shape `k` and scale `lambda` of one regime's marginal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    k: f64,
    lambda: f64,
}

/// First and second partial derivatives of a scalar function of `(k, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShapeScalePartials {
    pub dk: f64,
    pub dl: f64,
    pub dkk: f64,
    pub dkl: f64,
    pub dll: f64,
}

impl WeibullParams {
    pub fn new(k: f64, lambda: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::domain(format!("Weibull shape must be finite and > 0, got {k}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain(format!(
                "Weibull scale must be finite and > 0, got {lambda}"
            )));
        }
        Ok(Self { k, lambda })
    }

    #[inline]
    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `1 - exp(-(x / lambda)^k)` for `x >= 0`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain(format!("Weibull cdf needs x >= 0, got {x}")));
        }
        if x == f64::INFINITY {
            return Ok(1.0);
        }
        Ok(-(-self.z(x)).exp_m1())
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.log_pdf(x).map(f64::exp)
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        let l = (x / self.lambda).ln();
        Ok(self.k.ln() - self.lambda.ln() + (self.k - 1.0) * l - (self.k * l).exp())
    }

    /// Inverse CDF, `lambda * (-ln(1 - u))^(1/k)` for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("Weibull quantile needs u in (0,1), got {u}")));
        }
        let e = -(-u).ln_1p();
        Ok(self.lambda * (e.ln() / self.k).exp())
    }

    /// `(mean, variance)` through the log-gamma route.
    pub fn moments(&self) -> (f64, f64) {
        let g1 = ln_gamma(1.0 + 1.0 / self.k).exp();
        let g2 = ln_gamma(1.0 + 2.0 / self.k).exp();
        let mean = self.lambda * g1;
        let var = self.lambda * self.lambda * (g2 - g1 * g1);
        (mean, var.max(0.0))
    }

    /// Partials of the CDF `H(x)` with respect to `(k, lambda)`.
    pub fn cdf_partials(&self, x: f64) -> Result<ShapeScalePartials> {
        check_positive(x)?;
        let (k, lam) = (self.k, self.lambda);
        let l = (x / lam).ln();
        let z = (k * l).exp();
        // z e^{-z}; written this way so it stays finite when z overflows.
        let ze = (k * l - z).exp();
        Ok(ShapeScalePartials {
            dk: ze * l,
            dl: -(k / lam) * ze,
            dkk: ze * l * l * (1.0 - z),
            dkl: (ze / lam) * (k * l * (z - 1.0) - 1.0),
            dll: (k * ze / (lam * lam)) * (1.0 + k - k * z),
        })
    }

    /// Partials of `log h(x)` with respect to `(k, lambda)`.
    pub fn log_pdf_partials(&self, x: f64) -> Result<ShapeScalePartials> {
        check_positive(x)?;
        let (k, lam) = (self.k, self.lambda);
        let l = (x / lam).ln();
        let z = (k * l).exp();
        Ok(ShapeScalePartials {
            dk: 1.0 / k + l - z * l,
            dl: (k / lam) * (z - 1.0),
            dkk: -1.0 / (k * k) - z * l * l,
            dkl: (z - 1.0 + k * z * l) / lam,
            dll: -(k / (lam * lam)) * (z - 1.0 + k * z),
        })
    }

    /// Partials of the density `h(x)` itself.
    pub fn pdf_partials(&self, x: f64) -> Result<ShapeScalePartials> {
        let h = self.pdf(x)?;
        let g = self.log_pdf_partials(x)?;
        Ok(ShapeScalePartials {
            dk: h * g.dk,
            dl: h * g.dl,
            dkk: h * (g.dkk + g.dk * g.dk),
            dkl: h * (g.dkl + g.dk * g.dl),
            dll: h * (g.dll + g.dl * g.dl),
        })
    }

    /// Same parameters with the scale multiplied by `c`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(self.k, self.lambda * c)
    }

    #[inline]
    fn z(&self, x: f64) -> f64 {
        (x / self.lambda).powf(self.k)
    }
}

#[inline]
fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("Weibull density needs finite x > 0, got {x}")))
    }
}
