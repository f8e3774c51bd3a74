//! Two-regime change-point log-likelihood and its derivatives.
//!
//! Observations `x_1..x_tau` follow Weibull `gamma0`, `x_{tau+1}..x_T`
//! follow Weibull `gamma1`. Consecutive pairs are coupled by a copula with
//! parameter `alpha0` inside the first regime, `alpha1` inside the second
//! and the fixed `alpha01` across the junction `(x_tau, x_{tau+1})`:
//!
//! ```text
//! l = sum_{t<=tau} log f0(x_t) + sum_{t>tau} log f1(x_t)
//!   + sum_{t=1}^{tau-1} log c_a0(F0(x_t), F0(x_{t+1}))
//!   + log c_a01(F0(x_tau), F1(x_{tau+1}))
//!   + sum_{t=tau+1}^{T-1} log c_a1(F1(x_t), F1(x_{t+1}))
//! ```
//!
//! The optimizer works on the unconstrained coordinates
//! `(K0, K1, L0, L1, A0, A1) = (ln k0, ln k1, ln l0, ln l1, A(a0), A(a1))`
//! with `A(a) = ln(a + 1)` for Clayton and `A(a) = ln(a - 1)` for Joe.
//! Gradient and Hessian are assembled from copula-level partials chained
//! with the Weibull CDF partials, then mapped through the transformation.

use serde::{Deserialize, Serialize};

use crate::copula::{clamp_unit, CopulaFamily, CopulaSpec};
use crate::error::{Error, Result};
use crate::weibull::{ShapeScalePartials, WeibullParams};

/// Shortest series for which a change point exists (`3 <= tau <= T - 3`).
pub const MIN_SERIES_LEN: usize = 6;

/// Number of estimated continuous parameters.
pub const N_PARAMS: usize = 6;

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["k0", "k1", "lambda0", "lambda1", "alpha0", "alpha1"];

const K0: usize = 0;
const K1: usize = 1;
const L0: usize = 2;
const L1: usize = 3;
const A0: usize = 4;
const A1: usize = 5;

pub type Vector6 = [f64; N_PARAMS];
pub type Matrix6 = [[f64; N_PARAMS]; N_PARAMS];

/// An ordered series of positive observations with optional row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_SERIES_LEN {
            return Err(Error::domain(format!(
                "series needs at least {MIN_SERIES_LEN} observations, got {}",
                values.len()
            )));
        }
        for (i, &x) in values.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::domain(format!("observation must be finite and > 0, got {x}")).at(i + 1));
            }
        }
        Ok(Self { values, labels: None })
    }

    pub fn with_labels(values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::domain(format!(
                "{} labels for {} observations",
                labels.len(),
                values.len()
            )));
        }
        let mut s = Self::new(values)?;
        s.labels = Some(labels);
        Ok(s)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every observation multiplied by `c > 0`; labels are kept.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut s = Self::new(self.values.iter().map(|x| x * c).collect())?;
        s.labels = self.labels.clone();
        Ok(s)
    }

    /// Range of admissible change points for this length.
    pub fn tau_range(&self) -> std::ops::RangeInclusive<usize> {
        3..=self.len() - 3
    }
}

/// 1-based index of the last pre-change observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChangePoint {
    tau: usize,
}

impl ChangePoint {
    /// Validates `3 <= tau <= len - 3`.
    pub fn new(tau: usize, len: usize) -> Result<Self> {
        if len < MIN_SERIES_LEN || tau < 3 || tau > len - 3 {
            return Err(Error::domain(format!(
                "change point {tau} outside 3..={} for a series of length {len}",
                len.saturating_sub(3)
            )));
        }
        Ok(Self { tau })
    }

    #[inline]
    pub fn tau(&self) -> usize {
        self.tau
    }
}

/// Marginal and dependence parameters of both regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: CopulaFamily,
    pub gamma0: WeibullParams,
    pub gamma1: WeibullParams,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Junction dependence, held fixed during estimation.
    pub alpha01: f64,
}

impl ModelParams {
    pub fn new(
        family: CopulaFamily,
        gamma0: WeibullParams,
        gamma1: WeibullParams,
        alpha0: f64,
        alpha1: f64,
        alpha01: f64,
    ) -> Result<Self> {
        let p = Self {
            family,
            gamma0,
            gamma1,
            alpha0,
            alpha1,
            alpha01,
        };
        p.validate()?;
        Ok(p)
    }

    /// Shorthand taking `(k0, lambda0)`, `(k1, lambda1)` and `(alpha0, alpha1, alpha01)`.
    pub fn from_tuples(
        family: CopulaFamily,
        g0: (f64, f64),
        g1: (f64, f64),
        alphas: (f64, f64, f64),
    ) -> Result<Self> {
        Self::new(
            family,
            WeibullParams::new(g0.0, g0.1)?,
            WeibullParams::new(g1.0, g1.1)?,
            alphas.0,
            alphas.1,
            alphas.2,
        )
    }

    pub fn validate(&self) -> Result<()> {
        WeibullParams::new(self.gamma0.k(), self.gamma0.lambda())?;
        WeibullParams::new(self.gamma1.k(), self.gamma1.lambda())?;
        for a in [self.alpha0, self.alpha1, self.alpha01] {
            CopulaSpec::new(self.family, a)?;
        }
        Ok(())
    }

    /// `(k0, k1, lambda0, lambda1, alpha0, alpha1)`.
    pub fn to_vector(&self) -> Vector6 {
        [
            self.gamma0.k(),
            self.gamma1.k(),
            self.gamma0.lambda(),
            self.gamma1.lambda(),
            self.alpha0,
            self.alpha1,
        ]
    }

    pub fn from_vector(family: CopulaFamily, v: &Vector6, alpha01: f64) -> Result<Self> {
        Self::from_tuples(family, (v[K0], v[L0]), (v[K1], v[L1]), (v[A0], v[A1], alpha01))
    }

    fn copula(&self, alpha: f64) -> Result<CopulaSpec> {
        CopulaSpec::new(self.family, alpha)
    }
}

/// Unconstrained coordinates used by Newton-Raphson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedParams {
    pub k0: f64,
    pub k1: f64,
    pub l0: f64,
    pub l1: f64,
    pub a0: f64,
    pub a1: f64,
}

impl TransformedParams {
    pub fn to_array(&self) -> Vector6 {
        [self.k0, self.k1, self.l0, self.l1, self.a0, self.a1]
    }

    pub fn from_array(v: Vector6) -> Self {
        Self {
            k0: v[K0],
            k1: v[K1],
            l0: v[L0],
            l1: v[L1],
            a0: v[A0],
            a1: v[A1],
        }
    }
}

/// Offset `c` in `alpha = e^A + c`.
#[inline]
pub fn alpha_offset(family: CopulaFamily) -> f64 {
    match family {
        CopulaFamily::Clayton => -1.0,
        CopulaFamily::Joe => 1.0,
    }
}

/// `A(alpha)` for the family.
pub fn transform_alpha(family: CopulaFamily, alpha: f64) -> Result<f64> {
    let shifted = alpha - alpha_offset(family);
    if !(shifted > 0.0) {
        return Err(Error::domain(format!(
            "{family} alpha={alpha} has no transformed coordinate"
        )));
    }
    Ok(shifted.ln())
}

#[inline]
pub fn untransform_alpha(family: CopulaFamily, a: f64) -> f64 {
    a.exp() + alpha_offset(family)
}

pub fn transform(params: &ModelParams) -> Result<TransformedParams> {
    let f = params.family;
    Ok(TransformedParams {
        k0: params.gamma0.k().ln(),
        k1: params.gamma1.k().ln(),
        l0: params.gamma0.lambda().ln(),
        l1: params.gamma1.lambda().ln(),
        a0: transform_alpha(f, params.alpha0)?,
        a1: transform_alpha(f, params.alpha1)?,
    })
}

pub fn untransform(tp: &TransformedParams, family: CopulaFamily, alpha01: f64) -> Result<ModelParams> {
    ModelParams::from_tuples(
        family,
        (tp.k0.exp(), tp.l0.exp()),
        (tp.k1.exp(), tp.l1.exp()),
        (untransform_alpha(family, tp.a0), untransform_alpha(family, tp.a1), alpha01),
    )
}

fn check_cp(series: &Series, cp: ChangePoint) -> Result<()> {
    ChangePoint::new(cp.tau, series.len()).map(|_| ())
}

/// The two additive blocks of the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikParts {
    pub marginal: f64,
    pub copula: f64,
}

impl LogLikParts {
    pub fn total(&self) -> f64 {
        self.marginal + self.copula
    }
}

/// Sum of the marginal log-density terms.
pub fn marginal_block(series: &Series, params: &ModelParams, cp: ChangePoint) -> Result<f64> {
    check_cp(series, cp)?;
    let mut acc = 0.0;
    for (i, &x) in series.values().iter().enumerate() {
        let t = i + 1;
        let g = if t <= cp.tau { &params.gamma0 } else { &params.gamma1 };
        acc += g.log_pdf(x).map_err(|e| e.at(t))?;
    }
    Ok(acc)
}

/// Sum of the copula log-density terms over all consecutive pairs.
pub fn copula_block(series: &Series, params: &ModelParams, cp: ChangePoint) -> Result<f64> {
    check_cp(series, cp)?;
    let x = series.values();
    let tau = cp.tau;
    let mut acc = 0.0;
    for t in 1..x.len() {
        let (gu, gv, alpha) = pair_layout(params, t, tau);
        let term = (|| {
            let u = gu.cdf(x[t - 1])?;
            let v = gv.cdf(x[t])?;
            params.copula(alpha)?.log_density(u, v)
        })()
        .map_err(|e| e.at(t))?;
        acc += term;
    }
    Ok(acc)
}

/// Marginals of the pair `(x_t, x_{t+1})` and its copula parameter.
#[inline]
fn pair_layout(params: &ModelParams, t: usize, tau: usize) -> (&WeibullParams, &WeibullParams, f64) {
    if t < tau {
        (&params.gamma0, &params.gamma0, params.alpha0)
    } else if t == tau {
        (&params.gamma0, &params.gamma1, params.alpha01)
    } else {
        (&params.gamma1, &params.gamma1, params.alpha1)
    }
}

pub fn log_likelihood_parts(series: &Series, params: &ModelParams, cp: ChangePoint) -> Result<LogLikParts> {
    let parts = LogLikParts {
        marginal: marginal_block(series, params, cp)?,
        copula: copula_block(series, params, cp)?,
    };
    if !parts.total().is_finite() {
        return Err(Error::domain(format!(
            "log-likelihood is not finite at tau={}",
            cp.tau
        )));
    }
    Ok(parts)
}

pub fn log_likelihood(series: &Series, params: &ModelParams, cp: ChangePoint) -> Result<f64> {
    log_likelihood_parts(series, params, cp).map(|p| p.total())
}

/// Log-likelihood with gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub loglik: f64,
    pub gradient: Vector6,
    pub hessian: Matrix6,
}

/// Derivatives with respect to the natural parameters
/// `(k0, k1, lambda0, lambda1, alpha0, alpha1)`.
pub fn natural_derivatives(series: &Series, params: &ModelParams, cp: ChangePoint) -> Result<Derivatives> {
    check_cp(series, cp)?;
    let x = series.values();
    let tau = cp.tau;
    let mut ll = 0.0;
    let mut g = [0.0; N_PARAMS];
    let mut h = [[0.0; N_PARAMS]; N_PARAMS];

    // Marginal terms.
    for (i, &xt) in x.iter().enumerate() {
        let t = i + 1;
        let (gam, ik, il) = if t <= tau { (&params.gamma0, K0, L0) } else { (&params.gamma1, K1, L1) };
        let v = gam.log_pdf(xt).map_err(|e| e.at(t))?;
        let p = gam.log_pdf_partials(xt).map_err(|e| e.at(t))?;
        ll += v;
        add_shape_scale(&mut g, &mut h, ik, il, &p, 1.0);
    }

    // Copula pairs.
    for t in 1..x.len() {
        let (ku, lu, kv, lv, alpha, ia) = if t < tau {
            (K0, L0, K0, L0, params.alpha0, Some(A0))
        } else if t == tau {
            (K0, L0, K1, L1, params.alpha01, None)
        } else {
            (K1, L1, K1, L1, params.alpha1, Some(A1))
        };
        let gu = if ku == K0 { &params.gamma0 } else { &params.gamma1 };
        let gv = if kv == K0 { &params.gamma0 } else { &params.gamma1 };
        pair_term(
            &mut ll,
            &mut g,
            &mut h,
            params.copula(alpha)?,
            (gu, x[t - 1], ku, lu),
            (gv, x[t], kv, lv),
            ia,
        )
        .map_err(|e| e.at(t))?;
    }

    if !ll.is_finite() || g.iter().any(|v| !v.is_finite()) || h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!(
            "log-likelihood derivatives are not finite at tau={tau}"
        )));
    }
    Ok(Derivatives {
        loglik: ll,
        gradient: g,
        hessian: h,
    })
}

fn add_shape_scale(g: &mut Vector6, h: &mut Matrix6, ik: usize, il: usize, p: &ShapeScalePartials, w: f64) {
    g[ik] += w * p.dk;
    g[il] += w * p.dl;
    add_shape_scale_curvature(h, ik, il, p, w);
}

fn add_shape_scale_curvature(h: &mut Matrix6, ik: usize, il: usize, p: &ShapeScalePartials, w: f64) {
    h[ik][ik] += w * p.dkk;
    h[il][il] += w * p.dll;
    h[ik][il] += w * p.dkl;
    h[il][ik] += w * p.dkl;
}

/// Adds `log c(F_u(x_u), F_v(x_v))` and its derivatives.
fn pair_term(
    ll: &mut f64,
    g: &mut Vector6,
    h: &mut Matrix6,
    cop: CopulaSpec,
    (gu, xu, ku, lu): (&WeibullParams, f64, usize, usize),
    (gv, xv, kv, lv): (&WeibullParams, f64, usize, usize),
    ia: Option<usize>,
) -> Result<()> {
    let u_raw = gu.cdf(xu)?;
    let v_raw = gv.cdf(xv)?;
    let (_, u_clamped) = clamp_unit(u_raw);
    let (_, v_clamped) = clamp_unit(v_raw);
    let c = cop.log_density_partials(u_raw, v_raw)?;
    *ll += c.value;

    // Gradients of u, v and alpha in the natural parameters.
    let mut du = [0.0; N_PARAMS];
    let mut dv = [0.0; N_PARAMS];
    let pu = if u_clamped { ShapeScalePartials::default() } else { gu.cdf_partials(xu)? };
    let pv = if v_clamped { ShapeScalePartials::default() } else { gv.cdf_partials(xv)? };
    du[ku] = pu.dk;
    du[lu] = pu.dl;
    dv[kv] = pv.dk;
    dv[lv] = pv.dl;

    for i in 0..N_PARAMS {
        g[i] += c.du * du[i] + c.dv * dv[i];
    }
    if let Some(ia) = ia {
        g[ia] += c.da;
    }

    for i in 0..N_PARAMS {
        for j in 0..N_PARAMS {
            h[i][j] += c.duu * du[i] * du[j]
                + c.dvv * dv[i] * dv[j]
                + c.duv * (du[i] * dv[j] + dv[i] * du[j]);
        }
    }
    if let Some(ia) = ia {
        for i in 0..N_PARAMS {
            let cross = c.dua * du[i] + c.dva * dv[i];
            h[i][ia] += cross;
            h[ia][i] += cross;
        }
        h[ia][ia] += c.daa;
    }
    // Curvature of u and v themselves.
    add_shape_scale_curvature(h, ku, lu, &pu, c.du);
    add_shape_scale_curvature(h, kv, lv, &pv, c.dv);
    Ok(())
}

/// Derivatives in the transformed coordinates.
pub fn derivatives(
    series: &Series,
    tp: &TransformedParams,
    cp: ChangePoint,
    family: CopulaFamily,
    alpha01: f64,
) -> Result<Derivatives> {
    let params = untransform(tp, family, alpha01)?;
    let nat = natural_derivatives(series, &params, cp)?;
    // Every coordinate maps as theta = e^I + const, so d theta/dI and
    // d^2 theta/dI^2 are both e^I.
    let e: Vector6 = tp.to_array().map(f64::exp);
    let mut g = [0.0; N_PARAMS];
    let mut h = [[0.0; N_PARAMS]; N_PARAMS];
    for i in 0..N_PARAMS {
        g[i] = e[i] * nat.gradient[i];
        for j in 0..N_PARAMS {
            h[i][j] = e[i] * e[j] * nat.hessian[i][j];
        }
        h[i][i] += e[i] * nat.gradient[i];
    }
    Ok(Derivatives {
        loglik: nat.loglik,
        gradient: g,
        hessian: h,
    })
}

pub fn gradient(
    series: &Series,
    tp: &TransformedParams,
    cp: ChangePoint,
    family: CopulaFamily,
    alpha01: f64,
) -> Result<Vector6> {
    derivatives(series, tp, cp, family, alpha01).map(|d| d.gradient)
}

pub fn hessian(
    series: &Series,
    tp: &TransformedParams,
    cp: ChangePoint,
    family: CopulaFamily,
    alpha01: f64,
) -> Result<Matrix6> {
    derivatives(series, tp, cp, family, alpha01).map(|d| d.hessian)
}

/// Log-likelihood as a function of the transformed coordinates.
pub fn transformed_log_likelihood(
    series: &Series,
    tp: &TransformedParams,
    cp: ChangePoint,
    family: CopulaFamily,
    alpha01: f64,
) -> Result<f64> {
    let params = untransform(tp, family, alpha01)?;
    log_likelihood(series, &params, cp)
}
