//! Profile maximum likelihood.
//!
//! At a fixed change point the six continuous parameters are fitted by
//! Newton-Raphson in the transformed coordinates. Pure Newton steps are
//! safeguarded two ways: when `-H` is not positive definite a ridge `mu I`
//! is added (starting at `ridge_base`, doubled until the Cholesky factor
//! exists), and each step is halved until the log-likelihood does not drop.
//! The dependence coordinates are kept inside a box; a coordinate sitting
//! on its bound with the gradient pointing outward is held fixed for that
//! iteration.
//!
//! The change point is then chosen by maximizing the profiled
//! log-likelihood over `tau` in `3..=T-3`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::copula::CopulaFamily;
use crate::error::{Error, Result};
use crate::likelihood::{
    derivatives, log_likelihood, transform, transformed_log_likelihood, untransform, ChangePoint, Derivatives,
    ModelParams, Series, TransformedParams, Vector6, N_PARAMS,
};
use crate::selection::{aic, DEFAULT_AIC_PARAMS};
use crate::weibull::WeibullParams;

/// Profiled log-likelihoods closer than this are treated as tied.
pub const TAU_TIE_TOLERANCE: f64 = 1e-9;

/// Accepted steps may lose at most this much log-likelihood to rounding,
/// relative to `1 + |loglik|`.
const MONOTONE_SLACK: f64 = 1e-12;

/// Ridge escalations allowed per iteration before giving up.
const MAX_RIDGE_ESCALATIONS: usize = 12;

/// Starting dependence parameter for both families.
pub const DEFAULT_ALPHA_INIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Convergence tolerance on the largest absolute change of a
    /// transformed coordinate.
    pub epsilon: f64,
    /// Convergence also requires the projected gradient below this.
    pub gradient_tol: f64,
    pub max_iters: usize,
    pub ridge_base: f64,
    pub max_halvings: usize,
    /// Search Clayton over `alpha > -1` instead of `alpha > 0.01`.
    pub allow_negative_clayton: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            gradient_tol: 1e-6,
            max_iters: 200,
            ridge_base: 1e-8,
            max_halvings: 30,
            allow_negative_clayton: false,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.gradient_tol > 0.0) {
            return Err(Error::domain("Newton tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        if !(self.ridge_base >= 0.0) {
            return Err(Error::domain("ridge_base must be nonnegative"));
        }
        if self.max_halvings == 0 {
            return Err(Error::domain("max_halvings must be at least 1"));
        }
        Ok(())
    }

    /// Box on the dependence parameter searched by the optimizer.
    pub fn alpha_bounds(&self, family: CopulaFamily) -> (f64, f64) {
        match family {
            CopulaFamily::Clayton if self.allow_negative_clayton => (-0.99, 1000.0),
            CopulaFamily::Clayton => (0.01, 1000.0),
            CopulaFamily::Joe => (1.0001, 1000.0),
        }
    }
}

/// Result of Newton-Raphson at one change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerFit {
    pub params: ModelParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute transformed-coordinate change of each iteration.
    pub trace: Vec<f64>,
    /// Log-likelihood at the start and after every accepted step.
    pub logliks: Vec<f64>,
    /// Infinity norm of the projected gradient at the returned point.
    pub gradient_norm: f64,
}

/// Which transformed coordinates are boxed, with their bounds.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: Vector6,
    hi: Vector6,
}

impl Bounds {
    fn new(family: CopulaFamily, cfg: &NewtonConfig) -> Result<Self> {
        let (a_lo, a_hi) = cfg.alpha_bounds(family);
        let (lo, hi) = (
            crate::likelihood::transform_alpha(family, a_lo)?,
            crate::likelihood::transform_alpha(family, a_hi)?,
        );
        let inf = f64::INFINITY;
        Ok(Self {
            lo: [-inf, -inf, -inf, -inf, lo, lo],
            hi: [inf, inf, inf, inf, hi, hi],
        })
    }

    fn project(&self, x: &mut Vector6) {
        for i in 0..N_PARAMS {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Coordinates free to move given the gradient direction.
    fn free(&self, x: &Vector6, g: &Vector6) -> [bool; N_PARAMS] {
        let mut free = [true; N_PARAMS];
        for i in 0..N_PARAMS {
            let at_lo = x[i] <= self.lo[i] && g[i] < 0.0;
            let at_hi = x[i] >= self.hi[i] && g[i] > 0.0;
            free[i] = !(at_lo || at_hi);
        }
        free
    }
}

fn projected_gradient_norm(g: &Vector6, free: &[bool; N_PARAMS]) -> f64 {
    (0..N_PARAMS)
        .filter(|&i| free[i])
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

/// Solves `(-H_ff + mu I) s = G_f` on the free coordinates, escalating the
/// ridge from `mu0` until the Cholesky factorization succeeds.
fn ridge_step(d: &Derivatives, free: &[bool; N_PARAMS], mu0: f64, ridge_base: f64) -> Result<(Vector6, f64)> {
    let idx: Vec<usize> = (0..N_PARAMS).filter(|&i| free[i]).collect();
    let n = idx.len();
    let mut step = [0.0; N_PARAMS];
    if n == 0 {
        return Ok((step, mu0));
    }
    let scale = idx
        .iter()
        .map(|&i| d.hessian[i][i].abs())
        .fold(1.0, f64::max);
    let neg_h = DMatrix::from_fn(n, n, |r, c| -d.hessian[idx[r]][idx[c]]);
    let g = DVector::from_iterator(n, idx.iter().map(|&i| d.gradient[i]));
    let mut mu = mu0;
    let floor = ridge_base.max(f64::EPSILON) * scale;
    // Doubling from 1e-8 relative covers ~10^20 in about 70 steps.
    for _ in 0..200 {
        let mut m = neg_h.clone();
        for i in 0..n {
            m[(i, i)] += mu;
        }
        if let Some(ch) = m.cholesky() {
            let s = ch.solve(&g);
            if s.iter().all(|v| v.is_finite()) {
                for (k, &i) in idx.iter().enumerate() {
                    step[i] = s[k];
                }
                return Ok((step, mu));
            }
        }
        mu = if mu == 0.0 { floor } else { mu * 2.0 };
        if !mu.is_finite() {
            break;
        }
    }
    Err(Error::SingularHessian { ridge: mu })
}

/// Newton-Raphson at a fixed change point.
///
/// Starts from `init` or, when absent, from [`default_init`].
pub fn fit_at_tau(
    series: &Series,
    cp: ChangePoint,
    family: CopulaFamily,
    alpha01: f64,
    init: Option<&ModelParams>,
    cfg: &NewtonConfig,
) -> Result<InnerFit> {
    cfg.validate()?;
    ChangePoint::new(cp.tau(), series.len())?;
    let start = match init {
        Some(p) => {
            if p.family != family {
                return Err(Error::domain(format!(
                    "initial values are for {}, fitting {family}",
                    p.family
                )));
            }
            *p
        }
        None => default_init(series, cp, family, alpha01)?,
    };
    let start = ModelParams { alpha01, ..start };
    let bounds = Bounds::new(family, cfg)?;

    let mut x = transform(&start)?.to_array();
    bounds.project(&mut x);
    let eval = |x: &Vector6| derivatives(series, &TransformedParams::from_array(*x), cp, family, alpha01);
    let value = |x: &Vector6| transformed_log_likelihood(series, &TransformedParams::from_array(*x), cp, family, alpha01);

    let mut d = eval(&x)?;
    let mut trace = Vec::new();
    let mut logliks = vec![d.loglik];
    let mut stalled = 0usize;

    for iter in 1..=cfg.max_iters {
        let free = bounds.free(&x, &d.gradient);
        // At the optimum the line search cannot certify ascent through the
        // rounding noise of the sum, so stop once the proposed step is tiny.
        if projected_gradient_norm(&d.gradient, &free) < cfg.gradient_tol {
            if let Ok((s, _)) = ridge_step(&d, &free, 0.0, cfg.ridge_base) {
                if s.iter().all(|v| v.abs() < cfg.epsilon) {
                    let gnorm = projected_gradient_norm(&d.gradient, &free);
                    return finish(&x, d.loglik, true, iter - 1, (trace, logliks), gnorm, family, alpha01);
                }
            }
        }
        let mut mu = 0.0;
        let mut accepted = None;
        for _ in 0..=MAX_RIDGE_ESCALATIONS {
            let (s, mu_used) = ridge_step(&d, &free, mu, cfg.ridge_base)?;
            let mut t = 1.0;
            for _ in 0..=cfg.max_halvings {
                let mut cand = x;
                for i in 0..N_PARAMS {
                    cand[i] += t * s[i];
                }
                bounds.project(&mut cand);
                if let Ok(ll) = value(&cand) {
                    if ll >= d.loglik - MONOTONE_SLACK * (1.0 + d.loglik.abs()) {
                        accepted = Some(cand);
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            let scale = (0..N_PARAMS).map(|i| d.hessian[i][i].abs()).fold(1.0, f64::max);
            mu = if mu_used == 0.0 { cfg.ridge_base.max(1e-8) * scale } else { mu_used * 10.0 };
        }

        let Some(next) = accepted else {
            // No ascent step exists at working precision: either this is the
            // optimum or the iteration is stuck.
            let gnorm = projected_gradient_norm(&d.gradient, &free);
            if gnorm < cfg.gradient_tol {
                return finish(&x, d.loglik, true, iter - 1, (trace, logliks), gnorm, family, alpha01);
            }
            return Err(Error::NonConvergence { iterations: iter });
        };

        let delta = (0..N_PARAMS).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
        x = next;
        d = eval(&x)?;
        trace.push(delta);
        logliks.push(d.loglik);
        stalled = if delta == 0.0 { stalled + 1 } else { 0 };

        let free = bounds.free(&x, &d.gradient);
        let gnorm = projected_gradient_norm(&d.gradient, &free);
        if delta < cfg.epsilon && gnorm < cfg.gradient_tol {
            return finish(&x, d.loglik, true, iter, (trace, logliks), gnorm, family, alpha01);
        }
        if stalled >= 3 {
            return Err(Error::NonConvergence { iterations: iter });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    x: &Vector6,
    loglik: f64,
    converged: bool,
    iterations: usize,
    (trace, logliks): (Vec<f64>, Vec<f64>),
    gradient_norm: f64,
    family: CopulaFamily,
    alpha01: f64,
) -> Result<InnerFit> {
    Ok(InnerFit {
        params: untransform(&TransformedParams::from_array(*x), family, alpha01)?,
        loglik,
        converged,
        iterations,
        trace,
        logliks,
        gradient_norm,
    })
}

/// One point of the profile curve. Failed fits carry `loglik = -inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub tau: usize,
    #[serde(with = "crate::serde_ext::finite_or_null")]
    pub loglik: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Options for the outer search over the change point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub newton: NewtonConfig,
    /// Restrict the search to `tau_min..=tau_max` (clipped to `3..=T-3`).
    pub tau_min: Option<usize>,
    pub tau_max: Option<usize>,
    /// Start each fit from the converged parameters at the previous `tau`.
    pub warm_start: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            tau_min: None,
            tau_max: None,
            warm_start: true,
        }
    }
}

impl From<NewtonConfig> for ProfileConfig {
    fn from(newton: NewtonConfig) -> Self {
        Self {
            newton,
            ..Self::default()
        }
    }
}

/// Estimated change point with the fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: CopulaFamily,
    pub alpha01: f64,
    pub params: ModelParams,
    pub tau: usize,
    pub n: usize,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub trace: Vec<f64>,
    pub profile: Vec<ProfilePoint>,
}

impl FitResult {
    pub fn change_point(&self) -> ChangePoint {
        ChangePoint::new(self.tau, self.n).expect("fitted change point is in range")
    }

    /// `(tau, k0, k1, lambda0, lambda1, alpha0, alpha1)`.
    pub fn estimates(&self) -> [f64; 7] {
        let v = self.params.to_vector();
        [self.tau as f64, v[0], v[1], v[2], v[3], v[4], v[5]]
    }
}

fn tau_bounds(series: &Series, cfg: &ProfileConfig) -> Result<(usize, usize)> {
    let full = series.tau_range();
    let lo = cfg.tau_min.unwrap_or(*full.start()).max(*full.start());
    let hi = cfg.tau_max.unwrap_or(*full.end()).min(*full.end());
    if lo > hi {
        return Err(Error::domain(format!(
            "empty change-point range {lo}..={hi} for a series of length {}",
            series.len()
        )));
    }
    Ok((lo, hi))
}

fn point(tau: usize, r: &Result<InnerFit>) -> ProfilePoint {
    match r {
        Ok(f) => ProfilePoint {
            tau,
            loglik: f.loglik,
            converged: f.converged,
            error: None,
        },
        Err(e) => ProfilePoint {
            tau,
            loglik: f64::NEG_INFINITY,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

/// Index of the profile maximizer among successful fits, scanning in
/// increasing `tau` so that near-ties go to the smaller change point.
pub fn best_point(profile: &[ProfilePoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in profile.iter().enumerate() {
        if p.error.is_some() || !p.loglik.is_finite() {
            continue;
        }
        if best.is_none_or(|b| p.loglik > profile[b].loglik + TAU_TIE_TOLERANCE) {
            best = Some(i);
        }
    }
    best
}

/// Fits every admissible change point and returns the profile maximizer.
pub fn profile_fit(series: &Series, family: CopulaFamily, alpha01: f64, cfg: &ProfileConfig) -> Result<FitResult> {
    cfg.newton.validate()?;
    let (lo, hi) = tau_bounds(series, cfg)?;
    let n = series.len();
    let fit = |tau: usize, init: Option<&ModelParams>| {
        let cp = ChangePoint::new(tau, n)?;
        fit_at_tau(series, cp, family, alpha01, init, &cfg.newton)
    };

    let fits: Vec<(usize, Result<InnerFit>)> = if cfg.warm_start {
        let mut out = Vec::with_capacity(hi - lo + 1);
        let mut prev: Option<ModelParams> = None;
        for tau in lo..=hi {
            let mut r = fit(tau, prev.as_ref());
            if r.is_err() && prev.is_some() {
                r = fit(tau, None);
            }
            if let Ok(f) = &r {
                prev = Some(f.params);
            }
            out.push((tau, r));
        }
        out
    } else {
        (lo..=hi).into_par_iter().map(|tau| (tau, fit(tau, None))).collect()
    };

    let mut profile: Vec<ProfilePoint> = fits.iter().map(|(tau, r)| point(*tau, r)).collect();
    let Some(bi) = best_point(&profile) else {
        return Err(Error::AllProfilesFailed { tau_min: lo, tau_max: hi });
    };
    let (tau_hat, ref r) = fits[bi];
    let mut inner = r.as_ref().expect("best fit succeeded").clone();

    // Guard against warm-start path dependence at the winner.
    if cfg.warm_start {
        if let Ok(cold) = fit(tau_hat, None) {
            if cold.loglik > inner.loglik + TAU_TIE_TOLERANCE {
                inner = cold;
                profile[bi].loglik = inner.loglik;
            }
        }
    }

    let cp = ChangePoint::new(tau_hat, n)?;
    // Report the likelihood re-evaluated at the returned parameters.
    let loglik = log_likelihood(series, &inner.params, cp)?;
    Ok(FitResult {
        family,
        alpha01,
        params: inner.params,
        tau: tau_hat,
        n,
        loglik,
        aic: aic(loglik, DEFAULT_AIC_PARAMS),
        converged: inner.converged,
        iterations: inner.iterations,
        gradient_norm: inner.gradient_norm,
        trace: inner.trace,
        profile,
    })
}

/// Method-of-moments starting values for each segment, with both
/// dependence parameters at [`DEFAULT_ALPHA_INIT`].
pub fn default_init(series: &Series, cp: ChangePoint, family: CopulaFamily, alpha01: f64) -> Result<ModelParams> {
    ChangePoint::new(cp.tau(), series.len())?;
    let (a, b) = series.values().split_at(cp.tau());
    ModelParams::new(
        family,
        moment_weibull(a)?,
        moment_weibull(b)?,
        DEFAULT_ALPHA_INIT,
        DEFAULT_ALPHA_INIT,
        alpha01,
    )
}

/// Squared coefficient of variation of Weibull with shape `k`.
fn weibull_cv2(k: f64) -> f64 {
    let g1 = ln_gamma(1.0 + 1.0 / k);
    let g2 = ln_gamma(1.0 + 2.0 / k);
    (g2 - 2.0 * g1).exp_m1()
}

/// Weibull matching the sample mean and coefficient of variation. A
/// segment without spread falls back to the exponential with its mean.
pub fn moment_weibull(xs: &[f64]) -> Result<WeibullParams> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let cv2 = var / (mean * mean);
    if !(cv2 > 1e-12) || !cv2.is_finite() {
        return WeibullParams::new(1.0, mean);
    }
    // CV^2 decreases in k; bisect on ln k over [0.05, 100].
    let (mut lo, mut hi) = (0.05f64.ln(), 100f64.ln());
    if cv2 >= weibull_cv2(lo.exp()) {
        hi = lo;
    } else if cv2 <= weibull_cv2(hi.exp()) {
        lo = hi;
    }
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if weibull_cv2(mid.exp()) > cv2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = (0.5 * (lo + hi)).exp();
    let lambda = mean / ln_gamma(1.0 + 1.0 / k).exp();
    WeibullParams::new(k, lambda)
}
