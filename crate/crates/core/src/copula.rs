//! Clayton and Joe bivariate copulas.
//!
//! Provides the copula CDF, the log-density with its first and second
//! partial derivatives in `(u, v, alpha)`, the conditional distribution
//! `h(v | u) = dC/du` with its inverse (used to sample the Markov chain),
//! and Kendall's tau.
//!
//! Clayton is evaluated through `ln S` with `S = u^-a + v^-a - 1`, using a
//! shifted log-sum when `a * |ln u|` is large, so `a` up to 1000 stays finite.
//! Joe is evaluated through `ln J` with `J = 1 - (1 - a)(1 - b)`,
//! `a = (1-u)^alpha`, `b = (1-v)^alpha`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Copula arguments are clamped into `[U_CLAMP, 1 - U_CLAMP]` before any
/// log or power is taken.
pub const U_CLAMP: f64 = 1e-12;

/// Below this magnitude a Clayton parameter is treated through its
/// second-order expansion around independence.
pub const CLAYTON_INDEPENDENCE_EPS: f64 = 1e-6;

const H_INV_LO: f64 = 1e-14;
const H_INV_HI: f64 = 1.0 - 1e-14;
const H_INV_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Clayton,
    Joe,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 2] = [CopulaFamily::Clayton, CopulaFamily::Joe];

    pub fn name(&self) -> &'static str {
        match self {
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Joe => "joe",
        }
    }

    /// Whether `alpha` is an admissible dependence parameter for this family.
    pub fn admits(&self, alpha: f64) -> bool {
        alpha.is_finite()
            && match self {
                CopulaFamily::Clayton => alpha > -1.0 && alpha != 0.0,
                CopulaFamily::Joe => alpha >= 1.0,
            }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clayton" => Ok(CopulaFamily::Clayton),
            "joe" => Ok(CopulaFamily::Joe),
            other => Err(Error::domain(format!(
                "unknown copula family '{other}' (expected clayton or joe)"
            ))),
        }
    }
}

/// A copula family together with its dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    family: CopulaFamily,
    alpha: f64,
}

/// `log c(u, v)` and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogDensityPartials {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
    pub da: f64,
    pub duu: f64,
    pub dvv: f64,
    pub daa: f64,
    pub duv: f64,
    pub dua: f64,
    pub dva: f64,
}

impl LogDensityPartials {
    /// Partials of `(u, v) -> log c(v, u)`, i.e. with the roles of the two
    /// arguments exchanged.
    fn swapped(self) -> Self {
        Self {
            du: self.dv,
            dv: self.du,
            duu: self.dvv,
            dvv: self.duu,
            dua: self.dva,
            dva: self.dua,
            ..self
        }
    }
}

/// Clamp a probability into `[U_CLAMP, 1 - U_CLAMP]`. The flag reports
/// whether clamping changed the value (its derivative is then zero).
#[inline]
pub fn clamp_unit(u: f64) -> (f64, bool) {
    if u < U_CLAMP {
        (U_CLAMP, true)
    } else if u > 1.0 - U_CLAMP {
        (1.0 - U_CLAMP, true)
    } else {
        (u, false)
    }
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, alpha: f64) -> Result<Self> {
        if !family.admits(alpha) {
            let range = match family {
                CopulaFamily::Clayton => "(-1, inf) excluding 0",
                CopulaFamily::Joe => "[1, inf)",
            };
            return Err(Error::domain(format!(
                "{family} dependence parameter must lie in {range}, got {alpha}"
            )));
        }
        Ok(Self { family, alpha })
    }

    pub fn clayton(alpha: f64) -> Result<Self> {
        Self::new(CopulaFamily::Clayton, alpha)
    }

    pub fn joe(alpha: f64) -> Result<Self> {
        Self::new(CopulaFamily::Joe, alpha)
    }

    #[inline]
    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Copula distribution function `C(u, v)` on `[0, 1]^2`.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        check_unit(u)?;
        check_unit(v)?;
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(v);
        }
        if v == 1.0 {
            return Ok(u);
        }
        let a = self.alpha;
        let c = match self.family {
            CopulaFamily::Clayton => match clayton_log_s(u.ln(), v.ln(), a) {
                Some(ln_s) => (-ln_s / a).exp(),
                None => 0.0,
            },
            CopulaFamily::Joe => {
                let j = JoeTerms::new(u.min(v), u.max(v), a);
                -(j.ln_j / a).exp_m1()
            }
        };
        Ok(c.clamp(0.0, 1.0))
    }

    /// `log c(u, v)`, with `u` and `v` clamped away from the boundary.
    pub fn log_density(&self, u: f64, v: f64) -> Result<f64> {
        check_unit(u)?;
        check_unit(v)?;
        let (u, _) = clamp_unit(u);
        let (v, _) = clamp_unit(v);
        let a = self.alpha;
        match self.family {
            CopulaFamily::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                if a.abs() < CLAYTON_INDEPENDENCE_EPS {
                    let (g1, g2) = clayton_series(lu, lv);
                    return Ok(a * g1 + a * a * g2);
                }
                let ln_s = clayton_log_s(lu, lv, a).ok_or(Error::IndicatorViolation {
                    u,
                    v,
                    alpha: a,
                })?;
                Ok(a.ln_1p() - (1.0 + a) * (lu + lv) - (1.0 / a + 2.0) * ln_s)
            }
            CopulaFamily::Joe => {
                if a == 1.0 {
                    return Ok(0.0);
                }
                let j = JoeTerms::new(u.min(v), u.max(v), a);
                Ok((1.0 / a - 2.0) * j.ln_j + (a - 1.0) * (j.lub + j.lvb) + (a - 1.0 + j.j).ln())
            }
        }
    }

    /// Value and all first/second partials of `log c` at the clamped point.
    pub fn log_density_partials(&self, u: f64, v: f64) -> Result<LogDensityPartials> {
        check_unit(u)?;
        check_unit(v)?;
        let (u, _) = clamp_unit(u);
        let (v, _) = clamp_unit(v);
        let a = self.alpha;
        match self.family {
            CopulaFamily::Clayton => {
                if a.abs() < CLAYTON_INDEPENDENCE_EPS {
                    Ok(clayton_series_partials(u, v, a))
                } else {
                    clayton_partials(u, v, a)
                }
            }
            CopulaFamily::Joe => {
                // Evaluate with the smaller argument first; the density is
                // exchangeable and this keeps the two orders bit-identical.
                if v < u {
                    return Ok(joe_partials(v, u, a).swapped());
                }
                Ok(joe_partials(u, v, a))
            }
        }
    }

    /// Conditional distribution `h(v | u) = P(V <= v | U = u) = dC(u, v)/du`.
    pub fn h(&self, v: f64, u: f64) -> Result<f64> {
        check_unit(v)?;
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("h-function needs u in (0,1), got {u}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        if v == 1.0 {
            return Ok(1.0);
        }
        let a = self.alpha;
        let h = match self.family {
            CopulaFamily::Clayton => {
                let lu = u.ln();
                match clayton_log_s(lu, v.ln(), a) {
                    Some(ln_s) => (-(a + 1.0) * lu - (1.0 / a + 1.0) * ln_s).exp(),
                    None => 0.0,
                }
            }
            CopulaFamily::Joe => {
                let j = JoeTerms::new(u, v, a);
                ((1.0 / a - 1.0) * j.ln_j + (a - 1.0) * j.lub).exp() * j.omb
            }
        };
        Ok(h.clamp(0.0, 1.0))
    }

    /// Solves `h(v | u) = w` for `v`. Closed form for Clayton, bracketed
    /// bisection for Joe.
    pub fn h_inverse(&self, w: f64, u: f64) -> Result<f64> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::domain(format!("h-inverse needs w in (0,1), got {w}")));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("h-inverse needs u in (0,1), got {u}")));
        }
        let a = self.alpha;
        match self.family {
            CopulaFamily::Clayton => {
                let c = -a / (1.0 + a) * w.ln();
                let ln_v = if a > 0.0 {
                    let z = c.exp_m1().ln() - a * u.ln();
                    -softplus(z) / a
                } else {
                    let t = c.exp_m1() * (-a * u.ln()).exp();
                    -t.ln_1p() / a
                };
                Ok(ln_v.exp().clamp(0.0, 1.0))
            }
            CopulaFamily::Joe => self.bisect_h(w, u),
        }
    }

    fn bisect_h(&self, w: f64, u: f64) -> Result<f64> {
        let (mut lo, mut hi) = (H_INV_LO, H_INV_HI);
        if self.h(lo, u)? >= w {
            return Ok(lo);
        }
        if self.h(hi, u)? <= w {
            return Ok(hi);
        }
        for _ in 0..H_INV_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            let hm = self.h(mid, u)?;
            if (hm - w).abs() <= 1e-15 {
                return Ok(mid);
            }
            if hm < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::ConvergenceFailure {
            iterations: H_INV_MAX_ITERS,
        })
    }

    /// Kendall's tau of the copula.
    pub fn kendall_tau(&self) -> f64 {
        let a = self.alpha;
        match self.family {
            CopulaFamily::Clayton => a / (a + 2.0),
            CopulaFamily::Joe => {
                if a == 1.0 {
                    return 0.0;
                }
                // tau = 1 + 4 int_0^1 phi(t)/phi'(t) dt, phi(t) = -ln(1 - (1-t)^a),
                // written in s = 1 - t.
                let f = |s: f64| {
                    let sa = s.powf(a);
                    (-sa).ln_1p() * (1.0 - sa) * s.powf(1.0 - a) / a
                };
                1.0 + 4.0 * crate::quad::integrate(f, 0.0, 1.0, 1e-13)
            }
        }
    }
}

#[inline]
fn check_unit(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::domain(format!("copula argument must lie in [0,1], got {u}")))
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `ln(u^-a + v^-a - 1)`, or `None` outside the Clayton support.
fn clayton_log_s(lu: f64, lv: f64, a: f64) -> Option<f64> {
    let (x, y) = (-a * lu, -a * lv);
    let m = x.max(y);
    if m < 30.0 {
        let s1 = x.exp_m1() + y.exp_m1();
        if s1 <= -1.0 {
            return None;
        }
        Some(s1.ln_1p())
    } else {
        let r = (x - m).exp() + (y - m).exp() - (-m).exp();
        Some(m + r.ln())
    }
}

/// Coefficients of `log c = a g1 + a^2 g2 + O(a^3)` for Clayton near
/// independence, with `p = -ln u`, `q = -ln v`.
fn clayton_series(lu: f64, lv: f64) -> (f64, f64) {
    let (p, q) = (-lu, -lv);
    let g1 = (p - 1.0) * (q - 1.0);
    let g2 = -(p * p * q + p * q * q - 4.0 * p * q + 1.0) / 2.0;
    (g1, g2)
}

fn clayton_series_partials(u: f64, v: f64, a: f64) -> LogDensityPartials {
    let (lu, lv) = (u.ln(), v.ln());
    let (p, q) = (-lu, -lv);
    let (g1, g2) = clayton_series(lu, lv);
    LogDensityPartials {
        value: a * g1 + a * a * g2,
        du: -a * (q - 1.0) / u,
        dv: -a * (p - 1.0) / v,
        da: g1 + 2.0 * a * g2,
        duu: a * (q - 1.0) / (u * u),
        dvv: a * (p - 1.0) / (v * v),
        daa: 2.0 * g2,
        duv: a / (u * v),
        dua: -(q - 1.0) / u,
        dva: -(p - 1.0) / v,
    }
}

fn clayton_partials(u: f64, v: f64, a: f64) -> Result<LogDensityPartials> {
    let (lu, lv) = (u.ln(), v.ln());
    let ln_s = clayton_log_s(lu, lv, a).ok_or(Error::IndicatorViolation { u, v, alpha: a })?;
    // Ratios to S: P = u^-a / S, Q = v^-a / S, R = 1 / S.
    let pp = (-a * lu - ln_s).exp();
    let qq = (-a * lv - ln_s).exp();
    let rr = (-ln_s).exp();
    let b = 1.0 + 2.0 * a;
    let m1 = lu * pp + lv * qq;
    let m2 = lu * lu * pp + lv * lv * qq;
    Ok(LogDensityPartials {
        value: a.ln_1p() - (1.0 + a) * (lu + lv) - (1.0 / a + 2.0) * ln_s,
        du: (-(1.0 + a) + b * pp) / u,
        dv: (-(1.0 + a) + b * qq) / v,
        da: 1.0 / (1.0 + a) - (lu + lv) + ln_s / (a * a) + (1.0 / a + 2.0) * m1,
        duu: ((1.0 + a) + b * pp * (a * pp - (1.0 + a))) / (u * u),
        dvv: ((1.0 + a) + b * qq * (a * qq - (1.0 + a))) / (v * v),
        daa: -1.0 / ((1.0 + a) * (1.0 + a)) - 2.0 * ln_s / (a * a * a) - 2.0 * m1 / (a * a)
            + (1.0 / a + 2.0) * (m1 * m1 - m2),
        duv: b * a * pp * qq / (u * v),
        dua: (-1.0 + 2.0 * pp + b * pp * (lu * (rr - qq) + lv * qq)) / u,
        dva: (-1.0 + 2.0 * qq + b * qq * (lv * (rr - pp) + lu * pp)) / v,
    })
}

/// Shared intermediate quantities of the Joe copula at `(u, v, alpha)`.
struct JoeTerms {
    /// `ln(1-u)`, `ln(1-v)`
    lub: f64,
    lvb: f64,
    /// `ln a`, `ln b` with `a = (1-u)^alpha`, `b = (1-v)^alpha`
    ln_a: f64,
    ln_b: f64,
    /// `1 - a`, `1 - b`
    oma: f64,
    omb: f64,
    ln_j: f64,
    j: f64,
}

impl JoeTerms {
    fn new(u: f64, v: f64, alpha: f64) -> Self {
        let lub = (-u).ln_1p();
        let lvb = (-v).ln_1p();
        let ln_a = alpha * lub;
        let ln_b = alpha * lvb;
        let oma = -ln_a.exp_m1();
        let omb = -ln_b.exp_m1();
        let prod = oma * omb;
        let ln_j = if prod < 0.5 {
            (-prod).ln_1p()
        } else {
            // J = a + b (1 - a)
            log_add(ln_a, ln_b + oma.ln())
        };
        Self {
            lub,
            lvb,
            ln_a,
            ln_b,
            oma,
            omb,
            ln_j,
            j: ln_j.exp(),
        }
    }
}

#[inline]
fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

fn joe_partials(u: f64, v: f64, a: f64) -> LogDensityPartials {
    let t = JoeTerms::new(u, v, a);
    let (ub, vb) = (1.0 - u, 1.0 - v);
    let (lub, lvb) = (t.lub, t.lvb);
    // a/J, b/J, ab/J
    let a_j = (t.ln_a - t.ln_j).exp();
    let b_j = (t.ln_b - t.ln_j).exp();
    let ab_j = (t.ln_a + t.ln_b - t.ln_j).exp();
    let b_val = t.ln_b.exp();
    let a_val = t.ln_a.exp();

    // Derivatives of J divided by J.
    let ju = -a * a_j * t.omb / ub;
    let jv = -a * b_j * t.oma / vb;
    let ja = a_j * lub * t.omb + b_j * lvb * t.oma;
    let juu = a * (a - 1.0) * a_j * t.omb / (ub * ub);
    let jvv = a * (a - 1.0) * b_j * t.oma / (vb * vb);
    let juv = -a * a * ab_j / (ub * vb);
    let jaa = a_j * lub * lub * t.omb + b_j * lvb * lvb * t.oma - 2.0 * ab_j * lub * lvb;
    let jua = -(a_j / ub) * (t.omb * (1.0 + a * lub) - a * b_val * lvb);
    let jva = -(b_j / vb) * (t.oma * (1.0 + a * lvb) - a * a_val * lub);

    // g(J, alpha) = (1/alpha - 2) ln J + ln(alpha - 1 + J)
    let d = a - 1.0 + t.j;
    let r = t.j / d;
    let kappa = (1.0 / a - 2.0) + r;
    let nu = -(1.0 / a - 2.0) - r * r;
    let rho = -1.0 / (a * a) - r / d;
    let g_a = -t.ln_j / (a * a) + 1.0 / d;
    let g_aa = 2.0 * t.ln_j / (a * a * a) - 1.0 / (d * d);

    let mut out = LogDensityPartials {
        value: (1.0 / a - 2.0) * t.ln_j + (a - 1.0) * (lub + lvb) + d.ln(),
        du: kappa * ju - (a - 1.0) / ub,
        dv: kappa * jv - (a - 1.0) / vb,
        da: g_a + kappa * ja + lub + lvb,
        duu: nu * ju * ju + kappa * juu - (a - 1.0) / (ub * ub),
        dvv: nu * jv * jv + kappa * jvv - (a - 1.0) / (vb * vb),
        daa: g_aa + 2.0 * rho * ja + nu * ja * ja + kappa * jaa,
        duv: nu * ju * jv + kappa * juv,
        dua: rho * ju + nu * ja * ju + kappa * jua - 1.0 / ub,
        dva: rho * jv + nu * ja * jv + kappa * jva - 1.0 / vb,
    };
    if a == 1.0 {
        // Independence: the density is identically one.
        out.value = 0.0;
        out.du = 0.0;
        out.dv = 0.0;
        out.duu = 0.0;
        out.dvv = 0.0;
        out.duv = 0.0;
    }
    out
}
