//! Synthetic series from the two-regime copula Markov model and the
//! Monte Carlo study harness built on them.
//!
//! A series starts from the stationary marginal, `U_1 ~ U(0,1)`, and moves
//! forward through the conditional inverse, `U_t = h^-1(W_t | U_{t-1})`
//! with `W_t` i.i.d. uniform. Each `U_t` is mapped to the observation scale
//! with the quantile of its own regime's Weibull.

use std::time::{Duration, Instant};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaFamily, CopulaSpec};
use crate::error::{Error, Result};
use crate::likelihood::{ChangePoint, ModelParams, Series};
use crate::optimizer::{profile_fit, ProfileConfig};
use crate::stats;

/// Names of the reported quantities, in report order.
pub const REPORT_PARAMS: [&str; 7] = ["tau", "k0", "k1", "lambda0", "lambda1", "alpha0", "alpha1"];

/// Largest tolerated fraction of failed replications in a study.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Deterministic generator for replication `index` of a run seeded by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Series of length `len` with change point `cp`, seeded by `seed`.
pub fn gen_series(truth: &ModelParams, cp: ChangePoint, len: usize, seed: u64) -> Result<Series> {
    gen_series_with(truth, cp, len, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`gen_series`], drawing from the supplied generator.
pub fn gen_series_with<R: Rng + ?Sized>(truth: &ModelParams, cp: ChangePoint, len: usize, rng: &mut R) -> Result<Series> {
    truth.validate()?;
    let tau = ChangePoint::new(cp.tau(), len)?.tau();
    let cop0 = CopulaSpec::new(truth.family, truth.alpha0)?;
    let cop01 = CopulaSpec::new(truth.family, truth.alpha01)?;
    let cop1 = CopulaSpec::new(truth.family, truth.alpha1)?;

    let mut values = Vec::with_capacity(len);
    let mut u: f64 = rng.sample(Open01);
    values.push(truth.gamma0.quantile(u)?);
    for t in 2..=len {
        let w: f64 = rng.sample(Open01);
        let (cop, marginal) = if t <= tau {
            (&cop0, &truth.gamma0)
        } else if t == tau + 1 {
            (&cop01, &truth.gamma1)
        } else {
            (&cop1, &truth.gamma1)
        };
        u = cop.h_inverse(w, u).map_err(|e| e.at(t))?;
        // Keep the state strictly inside (0, 1) so the quantile exists.
        u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        values.push(marginal.quantile(u).map_err(|e| e.at(t))?);
    }
    Series::new(values)
}

/// One Monte Carlo design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    /// Generating model, including the true junction dependence.
    pub truth: ModelParams,
    pub tau: usize,
    pub len: usize,
    pub replications: usize,
    /// Junction dependence assumed when fitting.
    pub assumed_alpha01: f64,
    pub fit_family: CopulaFamily,
    pub seed: u64,
    #[serde(default)]
    pub fit: ProfileConfig,
    /// Worker threads; `None` uses the global pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl StudyConfig {
    /// Correctly specified design with `assumed_alpha01 = truth.alpha01`.
    pub fn new(name: impl Into<String>, truth: ModelParams, tau: usize, len: usize, replications: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            truth,
            tau,
            len,
            replications,
            assumed_alpha01: truth.alpha01,
            fit_family: truth.family,
            seed,
            fit: ProfileConfig::default(),
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::domain("a study needs at least one replication"));
        }
        if self.len < 7 {
            return Err(Error::domain(format!("study series length must be at least 7, got {}", self.len)));
        }
        ChangePoint::new(self.tau, self.len)?;
        self.truth.validate()?;
        CopulaSpec::new(self.fit_family, self.assumed_alpha01)?;
        Ok(())
    }

    /// True values in [`REPORT_PARAMS`] order.
    pub fn true_values(&self) -> [f64; 7] {
        let v = self.truth.to_vector();
        [self.tau as f64, v[0], v[1], v[2], v[3], v[4], v[5]]
    }
}

/// Summary of one reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub true_value: f64,
    pub mean: f64,
    pub rmse: f64,
    pub re: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub name: String,
    pub truth_family: CopulaFamily,
    pub fit_family: CopulaFamily,
    pub len: usize,
    pub tau: usize,
    pub alpha0: f64,
    pub alpha01: f64,
    pub alpha1: f64,
    pub assumed_alpha01: f64,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<ParamSummary>,
    pub failures: usize,
    /// Per-replication estimates in [`REPORT_PARAMS`] order; failed
    /// replications are omitted.
    pub estimates: Vec<[f64; 7]>,
    /// Not serialized, so reports are byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl StudyReport {
    pub fn row(&self, parameter: &str) -> Option<&ParamSummary> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }
}

/// Estimates of one replication.
fn replicate(cfg: &StudyConfig, index: usize) -> Result<[f64; 7]> {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let cp = ChangePoint::new(cfg.tau, cfg.len)?;
    let series = gen_series_with(&cfg.truth, cp, cfg.len, &mut rng)?;
    let fit = profile_fit(&series, cfg.fit_family, cfg.assumed_alpha01, &cfg.fit)?;
    Ok(fit.estimates())
}

/// Runs `f` on a pool of `workers` threads, or the global pool.
pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::domain(format!("cannot build a pool of {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs all replications and aggregates `E`, RMSE and RE per parameter.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let start = Instant::now();
    let results: Vec<Result<[f64; 7]>> = with_workers(cfg.workers, || {
        (0..cfg.replications).into_par_iter().map(|i| replicate(cfg, i)).collect()
    })?;
    let estimates: Vec<[f64; 7]> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failures = cfg.replications - estimates.len();
    let limit = (MAX_FAILURE_FRACTION * cfg.replications as f64).floor() as usize;
    if failures > limit || estimates.is_empty() {
        return Err(Error::TooManyFailures {
            failures,
            total: cfg.replications,
            limit,
        });
    }
    let truth = cfg.true_values();
    let rows = REPORT_PARAMS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
            let rmse = stats::rmse(&col, truth[j]);
            ParamSummary {
                parameter: name.to_string(),
                true_value: truth[j],
                mean: stats::mean(&col),
                rmse,
                re: rmse / truth[j],
            }
        })
        .collect();
    Ok(StudyReport {
        name: cfg.name.clone(),
        truth_family: cfg.truth.family,
        fit_family: cfg.fit_family,
        len: cfg.len,
        tau: cfg.tau,
        alpha0: cfg.truth.alpha0,
        alpha01: cfg.truth.alpha01,
        alpha1: cfg.truth.alpha1,
        assumed_alpha01: cfg.assumed_alpha01,
        replications: cfg.replications,
        seed: cfg.seed,
        rows,
        failures,
        estimates,
        wall_clock: start.elapsed(),
    })
}

/// Runs each design independently; one failing design does not stop the rest.
pub fn study_grid(configs: &[StudyConfig]) -> Vec<Result<StudyReport>> {
    configs.iter().map(run_study).collect()
}

/// Marginals shared by every preset: `(k0, lambda0)` and `(k1, lambda1)`.
pub const PRESET_GAMMA0: (f64, f64) = (1.8, 1.2);
pub const PRESET_GAMMA1: (f64, f64) = (2.1, 1.5);
pub const PRESET_REPLICATIONS: usize = 500;
const PRESET_SEED: u64 = 20_250_601;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 12] = [
    "table1", "table2", "table3", "table4", "table5", "table6", "table7", "table8", "table9", "table10", "table11",
    "table12",
];

fn design(family: CopulaFamily, alpha: f64) -> Result<ModelParams> {
    ModelParams::from_tuples(family, PRESET_GAMMA0, PRESET_GAMMA1, (alpha, alpha, alpha))
}

/// The built-in Monte Carlo designs, each with `R = 500`.
///
/// * `table1`: both families at `alpha = 2` and `8`, `T = 250`, `tau = 125`.
/// * `table2`..`table5`: Clayton 2, Joe 2, Clayton 8, Joe 8 with
///   `tau` in `{25, 50, 83, 125}`.
/// * `table6`..`table9`: the same four, fitted with assumed junction
///   dependence `1, 2, 4, 8`.
/// * `table10`, `table11`: Clayton and Joe at `T = 100` and `250`.
/// * `table12`: every truth/fit pairing of the two families at `alpha = 2`.
pub fn preset(name: &str) -> Result<Vec<StudyConfig>> {
    use CopulaFamily::{Clayton, Joe};
    let four = [(Clayton, 2.0), (Joe, 2.0), (Clayton, 8.0), (Joe, 8.0)];
    let mut out = Vec::new();
    let mut push = |label: String, truth: ModelParams, tau: usize, len: usize, assumed: f64, fit: CopulaFamily| {
        let seed = PRESET_SEED + out.len() as u64;
        let mut c = StudyConfig::new(label, truth, tau, len, PRESET_REPLICATIONS, seed);
        c.assumed_alpha01 = assumed;
        c.fit_family = fit;
        out.push(c);
    };
    match name {
        "table1" => {
            for fam in [Clayton, Joe] {
                for a in [2.0, 8.0] {
                    push(format!("table1/{fam}/alpha={a}"), design(fam, a)?, 125, 250, a, fam);
                }
            }
        }
        "table2" | "table3" | "table4" | "table5" => {
            let (fam, a) = four[name[5..].parse::<usize>().expect("preset index") - 2];
            for tau in [25, 50, 83, 125] {
                push(format!("{name}/{fam}/alpha={a}/tau={tau}"), design(fam, a)?, tau, 250, a, fam);
            }
        }
        "table6" | "table7" | "table8" | "table9" => {
            let (fam, a) = four[name[5..].parse::<usize>().expect("preset index") - 6];
            for assumed in [1.0, 2.0, 4.0, 8.0] {
                push(format!("{name}/{fam}/alpha={a}/assumed={assumed}"), design(fam, a)?, 125, 250, assumed, fam);
            }
        }
        "table10" | "table11" => {
            let fam = if name == "table10" { Clayton } else { Joe };
            for a in [2.0, 8.0] {
                for (len, tau) in [(100, 50), (250, 125)] {
                    push(format!("{name}/{fam}/alpha={a}/T={len}"), design(fam, a)?, tau, len, a, fam);
                }
            }
        }
        "table12" => {
            for truth in [Clayton, Joe] {
                for fit in [Clayton, Joe] {
                    push(format!("table12/{truth}-truth/{fit}-fit"), design(truth, 2.0)?, 125, 250, 2.0, fit);
                }
            }
        }
        other => {
            return Err(Error::domain(format!(
                "unknown preset '{other}' (valid: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    }
    Ok(out)
}
