//! Parametric bootstrap confidence intervals.
//!
//! Each replication simulates a series of the original length from the
//! fitted model, refits it by profile likelihood and stores the seven
//! estimates. Continuous parameters get percentile intervals. The change
//! point gets the shortest window of replicate values holding at least the
//! requested share of the replicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{ChangePoint, Series};
use crate::optimizer::{profile_fit, FitResult, ProfileConfig};
use crate::simulate::{gen_series_with, stream_rng, with_workers, REPORT_PARAMS};
use rayon::prelude::*;

/// Largest tolerated fraction of replications that fail after retries.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Slack for floating-point products such as `0.025 * 200`.
const INDEX_SLACK: f64 = 1e-9;

/// How the change-point window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauWindow {
    /// Shortest window anywhere among the distinct replicate values.
    #[default]
    Shortest,
    /// Window forced to start at the smallest replicate value.
    AnchoredAtMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub max_retries_per_rep: usize,
    pub tau_window: TauWindow,
    pub fit: ProfileConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            level: 0.95,
            seed: 0,
            max_retries_per_rep: 3,
            tau_window: TauWindow::Shortest,
            fit: ProfileConfig::default(),
            workers: None,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::domain("bootstrap needs at least one replication"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::domain(format!("confidence level must lie in (0,1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub parameter: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauInterval {
    pub estimate: usize,
    pub lo: usize,
    pub hi: usize,
    /// Share of replicates inside `[lo, hi]`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub level: f64,
    pub replications: usize,
    pub seed: u64,
    /// `k0, k1, lambda0, lambda1, alpha0, alpha1`, on the natural scale.
    pub intervals: Vec<Interval>,
    pub tau_interval: TauInterval,
    /// Rows of `(tau, k0, k1, lambda0, lambda1, alpha0, alpha1)` for each
    /// successful replication, in replication order.
    pub replicate_estimates: Vec<[f64; 7]>,
    pub failures: usize,
}

impl BootstrapResult {
    pub fn interval(&self, parameter: &str) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.parameter == parameter)
    }

    /// Change-point estimates of all replicates.
    pub fn tau_replicates(&self) -> Vec<usize> {
        self.replicate_estimates.iter().map(|r| r[0] as usize).collect()
    }
}

/// 1-based ranks `(ceil(a/2 B), floor((1 - a/2) B))` with `a = 1 - level`,
/// clamped into `1..=B`.
pub fn percentile_ranks(b: usize, level: f64) -> (usize, usize) {
    let half = (1.0 - level) / 2.0;
    let n = b as f64;
    let lo = ((half * n) - INDEX_SLACK).ceil().max(1.0) as usize;
    let hi = (((1.0 - half) * n) + INDEX_SLACK).floor().max(1.0) as usize;
    let lo = lo.min(b);
    let hi = hi.clamp(lo, b);
    (lo, hi)
}

/// Percentile interval from an already sorted sample.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let (lo, hi) = percentile_ranks(sorted.len(), level);
    (sorted[lo - 1], sorted[hi - 1])
}

/// Sorted distinct values with their multiplicities.
fn tally(estimates: &[usize]) -> Vec<(usize, usize)> {
    let mut v = estimates.to_vec();
    v.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((y, c)) if *y == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

fn required_mass(total: usize, level: f64) -> usize {
    ((level * total as f64) - INDEX_SLACK).ceil().max(1.0) as usize
}

/// Shortest window `[lo, hi]` over the distinct values that holds at least
/// `level` of the estimates. Equal widths go to the window with more mass,
/// then to the smaller left end.
///
/// # Panics
/// If `estimates` is empty.
pub fn tau_interval(estimates: &[usize], level: f64) -> (usize, usize) {
    assert!(!estimates.is_empty(), "tau_interval needs at least one estimate");
    let t = tally(estimates);
    let need = required_mass(estimates.len(), level);
    // (width, -mass, lo) is minimized.
    let mut best: Option<(usize, std::cmp::Reverse<usize>, usize, usize)> = None;
    let mut j = 0;
    let mut mass = 0;
    for i in 0..t.len() {
        while j < t.len() && mass < need {
            mass += t[j].1;
            j += 1;
        }
        if mass < need {
            break;
        }
        // t[i..j] is the narrowest covering window starting at i. Any wider
        // one from the same start is strictly wider, so it never wins.
        let key = (t[j - 1].0 - t[i].0, std::cmp::Reverse(mass), t[i].0, t[j - 1].0);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
        mass -= t[i].1;
    }
    let (_, _, lo, hi) = best.expect("the full range always covers");
    (lo, hi)
}

/// Window that starts at the smallest estimate and extends just far enough.
pub fn tau_interval_anchored(estimates: &[usize], level: f64) -> (usize, usize) {
    assert!(!estimates.is_empty(), "tau_interval needs at least one estimate");
    let t = tally(estimates);
    let need = required_mass(estimates.len(), level);
    let mut mass = 0;
    for &(x, c) in &t {
        mass += c;
        if mass >= need {
            return (t[0].0, x);
        }
    }
    (t[0].0, t[t.len() - 1].0)
}

/// Share of `estimates` inside `[lo, hi]`.
pub fn window_coverage(estimates: &[usize], lo: usize, hi: usize) -> f64 {
    estimates.iter().filter(|&&x| lo <= x && x <= hi).count() as f64 / estimates.len() as f64
}

fn replicate(series_len: usize, fit: &FitResult, cfg: &BootstrapConfig, index: usize) -> Option<[f64; 7]> {
    let cp = ChangePoint::new(fit.tau, series_len).ok()?;
    for attempt in 0..=cfg.max_retries_per_rep {
        // Retries draw from a fresh stream per (attempt, index).
        let stream = ((attempt as u64) << 32) | index as u64;
        let mut rng = stream_rng(cfg.seed, stream);
        let Ok(sim) = gen_series_with(&fit.params, cp, series_len, &mut rng) else {
            continue;
        };
        if let Ok(refit) = profile_fit(&sim, fit.family, fit.alpha01, &cfg.fit) {
            return Some(refit.estimates());
        }
    }
    None
}

/// Parametric bootstrap around a converged profile fit of `series`.
pub fn parametric_bootstrap(series: &Series, fit: &FitResult, cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    cfg.validate()?;
    if !fit.converged {
        return Err(Error::domain("bootstrap needs a converged fit"));
    }
    if fit.n != series.len() {
        return Err(Error::domain(format!(
            "fit was made on {} observations, series has {}",
            fit.n,
            series.len()
        )));
    }
    let n = series.len();
    let reps: Vec<Option<[f64; 7]>> = with_workers(cfg.workers, || {
        (0..cfg.replications).into_par_iter().map(|i| replicate(n, fit, cfg, i)).collect()
    })?;
    let replicate_estimates: Vec<[f64; 7]> = reps.into_iter().flatten().collect();
    let failures = cfg.replications - replicate_estimates.len();
    let limit = (MAX_FAILURE_FRACTION * cfg.replications as f64).floor() as usize;
    if failures > limit || replicate_estimates.is_empty() {
        return Err(Error::TooManyFailures {
            failures,
            total: cfg.replications,
            limit,
        });
    }

    let est = fit.estimates();
    let intervals = (1..7)
        .map(|j| {
            let mut col: Vec<f64> = replicate_estimates.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let (lo, hi) = percentile_interval(&col, cfg.level);
            Interval {
                parameter: REPORT_PARAMS[j].to_string(),
                estimate: est[j],
                lo,
                hi,
            }
        })
        .collect();

    let taus: Vec<usize> = replicate_estimates.iter().map(|r| r[0] as usize).collect();
    let (lo, hi) = match cfg.tau_window {
        TauWindow::Shortest => tau_interval(&taus, cfg.level),
        TauWindow::AnchoredAtMin => tau_interval_anchored(&taus, cfg.level),
    };
    Ok(BootstrapResult {
        level: cfg.level,
        replications: cfg.replications,
        seed: cfg.seed,
        intervals,
        tau_interval: TauInterval {
            estimate: fit.tau,
            lo,
            hi,
            coverage: window_coverage(&taus, lo, hi),
        },
        replicate_estimates,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn repeat(counts: &[(usize, usize)]) -> Vec<usize> {
        counts.iter().flat_map(|&(v, c)| std::iter::repeat_n(v, c)).collect()
    }

    /// Exhaustive scan over all windows of distinct values.
    fn brute_force(estimates: &[usize], level: f64) -> (usize, usize) {
        let t = tally(estimates);
        let need = required_mass(estimates.len(), level);
        let mut best: Option<(usize, std::cmp::Reverse<usize>, usize, usize)> = None;
        for i in 0..t.len() {
            for j in i..t.len() {
                let mass: usize = t[i..=j].iter().map(|p| p.1).sum();
                if mass >= need {
                    let key = (t[j].0 - t[i].0, std::cmp::Reverse(mass), t[i].0, t[j].0);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        let b = best.unwrap();
        (b.2, b.3)
    }

    #[test]
    fn tau_interval_examples() {
        assert_eq!(tau_interval(&[42; 17], 0.95), (42, 42));
        assert_eq!(tau_interval(&repeat(&[(10, 1), (20, 98), (30, 1)]), 0.95), (20, 20));
        assert_eq!(tau_interval(&repeat(&[(120, 50), (121, 940), (125, 10)]), 0.95), (120, 121));
        let uniform: Vec<usize> = (1..=100).collect();
        assert_eq!(tau_interval(&uniform, 0.95), (1, 95));
    }

    #[test]
    fn anchored_window_starts_at_minimum() {
        let e = repeat(&[(10, 1), (20, 98), (30, 1)]);
        assert_eq!(tau_interval_anchored(&e, 0.95), (10, 20));
        assert_eq!(tau_interval_anchored(&[5], 0.95), (5, 5));
    }

    #[test]
    fn percentile_ranks_examples() {
        assert_eq!(percentile_ranks(200, 0.95), (5, 195));
        assert_eq!(percentile_ranks(1000, 0.95), (25, 975));
        assert_eq!(percentile_ranks(1, 0.95), (1, 1));
        assert_eq!(percentile_ranks(10, 0.9), (1, 9));
        let s = [3.0];
        assert_eq!(percentile_interval(&s, 0.95), (3.0, 3.0));
    }

    proptest! {
        #[test]
        fn shortest_window_matches_enumeration(
            v in proptest::collection::vec(0usize..60, 1..300),
            level in 0.5f64..0.99,
        ) {
            let w = tau_interval(&v, level);
            prop_assert_eq!(w, brute_force(&v, level));
            prop_assert!(window_coverage(&v, w.0, w.1) >= level - 1e-12);
            let a = tau_interval_anchored(&v, level);
            prop_assert!(a.1 - a.0 >= w.1 - w.0);
        }
    }
}
