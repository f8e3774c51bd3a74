//! Acceptance criteria 1 to 10. Each test prints one line of the form
//! `criterion N (<name>): PASS|FAIL|SKIP <details>` before asserting.
//!
//! Criterion 8 is slow and ignored by default. Criterion 10 needs VIX data
//! supplied through environment variables:
//!
//! * `CPCM_VIX_CSV`: daily closes 2019-09-01..2020-08-31.
//! * `CPCM_VIX_INTERARRIVAL_CSV`: daily closes 2018-01-01..2024-12-31.
//! * `CPCM_VIX_LABEL_COLUMN`, `CPCM_VIX_VALUE_COLUMN`: column names,
//!   `date` and `value` by default.

use std::sync::OnceLock;
use std::time::Instant;

use cpcm_core::bootstrap::{self, BootstrapConfig, BootstrapResult};
use cpcm_core::copula::{CopulaFamily, CopulaSpec};
use cpcm_core::data::{self, CsvColumns};
use cpcm_core::likelihood::{self, ChangePoint, ModelParams, Series, TransformedParams, N_PARAMS};
use cpcm_core::optimizer::{profile_fit, FitResult, NewtonConfig, ProfileConfig};
use cpcm_core::simulate::{gen_series, gen_series_with, run_study, stream_rng, StudyConfig, StudyReport};
use cpcm_core::stats;
use proptest::prelude::*;
use rand::Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {n} ({name}): {} {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(pass, "criterion {n} ({name}) failed: {}", detail.as_ref());
}

fn design(family: CopulaFamily, alpha: f64) -> ModelParams {
    ModelParams::from_tuples(family, (1.8, 1.2), (2.1, 1.5), (alpha, alpha, alpha)).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Derivative correctness
// ---------------------------------------------------------------------------

/// Central difference with one Richardson step.
fn richardson<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn shifted(tp: &TransformedParams, i: usize, by: f64) -> TransformedParams {
    let mut a = tp.to_array();
    a[i] += by;
    TransformedParams::from_array(a)
}

fn random_case(family: CopulaFamily, rng: &mut impl Rng) -> (Series, ChangePoint, TransformedParams, f64) {
    loop {
        let alpha = |rng: &mut dyn rand::RngCore| match family {
            CopulaFamily::Clayton => rng.random_range(0.2..10.0),
            CopulaFamily::Joe => rng.random_range(1.2..10.0),
        };
        let truth = ModelParams::from_tuples(
            family,
            (rng.random_range(0.6..4.0), rng.random_range(0.5..3.0)),
            (rng.random_range(0.6..4.0), rng.random_range(0.5..3.0)),
            (alpha(rng), alpha(rng), alpha(rng)),
        )
        .unwrap();
        let len = rng.random_range(8..30);
        let cp = ChangePoint::new(rng.random_range(3..=len - 3), len).unwrap();
        let Ok(series) = gen_series_with(&truth, cp, len, rng) else { continue };
        // Evaluate away from the generating point so the gradient is not
        // close to zero by construction.
        let mut tp = likelihood::transform(&truth).unwrap().to_array();
        for x in tp.iter_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
        return (series, cp, TransformedParams::from_array(tp), truth.alpha01);
    }
}

#[test]
fn criterion_01_derivatives_match_finite_differences() {
    let start = Instant::now();
    let mut rng = stream_rng(101, 0);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut points = 0;
    for family in CopulaFamily::ALL {
        for _ in 0..200 {
            let (s, cp, tp, a01) = random_case(family, &mut rng);
            let d = likelihood::derivatives(&s, &tp, cp, family, a01).unwrap();
            // Smaller steps let roundoff in deep-tail evaluations dominate
            // the difference quotient.
            let h = 1e-3;
            for i in 0..N_PARAMS {
                let fd = richardson(
                    |e| likelihood::transformed_log_likelihood(&s, &shifted(&tp, i, e), cp, family, a01).unwrap(),
                    h,
                );
                worst_g = worst_g.max((d.gradient[i] - fd).abs() / fd.abs().max(1.0));
                for j in 0..N_PARAMS {
                    let fd = richardson(
                        |e| likelihood::gradient(&s, &shifted(&tp, j, e), cp, family, a01).unwrap()[i],
                        h,
                    );
                    worst_h = worst_h.max((d.hessian[i][j] - fd).abs() / fd.abs().max(1.0));
                }
            }
            points += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "derivatives",
        worst_g <= 1e-5 && worst_h <= 1e-4 && secs < 30.0,
        format!("points={points} max_rel_grad={worst_g:.2e} max_rel_hess={worst_h:.2e} secs={secs:.1}"),
    );
}

// ---------------------------------------------------------------------------
// 2. Likelihood oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_likelihood_matches_high_precision_oracle() {
    let start = Instant::now();
    let s = Series::new(vec![0.5, 1.1, 0.9, 1.4, 2.0, 1.7]).unwrap();
    let cp = ChangePoint::new(3, 6).unwrap();
    // Term-by-term mpmath evaluation at 50 digits (tests/oracles/oracles.py).
    let oracle = [
        (CopulaFamily::Clayton, -3.528_717_676_885_641_697),
        (CopulaFamily::Joe, -3.375_892_723_416_037_943),
    ];
    let mut worst = 0.0f64;
    for (fam, want) in oracle {
        let got = likelihood::log_likelihood(&s, &design(fam, 2.0), cp).unwrap();
        worst = worst.max((got - want).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(2, "likelihood oracle", worst <= 1e-10 && secs < 1.0, format!("max_abs_err={worst:.2e} secs={secs:.3}"));
}

// ---------------------------------------------------------------------------
// 3. Kendall's tau anchors
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_kendall_tau_anchors() {
    let start = Instant::now();
    let tau = |f, a| CopulaSpec::new(f, a).unwrap().kendall_tau();
    let c2 = tau(CopulaFamily::Clayton, 2.0);
    let c8 = tau(CopulaFamily::Clayton, 8.0);
    let j2 = tau(CopulaFamily::Joe, 2.0);
    let j8 = tau(CopulaFamily::Joe, 8.0);
    let closed_form = c2 == 0.5 && c8 == 0.8;
    let joe_anchor = (j2 - 0.426).abs() <= 0.002 && (j8 - 0.883).abs() <= 0.002;

    let mut worst_sample = 0.0f64;
    for (i, (fam, a)) in [
        (CopulaFamily::Clayton, 2.0),
        (CopulaFamily::Clayton, 8.0),
        (CopulaFamily::Joe, 2.0),
        (CopulaFamily::Joe, 8.0),
    ]
    .into_iter()
    .enumerate()
    {
        let cop = CopulaSpec::new(fam, a).unwrap();
        let mut rng = stream_rng(303, i as u64);
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                let w: f64 = rng.random_range(f64::EPSILON..1.0);
                (u, cop.h_inverse(w, u).unwrap())
            })
            .collect();
        worst_sample = worst_sample.max((stats::kendall_tau(&pairs) - cop.kendall_tau()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "kendall tau",
        closed_form && joe_anchor && worst_sample <= 0.02 && secs < 60.0,
        format!(
            "clayton(2)={c2} clayton(8)={c8} joe(2)={j2:.6} (anchor 0.426) joe(8)={j8:.6} (anchor 0.883) \
             max_sample_gap={worst_sample:.4} secs={secs:.1}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4 to 6. Monte Carlo studies, shared between criteria
// ---------------------------------------------------------------------------

const STUDY_R: usize = 100;

fn study(cell: &'static OnceLock<StudyReport>, make: impl FnOnce() -> StudyConfig) -> &'static StudyReport {
    cell.get_or_init(|| {
        let cfg = make();
        let r = run_study(&cfg).unwrap();
        println!(
            "study {}: failures={} wall_clock={:.1}s tau: mean={:.2} rmse={:.3} re={:.4}",
            r.name,
            r.failures,
            r.wall_clock.as_secs_f64(),
            r.row("tau").unwrap().mean,
            r.row("tau").unwrap().rmse,
            r.row("tau").unwrap().re
        );
        r
    })
}

fn clayton_125() -> &'static StudyReport {
    static CELL: OnceLock<StudyReport> = OnceLock::new();
    study(&CELL, || StudyConfig::new("clayton/tau=125", design(CopulaFamily::Clayton, 2.0), 125, 250, STUDY_R, 4001))
}

fn joe_125() -> &'static StudyReport {
    static CELL: OnceLock<StudyReport> = OnceLock::new();
    study(&CELL, || StudyConfig::new("joe/tau=125", design(CopulaFamily::Joe, 2.0), 125, 250, STUDY_R, 4002))
}

fn clayton_25() -> &'static StudyReport {
    static CELL: OnceLock<StudyReport> = OnceLock::new();
    study(&CELL, || StudyConfig::new("clayton/tau=25", design(CopulaFamily::Clayton, 2.0), 25, 250, STUDY_R, 4003))
}

fn clayton_truth_joe_fit() -> &'static StudyReport {
    static CELL: OnceLock<StudyReport> = OnceLock::new();
    study(&CELL, || {
        let mut c = StudyConfig::new("clayton-truth/joe-fit", design(CopulaFamily::Clayton, 2.0), 125, 250, STUDY_R, 4001);
        c.fit_family = CopulaFamily::Joe;
        c
    })
}

#[test]
fn criterion_04_change_point_precision_at_mid_series() {
    let c = clayton_125().row("tau").unwrap();
    let j = joe_125().row("tau").unwrap();
    let pass = (123.5..=126.5).contains(&c.mean) && c.rmse < 3.0 && j.rmse < 2.5;
    verdict(
        4,
        "mid-series precision",
        pass,
        format!(
            "clayton: mean={:.2} rmse={:.3} (need mean in [123.5,126.5], rmse<3.0); joe: rmse={:.3} (need <2.5)",
            c.mean, c.rmse, j.rmse
        ),
    );
}

#[test]
fn criterion_05_early_change_degrades_first_segment() {
    let early = clayton_25();
    let mid = clayton_125();
    let re = early.row("tau").unwrap().re;
    let k_early = early.row("k0").unwrap().rmse;
    let k_mid = mid.row("k0").unwrap().rmse;
    verdict(
        5,
        "early change",
        re < 0.15 && k_early > k_mid,
        format!("re(tau)={re:.4} (need <0.15); rmse(k0) tau=25: {k_early:.4} vs tau=125: {k_mid:.4} (need >)"),
    );
}

#[test]
fn criterion_06_misspecified_family() {
    let mis = clayton_truth_joe_fit().row("tau").unwrap().re;
    let ok = clayton_125().row("tau").unwrap().re;
    verdict(
        6,
        "misspecification",
        mis < 0.06 && ok < 0.03,
        format!("re(tau) joe fit={mis:.4} (need <0.06); clayton fit={ok:.4} (need <0.03)"),
    );
}

// ---------------------------------------------------------------------------
// 7 and 8. Bootstrap
// ---------------------------------------------------------------------------

/// Exhaustive enumeration of windows over the distinct values.
fn enumerate_windows(taus: &[usize], level: f64) -> (usize, usize) {
    let mut distinct: Vec<usize> = taus.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let need = (level * taus.len() as f64 - 1e-9).ceil() as usize;
    let mut best: Option<(usize, std::cmp::Reverse<usize>, usize, usize)> = None;
    for (i, &lo) in distinct.iter().enumerate() {
        for &hi in &distinct[i..] {
            let mass = taus.iter().filter(|&&t| lo <= t && t <= hi).count();
            if mass >= need {
                let key = (hi - lo, std::cmp::Reverse(mass), lo, hi);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
    }
    let b = best.unwrap();
    (b.2, b.3)
}

fn check_bootstrap_structure(b: &BootstrapResult) -> Result<(), String> {
    let taus = b.tau_replicates();
    let want = enumerate_windows(&taus, b.level);
    let got = (b.tau_interval.lo, b.tau_interval.hi);
    if got != want {
        return Err(format!("tau window {got:?} != enumerated {want:?}"));
    }
    let n = b.replicate_estimates.len();
    let half = (1.0 - b.level) / 2.0;
    let lo_rank = ((half * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let hi_rank = (((1.0 - half) * n as f64) + 1e-9).floor().max(1.0) as usize;
    for (j, iv) in b.intervals.iter().enumerate() {
        let mut col: Vec<f64> = b.replicate_estimates.iter().map(|r| r[j + 1]).collect();
        col.sort_by(f64::total_cmp);
        if iv.lo != col[lo_rank - 1] || iv.hi != col[hi_rank - 1] {
            return Err(format!("{} endpoints are not order statistics {lo_rank}/{hi_rank}", iv.parameter));
        }
    }
    Ok(())
}

#[test]
fn criterion_07_bootstrap_structure() {
    let start = Instant::now();
    let truth = design(CopulaFamily::Clayton, 2.0);
    let series = gen_series(&truth, ChangePoint::new(125, 250).unwrap(), 250, 7001).unwrap();
    let fit = profile_fit(&series, CopulaFamily::Clayton, 2.0, &ProfileConfig::default()).unwrap();
    let cfg = BootstrapConfig {
        replications: 200,
        seed: 7002,
        ..BootstrapConfig::default()
    };
    let b = bootstrap::parametric_bootstrap(&series, &fit, &cfg).unwrap();
    let stored = check_bootstrap_structure(&b);

    // The same properties on random replicate tables.
    let mut runner = proptest::test_runner::TestRunner::new(proptest::test_runner::Config::with_cases(256));
    let random = runner
        .run(&(proptest::collection::vec(3usize..40, 1..300), 0.5f64..0.99), |(taus, level)| {
            prop_assert_eq!(bootstrap::tau_interval(&taus, level), enumerate_windows(&taus, level));
            Ok(())
        })
        .map_err(|e| e.to_string());

    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        "bootstrap structure",
        stored.is_ok() && random.is_ok() && secs < 300.0,
        format!(
            "B={} failures={} tau_ci=[{},{}] stored={:?} random={:?} secs={secs:.1}",
            cfg.replications, b.failures, b.tau_interval.lo, b.tau_interval.hi, stored, random
        ),
    );
}

#[test]
#[ignore = "slow: 100 nested bootstraps of B=200"]
fn criterion_08_bootstrap_coverage_of_lambda0() {
    let start = Instant::now();
    let truth = design(CopulaFamily::Clayton, 2.0);
    let (len, tau) = (100, 50);
    let cp = ChangePoint::new(tau, len).unwrap();
    let mut covered = 0;
    let mut attempted = 0;
    for rep in 0..100u64 {
        let series = gen_series(&truth, cp, len, 8000 + rep).unwrap();
        let Ok(fit) = profile_fit(&series, CopulaFamily::Clayton, 2.0, &ProfileConfig::default()) else {
            attempted += 1;
            continue;
        };
        let cfg = BootstrapConfig {
            replications: 200,
            seed: 9000 + rep,
            ..BootstrapConfig::default()
        };
        attempted += 1;
        if let Ok(b) = bootstrap::parametric_bootstrap(&series, &fit, &cfg) {
            let iv = b.interval("lambda0").unwrap();
            if iv.lo <= 1.2 && 1.2 <= iv.hi {
                covered += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        "bootstrap coverage",
        covered >= 85 && secs < 1800.0,
        format!("lambda0 covered in {covered}/{attempted} (need >=85), T={len}, tau={tau}, secs={secs:.0}"),
    );
}

// ---------------------------------------------------------------------------
// 9. Scale equivariance
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_scale_equivariance() {
    let start = Instant::now();
    let c = 3.7;
    let cfg = ProfileConfig::from(NewtonConfig {
        epsilon: 1e-10,
        gradient_tol: 1e-8,
        ..NewtonConfig::default()
    });
    let mut worst = 0.0f64;
    let mut tau_ok = true;
    let mut detail = String::new();
    for (i, fam) in CopulaFamily::ALL.into_iter().enumerate() {
        let truth = ModelParams::from_tuples(fam, (1.8, 1.2), (2.1, 4.5), (2.0, 2.0, 2.0)).unwrap();
        let s = gen_series(&truth, ChangePoint::new(50, 100).unwrap(), 100, 9100 + i as u64).unwrap();
        let a = profile_fit(&s, fam, 2.0, &cfg).unwrap();
        let b = profile_fit(&s.scaled(c).unwrap(), fam, 2.0, &cfg).unwrap();
        let (ea, eb) = (a.estimates(), b.estimates());
        tau_ok &= a.tau == b.tau;
        for j in 1..7 {
            let want = if j == 3 || j == 4 { ea[j] * c } else { ea[j] };
            worst = worst.max((eb[j] - want).abs() / want.abs());
        }
        detail.push_str(&format!("{fam}: tau={}/{} ", a.tau, b.tau));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        9,
        "scale equivariance",
        tau_ok && worst <= 1e-6 && secs < 60.0,
        format!("{detail}max_rel_dev={worst:.2e} secs={secs:.1}"),
    );
}

// ---------------------------------------------------------------------------
// 10. VIX anchors (data supplied by the user)
// ---------------------------------------------------------------------------

/// Exceedance dates and waiting times for VIX > 30 over 2018..2024 as
/// published alongside the original analysis.
const PUBLISHED_EXCEEDANCES: &str = include_str!("fixtures/vix_exceedances_2018_2024.csv");

fn vix_columns() -> CsvColumns {
    let mut c = CsvColumns::default();
    if let Ok(l) = std::env::var("CPCM_VIX_LABEL_COLUMN") {
        c.label = l;
    }
    if let Ok(v) = std::env::var("CPCM_VIX_VALUE_COLUMN") {
        c.value = v;
    }
    c
}

#[test]
fn criterion_10_vix_anchors() {
    let daily = std::env::var("CPCM_VIX_CSV").ok();
    let long = std::env::var("CPCM_VIX_INTERARRIVAL_CSV").ok();
    if daily.is_none() && long.is_none() {
        println!("criterion 10 (vix anchors): SKIP set CPCM_VIX_CSV and CPCM_VIX_INTERARRIVAL_CSV to run");
        return;
    }
    let cols = vix_columns();
    let mut pass = true;
    let mut detail = String::new();

    if let Some(path) = daily {
        let series = data::read_csv_with(&path, &cols).unwrap().to_series().unwrap();
        let mut best_aic = [f64::INFINITY; 2];
        for (fi, fam) in CopulaFamily::ALL.into_iter().enumerate() {
            for a01 in [1.0, 2.0, 4.0, 8.0] {
                let fit: FitResult = profile_fit(&series, fam, a01, &ProfileConfig::default()).unwrap();
                pass &= (115..=125).contains(&fit.tau);
                best_aic[fi] = best_aic[fi].min(fit.aic);
                detail.push_str(&format!("{fam}:{a01} tau={} aic={:.1}; ", fit.tau, fit.aic));
            }
        }
        pass &= best_aic[0] < best_aic[1];
    }

    if let Some(path) = long {
        let raw = data::read_csv_with(&path, &cols).unwrap();
        let ia = data::interarrival(&raw, 30.0).unwrap();
        let published: Vec<(String, usize)> = PUBLISHED_EXCEEDANCES
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (d, t) = l.split_once(',').unwrap();
                (d.to_string(), t.trim().parse().unwrap())
            })
            .collect();
        let ours: Vec<(String, usize)> = ia.events.iter().map(|e| (e.label.clone(), e.wait)).collect();
        let mismatches: Vec<String> = published
            .iter()
            .zip(&ours)
            .filter(|(p, o)| p != o)
            .take(5)
            .map(|(p, o)| format!("{}:{} vs {}:{}", p.0, p.1, o.0, o.1))
            .collect();
        pass &= ours.len() == 139 && ours == published;
        detail.push_str(&format!("interarrivals={} first_mismatches={mismatches:?}", ours.len()));
    }
    verdict(10, "vix anchors", pass, detail);
}
