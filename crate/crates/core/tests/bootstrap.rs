use cpcm_core::bootstrap::{parametric_bootstrap, tau_interval, window_coverage, BootstrapConfig, TauWindow};
use cpcm_core::likelihood::{ChangePoint, ModelParams, Series};
use cpcm_core::optimizer::{profile_fit, FitResult, ProfileConfig};
use cpcm_core::simulate::gen_series;
use cpcm_core::{CopulaFamily, Error};

fn fixture() -> (Series, FitResult) {
    let truth = ModelParams::from_tuples(CopulaFamily::Clayton, (1.8, 1.2), (2.1, 6.0), (2.0, 2.0, 2.0)).unwrap();
    let s = gen_series(&truth, ChangePoint::new(30, 60).unwrap(), 60, 21).unwrap();
    let fit = profile_fit(&s, CopulaFamily::Clayton, 2.0, &ProfileConfig::default()).unwrap();
    (s, fit)
}

fn cfg(b: usize, workers: Option<usize>) -> BootstrapConfig {
    BootstrapConfig {
        replications: b,
        seed: 99,
        workers,
        ..BootstrapConfig::default()
    }
}

#[test]
fn single_replicate_collapses_every_interval() {
    let (s, fit) = fixture();
    let b = parametric_bootstrap(&s, &fit, &cfg(1, None)).unwrap();
    let row = b.replicate_estimates[0];
    for (j, iv) in b.intervals.iter().enumerate() {
        assert_eq!((iv.lo, iv.hi), (row[j + 1], row[j + 1]));
    }
    assert_eq!((b.tau_interval.lo, b.tau_interval.hi), (row[0] as usize, row[0] as usize));
}

#[test]
fn intervals_are_ordered_and_cover_the_level() {
    let (s, fit) = fixture();
    let b = parametric_bootstrap(&s, &fit, &cfg(40, None)).unwrap();
    assert_eq!(b.replicate_estimates.len() + b.failures, 40);
    for iv in &b.intervals {
        assert!(iv.lo <= iv.hi, "{iv:?}");
    }
    let taus = b.tau_replicates();
    assert!(window_coverage(&taus, b.tau_interval.lo, b.tau_interval.hi) >= 0.95);
    assert_eq!((b.tau_interval.lo, b.tau_interval.hi), tau_interval(&taus, 0.95));
    assert_eq!(b.tau_interval.estimate, fit.tau);
    // Every k0 endpoint is one of the replicate values.
    let k0: Vec<f64> = b.replicate_estimates.iter().map(|r| r[1]).collect();
    let iv = b.interval("k0").unwrap();
    assert!(k0.contains(&iv.lo) && k0.contains(&iv.hi));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (s, fit) = fixture();
    let a = parametric_bootstrap(&s, &fit, &cfg(12, Some(1))).unwrap();
    let b = parametric_bootstrap(&s, &fit, &cfg(12, Some(3))).unwrap();
    assert_eq!(a, b);
}

#[test]
fn anchored_window_is_never_shorter() {
    let (s, fit) = fixture();
    let short = parametric_bootstrap(&s, &fit, &cfg(30, None)).unwrap();
    let anchored = parametric_bootstrap(
        &s,
        &fit,
        &BootstrapConfig {
            tau_window: TauWindow::AnchoredAtMin,
            ..cfg(30, None)
        },
    )
    .unwrap();
    let taus = anchored.tau_replicates();
    assert_eq!(anchored.tau_interval.lo, *taus.iter().min().unwrap());
    assert!(anchored.tau_interval.hi - anchored.tau_interval.lo >= short.tau_interval.hi - short.tau_interval.lo);
}

#[test]
fn invalid_configs_are_rejected() {
    let (s, fit) = fixture();
    for level in [0.0, 1.0, -0.5, f64::NAN] {
        let c = BootstrapConfig { level, ..cfg(5, None) };
        assert!(matches!(parametric_bootstrap(&s, &fit, &c), Err(Error::Domain(_))));
    }
    assert!(parametric_bootstrap(&s, &fit, &cfg(0, None)).is_err());
    let short = Series::new(s.values()[..50].to_vec()).unwrap();
    assert!(parametric_bootstrap(&short, &fit, &cfg(5, None)).is_err());
}
