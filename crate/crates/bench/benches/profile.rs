use cpcm_bench::design;
use cpcm_core::optimizer::{fit_at_tau, profile_fit, NewtonConfig, ProfileConfig};
use cpcm_core::CopulaFamily;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_at_tau");
    for family in CopulaFamily::ALL {
        let d = design(family, 250, 2);
        group.bench_function(family.to_string(), |b| {
            b.iter(|| fit_at_tau(black_box(&d.series), d.change_point, family, 2.0, None, &NewtonConfig::default()).unwrap())
        });
    }
    group.finish();

    // A full profile is a few hundred inner fits, so keep the sample small.
    let mut group = c.benchmark_group("profile_fit");
    group.sample_size(10);
    for family in CopulaFamily::ALL {
        let d = design(family, 250, 2);
        for (name, warm) in [("warm", true), ("cold", false)] {
            let cfg = ProfileConfig {
                warm_start: warm,
                ..ProfileConfig::default()
            };
            group.bench_function(format!("{family}/{name}"), |b| {
                b.iter(|| profile_fit(black_box(&d.series), family, 2.0, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, fits);
criterion_main!(benches);
