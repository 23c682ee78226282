use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use miscorr::bootstrap::{bootstrap_single, BootstrapOptions};
use miscorr::mcmc::{mcmc_fit_single, McmcOptions, Prior, PriorSpec};
use miscorr::mediation::{em_fit_mediation, ols_correct, pvw_fit, OutcomeDist};
use miscorr::roc::{adjusted_roc, default_cutoffs};
use miscorr::single::{e_step_weights, em_fit};
use miscorr::twostage::em_fit_2stage;
use miscorr::{Accel, EmOptions};
use miscorr_bench::{mediation_data, single_data, twostage_data};

fn opts(accel: Accel) -> EmOptions {
    EmOptions {
        accel,
        compute_se: false,
        ..EmOptions::default()
    }
}

fn em(c: &mut Criterion) {
    let mut g = c.benchmark_group("em_single");
    g.sample_size(10);
    for n in [1_000, 10_000] {
        let d = single_data(n);
        for (name, accel) in [("plain", Accel::Plain), ("squarem", Accel::Squarem)] {
            g.bench_with_input(BenchmarkId::new(name, n), &d, |b, d| {
                b.iter(|| em_fit(black_box(d), None, &opts(accel)).unwrap())
            });
        }
    }
    g.finish();

    let d = twostage_data(5_000);
    c.bench_function("em_twostage_5000", |b| {
        b.iter(|| em_fit_2stage(black_box(&d), None, &opts(Accel::Squarem)).unwrap())
    });
}

fn mediation(c: &mut Criterion) {
    let d = mediation_data(5_000);
    let o = opts(Accel::Squarem);
    let mut g = c.benchmark_group("mediation_5000");
    g.sample_size(10);
    g.bench_function("em", |b| {
        b.iter(|| em_fit_mediation(black_box(&d), None, OutcomeDist::Normal, false, &o).unwrap())
    });
    g.bench_function("pvw", |b| b.iter(|| pvw_fit(black_box(&d), None, OutcomeDist::Normal, false, &o).unwrap()));
    g.bench_function("ols", |b| b.iter(|| ols_correct(black_box(&d), None, false, &o).unwrap()));
    g.finish();
}

fn mcmc(c: &mut Criterion) {
    let d = single_data(2_000);
    let prior = PriorSpec::iid(Prior::Normal { mean: 0.0, sd: 10.0 }, 4);
    let o = McmcOptions {
        n_samples: 500,
        burn_in: 250,
        ..McmcOptions::default()
    };
    let mut g = c.benchmark_group("mcmc");
    g.sample_size(10);
    g.bench_function("single_2000", |b| b.iter(|| mcmc_fit_single(black_box(&d), &prior, &o).unwrap()));
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let d = single_data(2_000);
    let o = opts(Accel::Squarem);
    let fit = em_fit(&d, None, &o).unwrap();
    let bo = BootstrapOptions {
        replicates: 50,
        workers: 1,
        seed: 0,
    };
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("single_2000_b50", |b| {
        b.iter(|| bootstrap_single(black_box(&d), &fit.params, &o, &bo).unwrap())
    });
    g.finish();
}

fn roc(c: &mut Criterion) {
    let d = single_data(10_000);
    let fit = em_fit(&d, None, &opts(Accel::Squarem)).unwrap();
    let w = e_step_weights(&fit.params, &d).unwrap();
    let risk: Vec<f64> = w.iter().map(|p| p[0]).collect();
    let cut = default_cutoffs();
    c.bench_function("adjusted_roc_10000", |b| b.iter(|| adjusted_roc(black_box(&risk), &w, &cut).unwrap()));
}

criterion_group!(benches, em, mediation, mcmc, bootstrap, roc);
criterion_main!(benches);
