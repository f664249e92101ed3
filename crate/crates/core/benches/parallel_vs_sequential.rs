//! Compares the rayon-backed kernels against the sequential fallback on
//! the three data-parallel hot paths: concordance pair counting, cohort
//! generation, and batch curve prediction. Both paths produce
//! bit-identical results; only throughput differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use survbench_core::exec::Mode;
use survbench_core::metrics::{concordance_td_with, RiskScores, Weighting};
use survbench_core::neural::{
    predict_curves_with, Architecture, EncoderKind, FusionNet, LossKind, NetInput, WaveInput,
};
use survbench_core::rng::Pcg;
use survbench_core::survival::{SurvivalCurve, TimeGrid, GRID_POINTS};
use survbench_core::synthetic::{generate_with, SyntheticSpec};

fn modes() -> Vec<(&'static str, Mode)> {
    let mut out = vec![("sequential", Mode::Sequential)];
    if cfg!(feature = "parallel") {
        out.push(("parallel", Mode::Parallel));
    }
    out
}

fn bench_concordance(c: &mut Criterion) {
    let mut rng = Pcg::seeded(1);
    let n = 2000;
    let grid = TimeGrid::uniform(1000.0).unwrap();
    let curves: Vec<SurvivalCurve> = (0..n)
        .map(|_| {
            let mut s = 1.0;
            let values: Vec<f64> = (0..GRID_POINTS)
                .map(|_| {
                    s *= 1.0 - rng.f64() * 0.03;
                    s
                })
                .collect();
            SurvivalCurve::new(values, &grid).unwrap()
        })
        .collect();
    let times: Vec<f64> = (0..n).map(|_| rng.range(1.0, 1100.0)).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();

    let mut group = c.benchmark_group("concordance_td");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                concordance_td_with(
                    &RiskScores::Curves { grid: &grid, curves: &curves },
                    &times,
                    &events,
                    Weighting::Km,
                    mode,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let spec = SyntheticSpec {
        n: 500,
        beta: vec![0.0, 0.5],
        gamma: 1.0,
        weibull_shape: 1.2,
        weibull_scale: 900.0,
        censor_max: 2500.0,
        seed: 7,
    };
    let mut group = c.benchmark_group("synthetic_generate");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| generate_with(&spec, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_prediction(c: &mut Criterion) {
    let mut rng = Pcg::seeded(3);
    let mut net = FusionNet::new(Architecture {
        encoder: EncoderKind::TabularZero,
        covariate_dim: 2,
        head_dim: GRID_POINTS,
    })
    .unwrap();
    for p in net.params.iter_mut() {
        *p = 0.1 * rng.normal();
    }
    let inputs: Vec<NetInput> = (0..5000)
        .map(|_| NetInput {
            wave: WaveInput::None,
            covariates: vec![rng.normal(), rng.normal()],
        })
        .collect();
    let grid = TimeGrid::uniform(1000.0).unwrap();

    let mut group = c.benchmark_group("predict_curves");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                predict_curves_with(&net, &inputs, &grid, LossKind::Mtlr, None, mode).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_concordance, bench_generation, bench_prediction);
criterion_main!(benches);
