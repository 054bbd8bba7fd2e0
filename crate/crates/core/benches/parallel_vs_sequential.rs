use std::hint::black_box;

use chsh_selftest::simulator::{linspace, simulate_with, sweep_angle, NullSink};
use chsh_selftest::tomography::{simulate_tomography, ConfusionMatrix};
use chsh_selftest::{DensityMatrix, Execution, ExperimentConfig, NoiseModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const SCHEDULES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for n in [1u64 << 18, 1 << 20] {
        let config = ExperimentConfig::new(n, 1, NoiseModel::lab());
        group.throughput(Throughput::Elements(n));
        for (name, exec) in SCHEDULES {
            group.bench_with_input(BenchmarkId::new(name, n), &config, |b, cfg| {
                b.iter(|| simulate_with(black_box(cfg), NullSink, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep_angle");
    group.sample_size(10);
    let thetas: Vec<f64> = linspace(0.0, 360.0, 29).into_iter().map(f64::to_radians).collect();
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| {
            b.iter(|| sweep_angle(&NoiseModel::lab(), black_box(&thetas), 36_157, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn tomography(c: &mut Criterion) {
    let mut group = c.benchmark_group("tomography");
    group.sample_size(10);
    let rho = DensityMatrix::werner(0.859).unwrap();
    let conf = [
        ConfusionMatrix::from_readout_fidelity(0.989).unwrap(),
        ConfusionMatrix::from_readout_fidelity(0.972).unwrap(),
    ];
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| {
            b.iter(|| simulate_tomography(black_box(&rho), 100_000, &conf, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trials, sweep, tomography);
criterion_main!(benches);
