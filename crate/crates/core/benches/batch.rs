use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hpsfde::integrator::run_batch_with;
use hpsfde::{Execution, IntegratorConfig, Preset, Regime};

fn batch(c: &mut Criterion) {
    let model = Preset::Example34.default_model();
    let cfg = IntegratorConfig::new(3.0, 0.01);
    let mut group = c.benchmark_group("example_3_4_batch");
    group.sample_size(10);
    for n in [64usize, 256] {
        group.throughput(Throughput::Elements(n as u64));
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| run_batch_with(&model, &cfg, n, Regime::new(1), 7, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
