use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qfeedback::trajectories::{run_ensemble_with, EnsembleSpec, Execution};

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for n_traj in [16usize, 128] {
        let spec = EnsembleSpec {
            n_traj,
            tau_end: 5.0,
            ..EnsembleSpec::fig3(7)
        };
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n_traj), &spec, |b, spec| {
                b.iter(|| run_ensemble_with(spec, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
