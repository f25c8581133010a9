use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hlreduce_core::eval::{bootstrap_matrices, EvalConfig, EvalData};
use hlreduce_core::synth::{generate, SyntheticConfig};

fn bootstrap(c: &mut Criterion) {
    let data = generate(&SyntheticConfig { users: 2000, dims: 64, ..Default::default() });
    let x = &data.embeddings;
    let eval = EvalData {
        task_name: "synthetic".into(),
        kind: data.kind,
        train_x: x.rows(0, 1200).into_owned(),
        train_y: data.outcomes[..1200].to_vec(),
        test_x: x.rows(1200, 800).into_owned(),
        test_y: data.outcomes[1200..].to_vec(),
    };
    let cfg = EvalConfig::default();

    let mut group = c.benchmark_group("bootstrap_k64");
    for n_ta in [100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(n_ta), &n_ta, |b, &n_ta| {
            b.iter(|| bootstrap_matrices(&eval, "pca", n_ta, 7, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap);
criterion_main!(benches);
