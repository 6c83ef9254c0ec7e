use criterion::{criterion_group, criterion_main, Criterion};
use hyperising::diagnostics::population_fisher;
use hyperising::regression::lambda_practice;
use hyperising::sampler::{gibbs_sweep, rng_from_seed};
use hyperising::{
    draw_samples, run_pipeline, solve_l1, GibbsConfig, LambdaMode, PipelineOptions, Scan, SolveOptions,
};
use hyperising_bench::{regular_model, samples};

fn node_solve(c: &mut Criterion) {
    let t = regular_model(32, 3, 3, 1);
    let s = samples(&t, 372, 2);
    let opts = SolveOptions::default();
    let lam = lambda_practice(372, 32, 3, 2.0).unwrap();
    c.bench_function("solve_l1 p=32 k=3 n=372", |b| b.iter(|| solve_l1(&s, 3, 0, lam, &opts).unwrap()));
}

fn gibbs(c: &mut Criterion) {
    let t = regular_model(32, 3, 3, 3);
    c.bench_function("gibbs sweep p=32 k=3", |b| {
        let mut rng = rng_from_seed(4);
        let mut x = vec![1i8; 32];
        b.iter(|| gibbs_sweep(&t, &mut x, &mut rng, Scan::Systematic).unwrap())
    });
    c.bench_function("draw_samples p=32 n=1000", |b| {
        b.iter(|| draw_samples(&t, 1000, &GibbsConfig::with_seed(5)).unwrap())
    });
}

fn fisher(c: &mut Criterion) {
    let t = regular_model(12, 3, 3, 6);
    c.bench_function("population_fisher p=12 k=3", |b| b.iter(|| population_fisher(&t, 0).unwrap()));
}

fn pipeline(c: &mut Criterion) {
    let t = regular_model(32, 3, 3, 7);
    let s = samples(&t, 186, 8);
    let fixed = PipelineOptions {
        lambda_mode: LambdaMode::Fixed { lambda: 1.5 },
        ..PipelineOptions::default()
    };
    let mut group = c.benchmark_group("pipeline p=32 n=186");
    group.sample_size(10);
    group.bench_function("fixed lambda", |b| {
        b.iter(|| run_pipeline(&s, 3, Some(&t), &fixed).unwrap())
    });
    group.bench_function("practice lambda", |b| {
        b.iter(|| run_pipeline(&s, 3, Some(&t), &PipelineOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, node_solve, gibbs, fisher, pipeline);
criterion_main!(benches);
