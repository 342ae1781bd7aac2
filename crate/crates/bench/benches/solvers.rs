use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wprelay_bench::{drop_at, source_relaxation, warmed};
use wprelay_core::diag::{self, DiagVariant};
use wprelay_core::joint::{self, IterConfig, OptScheme};
use wprelay_core::sdp::{self, SdpOptions};
use wprelay_core::source::SourceFactors;
use wprelay_core::relay;

fn subproblems(c: &mut Criterion) {
    let mut g = c.benchmark_group("subproblem");
    for r in [2, 4] {
        let (st, ch, p) = warmed(r, 7);
        g.bench_with_input(BenchmarkId::new("relay_step", r), &r, |b, _| {
            b.iter(|| relay::relay_step(black_box(&st), &ch, &p).unwrap())
        });
        let factors = SourceFactors::build(&st, &ch, &p).unwrap();
        g.bench_with_input(BenchmarkId::new("source_dual", r), &r, |b, _| {
            b.iter(|| black_box(&factors).solve_dual())
        });
        let problem = source_relaxation(r, 7).to_sdp().unwrap();
        let opts = SdpOptions::default();
        g.bench_with_input(BenchmarkId::new("source_sdp", r), &r, |b, _| {
            b.iter(|| sdp::solve_sdp(black_box(&problem), &opts))
        });
    }
    let lambda_dr = [0.3, 1.1, 2.5, 7.0];
    let z = [0.2, 0.05, 1.3, 0.7];
    g.bench_function("water_fill", |b| b.iter(|| diag::water_fill(black_box(&lambda_dr), &z, 2.0)));
    g.finish();
}

fn schemes(c: &mut Criterion) {
    let mut g = c.benchmark_group("scheme");
    g.sample_size(10);
    let (ch, p) = drop_at(4, 11);
    let cfg = IterConfig {
        max_iters: 50,
        ..IterConfig::new(OptScheme::EfaOpt)
    };
    g.bench_function("efa_opt_50_iterations", |b| b.iter(|| joint::run_joint_opt(black_box(&ch), &p, &cfg).unwrap()));
    g.bench_function("efa_s1", |b| {
        b.iter(|| diag::run_efa_s(black_box(&ch), &p, DiagVariant::S1, 1e-4, 500).unwrap())
    });
    g.bench_function("efa_s2", |b| {
        b.iter(|| diag::run_efa_s(black_box(&ch), &p, DiagVariant::S2, 1e-4, 500).unwrap())
    });
    g.bench_function("nefa_s", |b| b.iter(|| diag::run_nefa_s(black_box(&ch), &p).unwrap()));
    g.finish();
}

criterion_group!(benches, subproblems, schemes);
criterion_main!(benches);
