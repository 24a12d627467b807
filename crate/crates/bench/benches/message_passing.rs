use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spg_core::bp::{run_bp, BpOptions};
use spg_core::dynamics::{best_response_run, init_random};
use spg_core::ensemble::{sample_instance, ActivityModel, EnsembleParams};
use spg_core::maxsum::{run_maxsum, MaxSumOptions, Sign};
use spg_core::oracle::enumerate_nash;

fn desk_instance(cap: u32) -> spg_core::game::GameInstance {
    sample_instance(&EnsembleParams {
        n_users: 100,
        n_units: 10,
        capacity: cap,
        edge_prob: 0.5,
        w_min: 2,
        w_max: 5,
        v_min: 1,
        v_max: 4,
        correlation: 0.0,
        seed: 1,
        activity: ActivityModel::AllActive,
    })
    .unwrap()
}

fn bench_bp(c: &mut Criterion) {
    let mut group = c.benchmark_group("bp_converge");
    group.sample_size(20);
    for cap in [20u32, 40] {
        let inst = desk_instance(cap);
        group.bench_with_input(BenchmarkId::from_parameter(cap), &inst, |b, inst| {
            b.iter(|| {
                let opts = BpOptions::default();
                let (ms, report) = run_bp(black_box(inst), 0.0, &opts, None).unwrap();
                black_box((ms.to_user.len(), report.iterations))
            })
        });
    }
    group.finish();
}

fn bench_best_response(c: &mut Criterion) {
    let inst = desk_instance(30);
    c.bench_function("best_response_run", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| {
            let x0 = init_random(&inst, &mut rng);
            let run = best_response_run(&inst, x0, &mut rng, false);
            black_box(run.rounds)
        })
    });
}

fn bench_maxsum(c: &mut Criterion) {
    let inst = desk_instance(35);
    let mut group = c.benchmark_group("maxsum");
    group.sample_size(10);
    group.bench_function("maximize", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = MaxSumOptions {
            restarts: 1,
            ..MaxSumOptions::default()
        };
        b.iter(|| black_box(run_maxsum(&inst, Sign::Maximize, &opts, &mut rng).utility))
    });
    group.finish();
}

fn bench_enumeration(c: &mut Criterion) {
    let inst = sample_instance(&EnsembleParams {
        n_users: 8,
        n_units: 3,
        capacity: 8,
        edge_prob: 0.7,
        w_min: 1,
        w_max: 3,
        v_min: 1,
        v_max: 4,
        correlation: 0.0,
        seed: 4,
        activity: ActivityModel::AllActive,
    })
    .unwrap();
    c.bench_function("enumerate_nash_small", |b| {
        b.iter(|| black_box(enumerate_nash(&inst, None, 1e7).unwrap().count))
    });
}

criterion_group!(
    benches,
    bench_bp,
    bench_best_response,
    bench_maxsum,
    bench_enumeration
);
criterion_main!(benches);
