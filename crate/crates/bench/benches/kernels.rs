use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcul_bench::{random_matrix, server_fixture, spd, P};
use fcul_core::coordinator::{run_round_a, run_round_b};
use fcul_core::inverse::{feasibility_check, ResetPolicy};
use fcul_core::linalg::{cholesky_spd, symmetric_eig, thin_qr_rfactor};
use std::hint::black_box;

fn factorizations(c: &mut Criterion) {
    let mut group = c.benchmark_group("factor");
    for d in [32, 64, 128, 256] {
        let h = spd(1, d);
        group.bench_with_input(BenchmarkId::new("cholesky", d), &h, |b, h| {
            b.iter(|| cholesky_spd(black_box(h), P).unwrap())
        });
        let f = random_matrix(2, 8, d);
        group.bench_with_input(BenchmarkId::new("qr_r8", d), &f, |b, f| b.iter(|| thin_qr_rfactor(black_box(f), P)));
    }
    for d in [16, 32, 64] {
        let h = spd(3, d);
        group.bench_with_input(BenchmarkId::new("jacobi_eig", d), &h, |b, h| {
            b.iter(|| symmetric_eig(black_box(h)).unwrap())
        });
    }
    group.finish();
}

/// One add+delete round of rank 8: Cholesky re-solve against two
/// Woodbury updates of the tracked inverse.
fn server_rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("round_r8");
    group.sample_size(20);
    for d in [64, 128, 256] {
        let fx = server_fixture(d, 10, 2 * d, 8);
        group.bench_function(BenchmarkId::new("variant_a", d), |b| {
            b.iter(|| run_round_a(black_box(&fx.ledger), black_box(&fx.round_a)).unwrap())
        });
        let policy = ResetPolicy {
            audit_every: 0,
            ..ResetPolicy::default()
        };
        group.bench_function(BenchmarkId::new("variant_b", d), |b| {
            b.iter(|| run_round_b(black_box(&fx.ledger), black_box(&fx.state), black_box(&fx.round_b), &policy).unwrap())
        });
        let u = fx.round_b.u_minus.clone().expect("delete factor");
        group.bench_function(BenchmarkId::new("feasibility", d), |b| {
            b.iter(|| feasibility_check(black_box(fx.state.t()), black_box(&u)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, factorizations, server_rounds);
criterion_main!(benches);
