use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kmeans_sdp::model_gen::{cutoff_threshold, place_centers, sample_dataset};
use kmeans_sdp::nalgebra::DMatrix;
use kmeans_sdp::solver::{build_affinity, project_psd_trace, project_rowsum_nonneg, solve_sdp};
use kmeans_sdp::{AffinityMatrix, MixtureSpec, PlacementMode, SolverConfig};
use std::hint::black_box;

fn instance(n: usize, ratio: f64, seed: u64) -> AffinityMatrix {
    let p = 50;
    let delta2 = ratio * cutoff_threshold(n, 2, p, 1.0).unwrap();
    let c = place_centers(PlacementMode::Orthogonal, 2, p, delta2, seed).unwrap();
    let data = sample_dataset(&c, &MixtureSpec::equal(n, 2, 1.0, seed).unwrap()).unwrap();
    build_affinity(&data.x).unwrap()
}

fn projections(c: &mut Criterion) {
    let mut group = c.benchmark_group("projection");
    for n in [50usize, 100, 200] {
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.4);
        let m = (&m + m.transpose()) * 0.5;
        group.bench_with_input(BenchmarkId::new("psd_trace", n), &m, |b, m| {
            b.iter(|| project_psd_trace(black_box(m), 2.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rowsum_nonneg", n), &m, |b, m| {
            b.iter(|| project_rowsum_nonneg(black_box(m)))
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_sdp");
    group.sample_size(10);
    for n in [50usize, 100] {
        let a = instance(n, 2.0, 1);
        group.bench_with_input(BenchmarkId::new("ratio2", n), &a, |b, a| {
            b.iter(|| solve_sdp(black_box(a), 2, &SolverConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, projections, solve);
criterion_main!(benches);
