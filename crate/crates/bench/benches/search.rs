//! Exact scan vs IVF probe latency on synthetic unit vectors.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use semstack_core::index::{EmbeddingIndex, IvfParams};

const DIM: usize = 64;
const K: usize = 10;

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn flat_rows<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<f32> {
    let mut rows = Vec::with_capacity(n * dim);
    for _ in 0..n {
        rows.extend(unit_vector(rng, dim).into_iter().map(|x| x as f32));
    }
    rows
}

fn bench_knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let queries: Vec<Vec<f64>> = (0..64).map(|_| unit_vector(&mut rng, DIM)).collect();
    let mut group = c.benchmark_group("knn");
    for &n in &[10_000usize, 50_000] {
        let ids: Vec<u64> = (0..n as u64).collect();
        let vectors = flat_rows(&mut rng, n, DIM);
        let exact = EmbeddingIndex::build_exact(ids.clone(), vectors.clone(), DIM).unwrap();
        let ivf = EmbeddingIndex::build_ivf(
            ids,
            vectors,
            DIM,
            &IvfParams { n_clusters: None, nprobe: None },
            17,
        )
        .unwrap();
        for (label, index) in [("exact", &exact), ("ivf", &ivf)] {
            group.bench_with_input(BenchmarkId::new(label, n), index, |b, index| {
                let mut i = 0;
                b.iter(|| {
                    i = (i + 1) % queries.len();
                    black_box(index.search(&queries[i], K, None).unwrap())
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_knn);
criterion_main!(benches);
