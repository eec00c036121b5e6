use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use specstab::experiments::{gaussian_similarity, reduced_chain_model, sample_centers, CentersSpec};
use specstab::{compute_sda, eig_symmetric, kmeans, laplacian, spectral_embed, spectral_gap, OuterConfig};

fn centers_graph() -> specstab::WeightMatrix {
    let spec = CentersSpec::six_centers(0.25, 1);
    let points = sample_centers(&spec).unwrap();
    gaussian_similarity(&points, spec.alpha, spec.weight_tol).unwrap()
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigen");
    for mu in [2.0, 50.0] {
        let w = reduced_chain_model(8, mu, 100.0).unwrap();
        let l = laplacian(&w);
        group.bench_with_input(BenchmarkId::new("full_chain16", mu), &l, |b, l| b.iter(|| eig_symmetric(black_box(l)).unwrap()));
    }
    let w = centers_graph();
    group.bench_function("gap_centers120_k6", |b| b.iter(|| spectral_gap(black_box(&w), 6).unwrap()));
    group.finish();
}

fn sda(c: &mut Criterion) {
    let mut group = c.benchmark_group("sda");
    group.sample_size(10);
    let config = OuterConfig::default();
    for (mu, k) in [(2.0, 8), (40.0, 7)] {
        let w = reduced_chain_model(8, mu, 100.0).unwrap();
        group.bench_with_input(BenchmarkId::new("chain", format!("mu{mu}_k{k}")), &w, |b, w| {
            b.iter(|| compute_sda(black_box(w), k, &config).unwrap())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let w = centers_graph();
    let emb = spectral_embed(&w, 6).unwrap();
    c.bench_function("kmeans_centers120_k6", |b| b.iter(|| kmeans(black_box(&emb.rows), 6, 0).unwrap()));
}

criterion_group!(benches, eigen, sda, clustering);
criterion_main!(benches);
