use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeseg::{
    knn_refine, model_forward, project, KnnConfig, LabelImage, ModelConfig, ModelWeights, PointCloud, ProjectionConfig,
};

fn cloud(n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (lo, hi) = ((-24.9f32).to_radians(), 2.9f32.to_radians());
    let (points, remission) = (0..n)
        .map(|_| {
            let (yaw, pitch, r) = (
                rng.random_range(-std::f32::consts::PI..std::f32::consts::PI),
                rng.random_range(lo..hi),
                rng.random_range(2.0..60.0f32),
            );
            let p = [
                r * pitch.cos() * yaw.cos(),
                r * pitch.cos() * yaw.sin(),
                r * pitch.sin(),
            ];
            (p, rng.random_range(0.0..1.0f32))
        })
        .unzip();
    PointCloud::new(points, remission).unwrap()
}

fn projection(c: &mut Criterion) {
    let scan = cloud(120_000);
    let cfg = ProjectionConfig::default();
    c.bench_function("project_120k", |b| b.iter(|| project(black_box(&scan), &cfg).unwrap()));

    let img = project(&scan, &cfg).unwrap();
    let labels = LabelImage::new(cfg.h, cfg.w, (0..cfg.h * cfg.w).map(|k| (k % 20) as u32).collect()).unwrap();
    let knn = KnnConfig::default();
    c.bench_function("knn_refine_120k", |b| {
        b.iter(|| knn_refine(&labels, &img, &scan, &knn).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    // narrow image so one iteration stays well under a second
    let cfg = ModelConfig::default();
    let weights = ModelWeights::init_random(&cfg, 1).unwrap();
    let proj = ProjectionConfig {
        w: 256,
        ..ProjectionConfig::default()
    };
    let x = project(&cloud(20_000), &proj).unwrap().channels;
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    g.bench_function("64x256", |b| {
        b.iter(|| model_forward(black_box(&x), &weights, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, projection, forward);
criterion_main!(benches);
