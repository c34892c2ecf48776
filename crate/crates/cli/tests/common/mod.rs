#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeseg::kitti::write_scan;
use rangeseg::PointCloud;

/// Points spread over the default sensor field of view.
pub fn synthetic_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((-24.9f64).to_radians(), 2.9f64.to_radians());
    let mut points = Vec::with_capacity(n);
    let mut remission = Vec::with_capacity(n);
    for _ in 0..n {
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pitch = rng.random_range(lo..hi);
        let r = rng.random_range(2.0..60.0);
        points.push([
            (r * pitch.cos() * yaw.cos()) as f32,
            (r * pitch.cos() * yaw.sin()) as f32,
            (r * pitch.sin()) as f32,
        ]);
        remission.push(rng.random_range(0.0..1.0));
    }
    PointCloud::new(points, remission).unwrap()
}

pub fn write_synthetic_scan(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    write_scan(&path, &synthetic_cloud(n, seed)).unwrap();
    path
}

pub fn rangeseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangeseg"))
        .args(args)
        .env_remove("RANGESEG_THREADS")
        .output()
        .expect("spawn rangeseg")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
