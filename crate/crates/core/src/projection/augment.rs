use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PointCloud;
use crate::error::{Error, Result};

/// Rigid rotation about the vertical axis by `angle` radians.
pub fn rotate_z(cloud: &PointCloud, angle: f32) -> PointCloud {
    let (s, c) = angle.sin_cos();
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
            .collect(),
        remission: cloud.remission.clone(),
    }
}

/// Mirrors the scan across the x-z plane.
pub fn flip_y(cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| [p[0], -p[1], p[2]]).collect(),
        remission: cloud.remission.clone(),
    }
}

/// Keeps each point independently with probability `keep_prob`.
pub fn dropout(cloud: &PointCloud, keep_prob: f64, seed: u64) -> Result<PointCloud> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::param(
            "keep_prob",
            format!("must lie in (0, 1], got {keep_prob}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PointCloud {
        points: Vec::with_capacity(cloud.len()),
        remission: Vec::with_capacity(cloud.len()),
    };
    for (p, r) in cloud.points.iter().zip(&cloud.remission) {
        // one draw per point even when keep_prob is 1, so streams stay aligned
        let u: f64 = rng.random();
        if u < keep_prob {
            out.points.push(*p);
            out.remission.push(*r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(
            (0..100).map(|i| [i as f32 * 0.1, 1.0 - i as f32 * 0.03, 0.5]).collect(),
            (0..100).map(|i| i as f32 / 100.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let c = cloud();
        assert_eq!(rotate_z(&c, 0.0), c);
    }

    #[test]
    fn half_turn() {
        let c = PointCloud::new(vec![[1.0, 0.0, 0.0]], vec![0.3]).unwrap();
        let r = rotate_z(&c, std::f32::consts::PI);
        let p = r.points[0];
        assert!((p[0] + 1.0).abs() < 1e-6 && p[1].abs() < 1e-6 && p[2] == 0.0);
        assert_eq!(r.remission, vec![0.3]);
    }

    #[test]
    fn flip_negates_y_only() {
        let c = cloud();
        let f = flip_y(&c);
        for (a, b) in c.points.iter().zip(&f.points) {
            assert_eq!([a[0], -a[1], a[2]], *b);
        }
        assert_eq!(flip_y(&f), c);
    }

    #[test]
    fn dropout_behaviour() {
        let c = cloud();
        assert_eq!(dropout(&c, 1.0, 7).unwrap(), c);
        let a = dropout(&c, 0.5, 7).unwrap();
        assert_eq!(a, dropout(&c, 0.5, 7).unwrap());
        assert!(a.len() > 20 && a.len() < 80);
        assert_eq!(a.points.len(), a.remission.len());
        assert!(dropout(&c, 0.0, 1).is_err());
        assert!(dropout(&c, 1.5, 1).is_err());
    }
}
