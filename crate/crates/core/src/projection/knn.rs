use super::{unproject, LabelImage, PointCloud, RangeImage};
use crate::error::{Error, Result};

/// Range-gated neighborhood voting used to refine back-projected labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    /// Side of the square search window, odd.
    pub window: usize,
    /// Maximum `|r_point - r_pixel|` in meters for a pixel to vote.
    pub range_cutoff: f32,
    /// Width of the Gaussian that weights votes by range difference.
    pub gaussian_sigma: f32,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            window: 5,
            range_cutoff: 1.0,
            gaussian_sigma: 1.0,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("knn.k", "must be >= 1"));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::param("knn.window", "must be odd and >= 1"));
        }
        if !(self.range_cutoff > 0.0) {
            return Err(Error::param("knn.range_cutoff", "must be positive"));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::param("knn.gaussian_sigma", "must be positive"));
        }
        Ok(())
    }
}

/// Relabels each point by a Gaussian-weighted vote among the `k` occupied
/// pixels of its window whose range is closest to the point's own.
///
/// Candidates tie on range difference in window scan order (row-major), vote
/// ties go to the smallest class id, and points with no candidate inside the
/// cutoff keep their back-projected label.
pub fn knn_refine(labels: &LabelImage, img: &RangeImage, cloud: &PointCloud, cfg: &KnnConfig) -> Result<Vec<u32>> {
    cfg.validate()?;
    let base = unproject(labels, img)?;
    if cloud.len() != img.num_points() {
        return Err(Error::shape(
            "knn_refine",
            format!("cloud has {} points, range image {}", cloud.len(), img.num_points()),
        ));
    }
    let (h, w) = (img.height() as isize, img.width() as isize);
    let half = (cfg.window / 2) as isize;
    let two_sigma_sq = 2.0 * (cfg.gaussian_sigma as f64).powi(2);
    let num_votes = labels.ids.iter().max().map_or(1, |m| *m as usize + 1);

    let mut cand: Vec<(f32, usize)> = Vec::with_capacity(cfg.window * cfg.window);
    let mut votes = vec![0.0f64; num_votes];
    let mut out = Vec::with_capacity(base.len());
    for (i, &(row, col)) in img.pixel_of_point.iter().enumerate() {
        let r = cloud.range(i);
        cand.clear();
        for dy in -half..=half {
            let y = row as isize + dy;
            if y < 0 || y >= h {
                continue;
            }
            for dx in -half..=half {
                let x = col as isize + dx;
                if x < 0 || x >= w {
                    continue;
                }
                let k = (y * w + x) as usize;
                if !img.mask[k] {
                    continue;
                }
                let d = (r - img.raw_range[k]).abs();
                if d <= cfg.range_cutoff {
                    cand.push((d, k));
                }
            }
        }
        if cand.is_empty() {
            out.push(base[i]);
            continue;
        }
        // stable: equal distances keep scan order
        cand.sort_by(|a, b| a.0.total_cmp(&b.0));
        votes.iter_mut().for_each(|v| *v = 0.0);
        for &(d, k) in cand.iter().take(cfg.k) {
            let d = d as f64;
            votes[labels.ids[k] as usize] += (-d * d / two_sigma_sq).exp();
        }
        let mut best = 0;
        for (c, v) in votes.iter().enumerate() {
            if *v > votes[best] {
                best = c;
            }
        }
        out.push(best as u32);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{project, ProjectionConfig};
    use super::*;

    fn small_cfg() -> ProjectionConfig {
        ProjectionConfig {
            h: 8,
            w: 16,
            ..ProjectionConfig::default()
        }
    }

    fn scan() -> PointCloud {
        let pts: Vec<[f32; 3]> = (0..40)
            .map(|i| {
                let a = i as f32 * 0.157;
                let r = 5.0 + (i % 7) as f32 * 0.4;
                [r * a.cos(), r * a.sin(), -0.5 + (i % 5) as f32 * 0.2]
            })
            .collect();
        PointCloud::new(pts, vec![0.2; 40]).unwrap()
    }

    #[test]
    fn unit_window_matches_unproject() {
        let cloud = scan();
        let img = project(&cloud, &small_cfg()).unwrap();
        let labels = LabelImage::new(8, 16, (0..128).map(|i| (i * 7 % 5) as u32).collect()).unwrap();
        let cfg = KnnConfig {
            k: 1,
            window: 1,
            ..KnnConfig::default()
        };
        assert_eq!(
            knn_refine(&labels, &img, &cloud, &cfg).unwrap(),
            unproject(&labels, &img).unwrap()
        );
    }

    #[test]
    fn uniform_labels_stay_uniform() {
        let cloud = scan();
        let img = project(&cloud, &small_cfg()).unwrap();
        let labels = LabelImage::filled(8, 16, 3);
        let out = knn_refine(&labels, &img, &cloud, &KnnConfig::default()).unwrap();
        assert!(out.iter().all(|l| *l == 3));
    }

    #[test]
    fn occluded_point_takes_range_matched_neighbor() {
        // two points in one pixel: the far one is hidden behind the near one,
        // and its range matches a pixel in the neighboring column
        let cfg = ProjectionConfig {
            h: 3,
            w: 3,
            ..ProjectionConfig::default()
        };
        let near = [2.0f32, 0.0, -0.25];
        let far = [8.0f32, 0.0, -1.0];
        let cloud0 = PointCloud::new(vec![near, far], vec![0.0; 2]).unwrap();
        let img0 = project(&cloud0, &cfg).unwrap();
        assert_eq!(img0.pixel_of_point[0], img0.pixel_of_point[1]);
        let (row, col) = img0.pixel_of_point[0];
        // place a third point one column over at the far point's range
        let theta = -std::f32::consts::PI * 2.0 / 3.0 * 0.5;
        let (s, c) = theta.sin_cos();
        let neighbor = [far[0] * c - far[1] * s, far[0] * s + far[1] * c, far[2]];
        let cloud = PointCloud::new(vec![near, far, neighbor], vec![0.0; 3]).unwrap();
        let img = project(&cloud, &cfg).unwrap();
        let nb = img.pixel_of_point[2];
        assert_eq!(nb.0, row);
        assert_ne!(nb.1, col);
        let mut labels = LabelImage::filled(3, 3, 0);
        labels.ids[row as usize * 3 + col as usize] = 1;
        labels.ids[nb.0 as usize * 3 + nb.1 as usize] = 2;
        let cfg = KnnConfig {
            k: 1,
            window: 3,
            range_cutoff: 1.0,
            gaussian_sigma: 1.0,
        };
        let out = knn_refine(&labels, &img, &cloud, &cfg).unwrap();
        assert_eq!(out, vec![1, 2, 2]);
        assert_eq!(unproject(&labels, &img).unwrap(), vec![1, 1, 2]);
    }

    #[test]
    fn invalid_config() {
        let cfg = KnnConfig {
            window: 4,
            ..KnnConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(KnnConfig {
            k: 0,
            ..KnnConfig::default()
        }
        .validate()
        .is_err());
    }
}
