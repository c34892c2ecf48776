//! Spherical projection of LiDAR scans into range images, and the way back
//! from per-pixel predictions to per-point labels.

mod augment;
mod knn;

pub use augment::{dropout, flip_y, rotate_z};
pub use knn::{knn_refine, KnnConfig};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Channels of a projected scan, in order.
pub const RANGE_CHANNELS: [&str; 5] = ["range", "x", "y", "z", "remission"];

/// A LiDAR sweep: Cartesian coordinates in meters plus remission.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub remission: Vec<f32>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>, remission: Vec<f32>) -> Result<Self> {
        if points.len() != remission.len() {
            return Err(Error::shape(
                "PointCloud::new",
                format!("{} points but {} remission values", points.len(), remission.len()),
            ));
        }
        Ok(Self { points, remission })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn range(&self, i: usize) -> f32 {
        range_of(self.points[i])
    }

    /// Indices of points that cannot be projected: non-finite or at the origin.
    pub fn degenerate_points(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.iter().all(|v| v.is_finite()) || range_of(**p) <= 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn range_of(p: [f32; 3]) -> f32 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Image geometry and input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    pub h: usize,
    pub w: usize,
    /// Upper edge of the vertical field of view, radians above the horizon.
    pub fov_up: f64,
    /// Lower edge of the vertical field of view, radians (negative below the horizon).
    pub fov_down: f64,
    pub channel_means: [f32; 5],
    pub channel_stds: [f32; 5],
}

impl Default for ProjectionConfig {
    /// 64 x 2048 image over a +3 / -25 degree field of view, no standardization.
    fn default() -> Self {
        Self {
            h: 64,
            w: 2048,
            fov_up: 3f64.to_radians(),
            fov_down: (-25f64).to_radians(),
            channel_means: [0.0; 5],
            channel_stds: [1.0; 5],
        }
    }
}

impl ProjectionConfig {
    /// Total vertical field of view `f_up + |f_down|`.
    pub fn fov(&self) -> f64 {
        self.fov_up + self.fov_down.abs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.h < 2 {
            return Err(Error::param("h", "must be >= 2"));
        }
        if self.w < 2 {
            return Err(Error::param("w", "must be >= 2"));
        }
        if !(self.fov() > 0.0) {
            return Err(Error::param("fov", "total vertical field of view must be positive"));
        }
        if let Some(i) = self.channel_stds.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::param(format!("channel_stds[{i}]"), "must be strictly positive"));
        }
        Ok(())
    }

    /// Continuous image coordinates `(u, v)` = (column, row) of a point with range `r > 0`.
    pub fn image_coords(&self, p: [f32; 3], r: f32) -> (f64, f64) {
        let (x, y, z, r) = (p[0] as f64, p[1] as f64, p[2] as f64, r as f64);
        let u = 0.5 * (1.0 - y.atan2(x) / std::f64::consts::PI) * self.w as f64;
        let pitch = (z / r).clamp(-1.0, 1.0).asin();
        let v = (1.0 - (pitch + self.fov_down.abs()) / self.fov()) * self.h as f64;
        (u, v)
    }

    /// Integer pixel `(row, col)`: floored, then clamped into the image.
    pub fn pixel_of(&self, p: [f32; 3], r: f32) -> (u32, u32) {
        let (u, v) = self.image_coords(p, r);
        let col = u.floor().clamp(0.0, (self.w - 1) as f64) as u32;
        let row = v.floor().clamp(0.0, (self.h - 1) as f64) as u32;
        (row, col)
    }
}

/// A projected scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    /// `1 x 5 x h x w`, channel order [`RANGE_CHANNELS`], standardized; zero where empty.
    pub channels: Tensor4,
    /// Unstandardized range of the retained point per pixel; zero where empty.
    pub raw_range: Vec<f32>,
    /// Row-major `h x w`; true where at least one point landed.
    pub mask: Vec<bool>,
    /// `(row, col)` for every input point.
    pub pixel_of_point: Vec<(u32, u32)>,
    /// Index of the nearest point that landed in each pixel.
    pub point_of_pixel: Vec<Option<u32>>,
}

impl RangeImage {
    pub fn height(&self) -> usize {
        self.channels.shape().h
    }

    pub fn width(&self) -> usize {
        self.channels.shape().w
    }

    pub fn num_points(&self) -> usize {
        self.pixel_of_point.len()
    }

    fn flat(&self, (row, col): (u32, u32)) -> usize {
        row as usize * self.width() + col as usize
    }
}

/// Projects a scan into a range image, keeping the nearest point per pixel.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<RangeImage> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::param("cloud", "cannot project an empty point cloud"));
    }
    let bad = cloud.degenerate_points();
    if !bad.is_empty() {
        return Err(Error::DegeneratePoints {
            count: bad.len(),
            indices: bad,
        });
    }
    let (h, w) = (cfg.h, cfg.w);
    let mut point_of_pixel: Vec<Option<u32>> = vec![None; h * w];
    let mut raw_range = vec![0.0f32; h * w];
    let mut pixel_of_point = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let r = range_of(*p);
        let px = cfg.pixel_of(*p, r);
        pixel_of_point.push(px);
        let k = px.0 as usize * w + px.1 as usize;
        // strict comparison: the earliest point wins exact range ties
        if point_of_pixel[k].is_none() || r < raw_range[k] {
            point_of_pixel[k] = Some(i as u32);
            raw_range[k] = r;
        }
    }

    let mut channels = Tensor4::zeros(Shape4::new(1, 5, h, w))?;
    let mask: Vec<bool> = point_of_pixel.iter().map(Option::is_some).collect();
    for (k, slot) in point_of_pixel.iter().enumerate() {
        let Some(i) = *slot else { continue };
        let i = i as usize;
        let p = cloud.points[i];
        let values = [raw_range[k], p[0], p[1], p[2], cloud.remission[i]];
        for (c, v) in values.into_iter().enumerate() {
            let std = cfg.channel_stds[c];
            channels.data_mut()[c * h * w + k] = (v - cfg.channel_means[c]) / std;
        }
    }
    Ok(RangeImage {
        channels,
        raw_range,
        mask,
        pixel_of_point,
        point_of_pixel,
    })
}

/// Row-major `h x w` class ids for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub h: usize,
    pub w: usize,
    pub ids: Vec<u32>,
}

impl LabelImage {
    pub fn new(h: usize, w: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != h * w {
            return Err(Error::shape(
                "LabelImage::new",
                format!("{} ids for {h}x{w}", ids.len()),
            ));
        }
        Ok(Self { h, w, ids })
    }

    pub fn filled(h: usize, w: usize, id: u32) -> Self {
        Self {
            h,
            w,
            ids: vec![id; h * w],
        }
    }

    fn check_matches(&self, img: &RangeImage) -> Result<()> {
        if (self.h, self.w) != (img.height(), img.width()) {
            return Err(Error::shape(
                "unproject",
                format!(
                    "label image {}x{} vs range image {}x{}",
                    self.h,
                    self.w,
                    img.height(),
                    img.width()
                ),
            ));
        }
        Ok(())
    }
}

/// Gives every point the label of the pixel it projected to.
pub fn unproject(labels: &LabelImage, img: &RangeImage) -> Result<Vec<u32>> {
    labels.check_matches(img)?;
    Ok(img.pixel_of_point.iter().map(|px| labels.ids[img.flat(*px)]).collect())
}
