use std::time::Instant;

use rangeseg::kitti::read_scan;
use rangeseg::{project, NamedTensor, RangeImage, TensorFile};
use rayon::prelude::*;

use super::{config, create_dir, output_paths};
use crate::manifest::RunManifest;
use crate::ProjectArgs;

/// Container layout written per scan. Index tensors store integers as `f32`
/// with `-1` marking an empty pixel.
pub(crate) fn range_container(img: &RangeImage, source_index: &[u32]) -> rangeseg::Result<TensorFile> {
    let (h, w) = (img.height(), img.width());
    let n = img.num_points();
    let mut tf = TensorFile::new();
    let s = img.channels.shape();
    tf.insert(
        "channels",
        NamedTensor::new(vec![s.n, s.c, s.h, s.w], img.channels.data().to_vec())?,
    );
    tf.insert(
        "mask",
        NamedTensor::new(vec![h, w], img.mask.iter().map(|m| f32::from(u8::from(*m))).collect())?,
    );
    tf.insert("raw_range", NamedTensor::new(vec![h, w], img.raw_range.clone())?);
    tf.insert(
        "pixel_of_point",
        NamedTensor::new(
            vec![n, 2],
            img.pixel_of_point
                .iter()
                .flat_map(|(r, c)| [*r as f32, *c as f32])
                .collect(),
        )?,
    );
    tf.insert(
        "point_of_pixel",
        NamedTensor::new(
            vec![h, w],
            img.point_of_pixel
                .iter()
                .map(|p| p.map_or(-1.0, |i| i as f32))
                .collect(),
        )?,
    );
    tf.insert(
        "source_index",
        NamedTensor::new(vec![n], source_index.iter().map(|i| *i as f32).collect())?,
    );
    Ok(tf)
}

pub(crate) fn run(args: &ProjectArgs, threads: usize) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let (cfg, cfg_name) = config(&args.config)?;
    let outputs = output_paths(&args.scans, &args.out, "range")?;
    let mut manifest = RunManifest::new("project", cfg_name, threads);

    // read and project everything first so a bad scan leaves no partial output
    let projected = args
        .scans
        .par_iter()
        .map(|path| {
            let t = Instant::now();
            let scan = read_scan(path)?;
            let t_read = t.elapsed();
            let t = Instant::now();
            let img = project(&scan.cloud, &cfg.projection)?;
            let tf = range_container(&img, &scan.source_index)?;
            Ok((scan.total_points, scan.rejected(), tf, t_read, t.elapsed()))
        })
        .collect::<rangeseg::Result<Vec<_>>>()?;

    create_dir(&args.out)?;
    for ((total, rejected, tf, t_read, t_proj), out) in projected.into_iter().zip(&outputs) {
        let t = Instant::now();
        tf.write(out)?;
        manifest.add_time("read", t_read);
        manifest.add_time("project", t_proj);
        manifest.add_time("write", t.elapsed());
        manifest.counts.scans += 1;
        manifest.counts.points += total;
        manifest.counts.rejected_points += rejected;
    }
    manifest.inputs = args.scans.clone();
    manifest.outputs = outputs;
    manifest.add_time("total", start.elapsed());
    Ok(manifest)
}
