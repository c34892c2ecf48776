use std::time::Instant;

use anyhow::{bail, Context};
use rangeseg::kitti::{prediction_bytes, read_scan};
use rangeseg::tensor::argmax_channels;
use rangeseg::{knn_refine, model_forward, project, unproject, LabelImage, ModelWeights};
use rayon::prelude::*;

use super::{config, create_dir, output_paths};
use crate::manifest::RunManifest;
use crate::{InferArgs, Toggle};

pub(crate) fn run(args: &InferArgs, threads: usize) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let (cfg, cfg_name) = config(&args.config)?;
    let outputs = output_paths(&args.scans, &args.out, "label")?;
    let mut manifest = RunManifest::new("infer", cfg_name, threads);

    let t = Instant::now();
    let weights = match args.weights.strip_prefix("random:") {
        Some(seed) => {
            let seed: u64 = seed
                .parse()
                .with_context(|| format!("--weights random:SEED needs an integer seed, got `{seed}`"))?;
            manifest.seed = Some(seed);
            ModelWeights::init_random(&cfg.model, seed)?
        }
        None if args.weights.is_empty() => bail!("--weights is empty"),
        None => ModelWeights::read(&args.weights, &cfg.model)?,
    };
    manifest.add_time("load_weights", t.elapsed());

    let results = args
        .scans
        .par_iter()
        .map(|path| {
            let mut times = Vec::new();
            let mut t = Instant::now();
            let mut lap = |name: &'static str, t: &mut Instant| {
                times.push((name, t.elapsed()));
                *t = Instant::now();
            };
            let scan = read_scan(path)?;
            lap("read", &mut t);
            let img = project(&scan.cloud, &cfg.projection)?;
            lap("project", &mut t);
            let out = model_forward(&img.channels, &weights, &cfg.model)?;
            lap("forward", &mut t);
            let labels = LabelImage::new(img.height(), img.width(), argmax_channels(&out.logits))?;
            let per_point = match args.knn {
                Toggle::On => knn_refine(&labels, &img, &scan.cloud, &cfg.knn)?,
                Toggle::Off => unproject(&labels, &img)?,
            };
            lap("backproject", &mut t);
            let ids = scan.scatter(&per_point, cfg.labels.ignore_class)?;
            let bytes = prediction_bytes(&ids, &cfg.labels)?;
            Ok((scan.total_points, scan.rejected(), bytes, times))
        })
        .collect::<rangeseg::Result<Vec<_>>>()?;

    create_dir(&args.out)?;
    for ((total, rejected, bytes, times), out) in results.into_iter().zip(&outputs) {
        let t = Instant::now();
        std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
        manifest.add_time("write", t.elapsed());
        for (name, d) in times {
            manifest.add_time(name, d);
        }
        manifest.counts.scans += 1;
        manifest.counts.points += total;
        manifest.counts.rejected_points += rejected;
    }
    manifest.inputs = args.scans.clone();
    manifest.outputs = outputs;
    manifest.results = serde_json::json!({
        "weights": args.weights,
        "knn": matches!(args.knn, Toggle::On),
    });
    manifest.add_time("total", start.elapsed());
    Ok(manifest)
}
