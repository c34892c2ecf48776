use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use rangeseg::kitti::read_labels;
use rangeseg::ConfusionMatrix;
use rayon::prelude::*;

use super::config;
use crate::manifest::RunManifest;
use crate::EvalArgs;

fn label_files(dir: &Path) -> anyhow::Result<BTreeSet<OsString>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut names = BTreeSet::new();
    for e in entries {
        let p = e.with_context(|| format!("reading {}", dir.display()))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "label") {
            names.insert(p.file_name().unwrap().to_owned());
        }
    }
    Ok(names)
}

pub(crate) fn run(args: &EvalArgs, threads: usize) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let (cfg, cfg_name) = config(&args.config)?;
    let mut manifest = RunManifest::new("eval", cfg_name, threads);

    let preds = label_files(&args.pred_dir)?;
    let gts = label_files(&args.gt_dir)?;
    if preds.is_empty() && gts.is_empty() {
        bail!(
            "no .label files in {} or {}",
            args.pred_dir.display(),
            args.gt_dir.display()
        );
    }
    let unpaired: Vec<String> = preds
        .symmetric_difference(&gts)
        .map(|n| {
            let side = if preds.contains(n) {
                &args.pred_dir
            } else {
                &args.gt_dir
            };
            side.join(n).display().to_string()
        })
        .collect();
    if !unpaired.is_empty() {
        bail!("unpaired label files: {}", unpaired.join(", "));
    }

    let map = &cfg.labels;
    let matrices = preds
        .par_iter()
        .map(|name| {
            let (pp, gp) = (args.pred_dir.join(name), args.gt_dir.join(name));
            let pred = read_labels(&pp)?;
            let gt = read_labels(&gp)?;
            if pred.len() != gt.len() {
                bail!(
                    "{} has {} labels but {} has {}",
                    pp.display(),
                    pred.len(),
                    gp.display(),
                    gt.len()
                );
            }
            let mut cm = ConfusionMatrix::new(map.num_classes(), Some(map.ignore_class));
            cm.accumulate(&map.remap(&pred).0, &map.remap(&gt).0)?;
            Ok((cm, pred.len()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut total = ConfusionMatrix::new(map.num_classes(), Some(map.ignore_class));
    for (cm, n) in &matrices {
        total.merge(cm)?;
        manifest.counts.scans += 1;
        manifest.counts.points += n;
    }
    let report = total.miou();
    print!("{}", report.to_text(&map.class_names));

    manifest.inputs = preds.iter().map(|n| args.pred_dir.join(n)).collect();
    manifest.inputs.extend(gts.iter().map(|n| args.gt_dir.join(n)));
    manifest.results = serde_json::json!({
        "miou": report.mean,
        "evaluated_classes": report.evaluated,
        "per_class_iou": report.per_class,
    });
    manifest.add_time("total", start.elapsed());
    Ok(manifest)
}
