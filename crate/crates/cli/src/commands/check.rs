use std::time::Instant;

use anyhow::{bail, Context};
use rangeseg::gradcheck::{check_loss, GradcheckConfig, LossKind};
use rangeseg::model::{param_breakdown, param_count};
use rangeseg::Shape4;

use super::config;
use crate::manifest::RunManifest;
use crate::{GradcheckArgs, Outcome, ParamcountArgs};

/// Published parameter budget the report is compared against.
pub const REFERENCE_PARAMS: f64 = 4.74e6;

fn parse_shape(s: &str) -> anyhow::Result<Shape4> {
    let dims: Vec<usize> = s
        .trim()
        .split('x')
        .map(|d| d.parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad size `{s}`, expected NxCxHxW"))?;
    match dims[..] {
        [n, c, h, w] if n * c * h * w > 0 => Ok(Shape4::new(n, c, h, w)),
        _ => bail!("bad size `{s}`, expected NxCxHxW with every dimension >= 1"),
    }
}

pub(crate) fn gradcheck(args: &GradcheckArgs, threads: usize) -> anyhow::Result<(Outcome, RunManifest)> {
    let start = Instant::now();
    let (cfg, cfg_name) = config(&args.config)?;
    let shapes = args
        .sizes
        .iter()
        .map(|s| parse_shape(s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut manifest = RunManifest::new("gradcheck", cfg_name, threads);
    manifest.seed = Some(args.seed);

    let loss = &cfg.loss;
    println!(
        "theta0 = {}  lambda = {:?}  weights = {:?}  ignore = {:?}",
        loss.theta0, loss.aux_weights, loss.weights, loss.ignore_class
    );
    println!(
        "{:<9} {:<10} {:>9} {:>9} {:>12} {:>8}  result",
        "loss", "shape", "instances", "rejected", "max_rel_err", "tol"
    );
    let mut rows = Vec::new();
    let mut all_passed = true;
    for shape in &shapes {
        for kind in LossKind::ALL {
            let mut gc = GradcheckConfig::new(*shape, args.instances, args.seed);
            gc.corrupt = args.corrupt;
            let r = check_loss(kind, loss, &gc)?;
            let verdict = if r.passed() { "PASS" } else { "FAIL" };
            all_passed &= r.passed();
            println!(
                "{:<9} {:<10} {:>9} {:>9} {:>12.3e} {:>8.0e}  {verdict}",
                kind.name(),
                shape.to_string(),
                r.instances,
                r.rejected,
                r.max_rel_error,
                r.tolerance
            );
            rows.push(serde_json::json!({
                "loss": kind.name(),
                "shape": shape.to_string(),
                "instances": r.instances,
                "rejected": r.rejected,
                "max_rel_error": r.max_rel_error,
                "tolerance": r.tolerance,
                "passed": r.passed(),
            }));
        }
    }
    manifest.results = serde_json::json!({
        "theta0": loss.theta0,
        "lambda": loss.aux_weights,
        "weights": loss.weights,
        "checks": rows,
    });
    manifest.add_time("total", start.elapsed());
    let outcome = if all_passed {
        Outcome::Passed
    } else {
        Outcome::CheckFailed
    };
    Ok((outcome, manifest))
}

pub(crate) fn paramcount(args: &ParamcountArgs, threads: usize) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let (cfg, cfg_name) = config(&args.config)?;
    let mut manifest = RunManifest::new("paramcount", cfg_name, threads);
    let modules = param_breakdown(&cfg.model);
    let total = param_count(&cfg.model);
    let ratio = total as f64 / REFERENCE_PARAMS;
    for (m, n) in &modules {
        println!("{m:<24} {n:>10}");
    }
    println!("{:<24} {total:>10}", "total");
    println!("{:<24} {ratio:>10.4}", "ratio_to_4.74M");
    manifest.results = serde_json::json!({
        "total": total,
        "reference": REFERENCE_PARAMS,
        "ratio": ratio,
        "modules": modules.iter().map(|(m, n)| serde_json::json!({"module": m, "params": n})).collect::<Vec<_>>(),
    });
    manifest.add_time("total", start.elapsed());
    Ok(manifest)
}
