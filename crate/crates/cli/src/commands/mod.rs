mod check;
mod eval;
mod infer;
mod project;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rangeseg::kitti::{load_config, parse_config, RunConfig, DEFAULT_CONFIG};

use crate::{Cli, Command, ConfigArg, Outcome};

pub(crate) fn dispatch(cli: &Cli, threads: usize) -> anyhow::Result<Outcome> {
    let (outcome, manifest, default_path) = match &cli.command {
        Command::Project(a) => {
            let m = project::run(a, threads)?;
            (Outcome::Passed, m, Some(a.out.join("manifest.json")))
        }
        Command::Infer(a) => {
            let m = infer::run(a, threads)?;
            (Outcome::Passed, m, Some(a.out.join("manifest.json")))
        }
        Command::Eval(a) => {
            let m = eval::run(a, threads)?;
            (Outcome::Passed, m, None)
        }
        Command::Gradcheck(a) => {
            let (o, m) = check::gradcheck(a, threads)?;
            (o, m, None)
        }
        Command::Paramcount(a) => {
            let m = check::paramcount(a, threads)?;
            (Outcome::Passed, m, None)
        }
    };
    if let Some(path) = cli.manifest.clone().or(default_path) {
        manifest.write(&path)?;
    }
    Ok(outcome)
}

/// The validated configuration and how to name it in manifests.
fn config(arg: &ConfigArg) -> anyhow::Result<(RunConfig, String)> {
    match &arg.config {
        Some(p) => Ok((load_config(p)?, p.display().to_string())),
        None => Ok((
            parse_config(DEFAULT_CONFIG, Path::new("<builtin>"))?,
            "builtin:semantic_kitti".into(),
        )),
    }
}

/// Output file for each scan: `<out>/<scan stem>.<ext>`. Two scans with the
/// same stem would overwrite each other, so that is an error.
fn output_paths(scans: &[PathBuf], out: &Path, ext: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut seen = BTreeSet::new();
    scans
        .iter()
        .map(|s| {
            let stem = s
                .file_stem()
                .with_context(|| format!("{}: not a file path", s.display()))?;
            if !seen.insert(stem.to_owned()) {
                bail!("more than one scan is named {}", stem.to_string_lossy());
            }
            Ok(out.join(stem).with_extension(ext))
        })
        .collect()
}

fn create_dir(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}
