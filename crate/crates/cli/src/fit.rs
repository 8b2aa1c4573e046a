//! `fit`: optimize a scene against a dataset, emit the loss trace.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};

use splat4d::fit::encode_params;
use splat4d::io::{load_manifest, read_scene, write_scene};
use splat4d::FitConfig;

#[derive(clap::Args)]
pub struct Args {
    /// Manifest whose frames are the training targets. Images must be at
    /// least 11x11 pixels (the structural-similarity window).
    #[arg(long)]
    manifest: PathBuf,
    /// Initial scene.
    #[arg(long)]
    init: PathBuf,
    /// Optimizer configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: PathBuf,
    /// Fitted scene destination.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let (_, frames) = load_manifest(&args.manifest)
        .with_context(|| format!("loading manifest {:?}", args.manifest))?;
    let init = read_scene(&args.init)
        .with_context(|| format!("reading scene {:?}", args.init))?;
    let bytes = fs::read(&args.config)
        .with_context(|| format!("reading config {:?}", args.config))?;
    let cfg: FitConfig = serde_json::from_slice(&bytes).context("parsing config JSON")?;

    let encoded = encode_params(&init);
    if encoded.clamped > 0 {
        eprintln!(
            "warning: {} opacity/color value(s) sat on the [0, 1] boundary and were \
             clamped into the optimizer's open domain",
            encoded.clamped
        );
    }

    let (fitted, trace) = splat4d::fit(&init, &frames, &cfg)?;
    write_scene(&args.out, &fitted)
        .with_context(|| format!("writing scene {:?}", args.out))?;
    crate::emit(&serde_json::to_string_pretty(&trace)?)?;
    Ok(())
}
