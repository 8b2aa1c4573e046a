//! `prune`: histogram-guided channel selection, optionally applied to a
//! patch-major scene.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use splat4d::density::{
    aggregate_histogram, apply_pruning, compare_pruning_strategies, select_channels,
    PatchOpacityGrid, PruningComparison,
};
use splat4d::io::{read_scene, write_scene};

#[derive(clap::Args)]
pub struct Args {
    /// JSON file: {"patch_size": p, "grids": [[p·p·k opacities], ...]}.
    #[arg(long)]
    grids: PathBuf,
    /// Channels to keep per patch.
    #[arg(long = "S")]
    keep: usize,
    /// Where to write the selection report (same JSON as stdout).
    #[arg(long)]
    out: PathBuf,
    /// Seed for the random-selection baseline in the comparison.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prune --scene down to the selected channels.
    #[arg(long, requires = "scene", requires = "scene_out")]
    apply: bool,
    /// Patch-major scene to prune: patch_size² consecutive Gaussians per
    /// patch, channel = index within the patch.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Pruned scene destination.
    #[arg(long = "scene-out")]
    scene_out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct GridsFile {
    patch_size: usize,
    grids: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Report {
    patch_size: usize,
    keep: usize,
    channels: Vec<usize>,
    activation_counts: Vec<u64>,
    total_patches: u64,
    comparison: PruningComparison,
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<SceneReport>,
}

#[derive(Serialize)]
struct SceneReport {
    input_gaussians: usize,
    output_gaussians: usize,
}

pub fn run(args: Args) -> Result<()> {
    let bytes = fs::read(&args.grids)
        .with_context(|| format!("reading grids {:?}", args.grids))?;
    let file: GridsFile = serde_json::from_slice(&bytes).context("parsing grids JSON")?;
    if file.grids.is_empty() {
        bail!("grids file holds no patch grids");
    }
    let grids = file
        .grids
        .into_iter()
        .map(|values| PatchOpacityGrid::new(file.patch_size, values))
        .collect::<splat4d::Result<Vec<_>>>()?;

    let histogram = aggregate_histogram(&grids)?;
    let channels = select_channels(&histogram, args.keep)?;
    let comparison = compare_pruning_strategies(&grids, args.keep, args.seed)?;

    let scene = if args.apply {
        let scene_path = args.scene.as_ref().unwrap();
        let input = read_scene(scene_path)
            .with_context(|| format!("reading scene {scene_path:?}"))?;
        let pruned = apply_pruning(&input, file.patch_size, &channels)?;
        let out_path = args.scene_out.as_ref().unwrap();
        write_scene(out_path, &pruned)
            .with_context(|| format!("writing scene {out_path:?}"))?;
        Some(SceneReport {
            input_gaussians: input.len(),
            output_gaussians: pruned.len(),
        })
    } else {
        None
    };

    let report = Report {
        patch_size: file.patch_size,
        keep: args.keep,
        channels,
        activation_counts: histogram.counts,
        total_patches: histogram.total_patches,
        comparison,
        scene,
    };
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(&args.out, &json)
        .with_context(|| format!("writing report {:?}", args.out))?;
    crate::emit(&json)?;
    Ok(())
}
