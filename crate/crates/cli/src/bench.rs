//! `bench`: wall-clock render throughput over a manifest's cameras.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use splat4d::io::{read_scene, DatasetManifest};
use splat4d::{render, CameraPose, RenderConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Manifest supplying cameras and timestamps; images are not read.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Serialize)]
struct Stages {
    scene_load_s: f64,
    manifest_parse_s: f64,
    render_total_s: f64,
}

#[derive(Serialize)]
struct Report {
    gaussians: usize,
    frames: usize,
    stages: Stages,
    frames_per_second: f64,
    render_mean_s: f64,
    render_min_s: f64,
    render_max_s: f64,
    per_frame_s: Vec<f64>,
}

pub fn run(args: Args) -> Result<()> {
    let t0 = Instant::now();
    let scene = read_scene(&args.scene)
        .with_context(|| format!("reading scene {:?}", args.scene))?;
    let scene_load_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let bytes = fs::read(&args.manifest)
        .with_context(|| format!("reading manifest {:?}", args.manifest))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).context("parsing manifest JSON")?;
    manifest.validate()?;
    let manifest_parse_s = t1.elapsed().as_secs_f64();
    if manifest.frames.is_empty() {
        bail!("manifest has no frames to render");
    }

    let cfg = RenderConfig::default();
    let mut per_frame_s = Vec::with_capacity(manifest.frames.len());
    for frame in &manifest.frames {
        let pose = CameraPose::from(&frame.pose);
        let t = Instant::now();
        render(&scene, &frame.intrinsics, &pose, frame.timestamp_s, &cfg)?;
        per_frame_s.push(t.elapsed().as_secs_f64());
    }
    let render_total_s: f64 = per_frame_s.iter().sum();

    let report = Report {
        gaussians: scene.len(),
        frames: per_frame_s.len(),
        stages: Stages {
            scene_load_s,
            manifest_parse_s,
            render_total_s,
        },
        frames_per_second: per_frame_s.len() as f64 / render_total_s,
        render_mean_s: render_total_s / per_frame_s.len() as f64,
        render_min_s: per_frame_s.iter().copied().fold(f64::INFINITY, f64::min),
        render_max_s: per_frame_s.iter().copied().fold(0.0, f64::max),
        per_frame_s,
    };
    crate::emit(&serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
