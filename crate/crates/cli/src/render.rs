//! `render`: scene + manifest camera -> image planes on disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use splat4d::io::{read_scene, save_image, DatasetManifest};
use splat4d::{render, render_flow, CameraPose, ImageBuf, RenderConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Manifest supplying the camera; referenced images are not read.
    #[arg(long)]
    manifest: PathBuf,
    /// Timestamp to render, in seconds.
    #[arg(long)]
    time: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Also render optical flow from --time to this timestamp.
    #[arg(long)]
    flow: Option<f64>,
    /// Also write the dynamic-content mask plane.
    #[arg(long = "dyn-mask")]
    dyn_mask: bool,
    /// Manifest frame index for the camera. Default: the frame whose
    /// timestamp is nearest --time.
    #[arg(long)]
    frame: Option<usize>,
}

#[derive(Serialize)]
struct Report {
    time: f64,
    camera_frame: usize,
    width: usize,
    height: usize,
    gaussians: usize,
    outputs: Vec<String>,
}

/// Two-channel flow packed into a 3-channel float image (PFM holds 1 or 3
/// channels); the third channel is zero.
fn pad_flow(flow: &ImageBuf) -> ImageBuf {
    let mut out = ImageBuf::new(flow.width(), flow.height(), 3);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            out.set(x, y, 0, flow.get(x, y, 0));
            out.set(x, y, 1, flow.get(x, y, 1));
        }
    }
    out
}

pub fn run(args: Args) -> Result<()> {
    let scene = read_scene(&args.scene)
        .with_context(|| format!("reading scene {:?}", args.scene))?;
    let bytes = fs::read(&args.manifest)
        .with_context(|| format!("reading manifest {:?}", args.manifest))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).context("parsing manifest JSON")?;
    manifest.validate()?;
    if manifest.frames.is_empty() {
        bail!("manifest has no frames to take a camera from");
    }

    let camera_frame = match args.frame {
        Some(i) if i < manifest.frames.len() => i,
        Some(i) => bail!("--frame {i} out of range, manifest has {} frames", manifest.frames.len()),
        None => (0..manifest.frames.len())
            .min_by(|&a, &b| {
                let da = (manifest.frames[a].timestamp_s - args.time).abs();
                let db = (manifest.frames[b].timestamp_s - args.time).abs();
                da.total_cmp(&db)
            })
            .unwrap(),
    };
    let entry = &manifest.frames[camera_frame];
    let intr = entry.intrinsics;
    let pose = CameraPose::from(&entry.pose);
    let cfg = RenderConfig::default();

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {:?}", args.out))?;
    let out = render(&scene, &intr, &pose, args.time, &cfg)?;

    let mut outputs = Vec::new();
    let mut save = |name: &str, img: &ImageBuf| -> Result<()> {
        let path: &Path = &args.out.join(name);
        save_image(path, img).with_context(|| format!("writing {path:?}"))?;
        outputs.push(path.display().to_string());
        Ok(())
    };
    save("color_0000.ppm", &out.color)?;
    save("depth_0000.pfm", &out.depth)?;
    save("normal_0000.pfm", &out.normal)?;
    if let Some(t1) = args.flow {
        let flow = render_flow(&scene, &intr, &pose, args.time, t1, &cfg)?;
        save("flow_0000.pfm", &pad_flow(&flow))?;
    }
    if args.dyn_mask {
        save("dyn_mask_0000.pfm", &out.dynamic_mask)?;
    }

    let report = Report {
        time: args.time,
        camera_frame,
        width: intr.width,
        height: intr.height,
        gaussians: scene.len(),
        outputs,
    };
    crate::emit(&serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
