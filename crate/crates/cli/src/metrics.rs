//! `metrics`: score prediction frames against reference frames.
//!
//! Directory convention (what `render` writes): color planes are `*.ppm`,
//! depth planes `depth*.pfm`, normal planes `normal*.pfm`. Prediction and
//! reference pair by identical filename; within a directory the k-th color,
//! depth, normal, and mask files (each list sorted by name) belong to frame
//! k.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use splat4d::io::load_image;
use splat4d::loss::{depth_rmse, normal_angle_deg, psnr, ssim};
use splat4d::ImageBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Directory of predicted frames.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of reference frames.
    #[arg(long)]
    target: PathBuf,
    /// Also score depth*.pfm planes.
    #[arg(long)]
    depth: bool,
    /// Also score normal*.pfm planes.
    #[arg(long)]
    normal: bool,
    /// Directory of single-channel masks gating the depth and normal
    /// metrics, one *.pfm per frame.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Serialize)]
struct FrameReport {
    name: String,
    psnr: f64,
    ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normal_angle_deg: Option<f64>,
}

#[derive(Serialize)]
struct Aggregate {
    psnr: f64,
    ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normal_angle_deg: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    frames: Vec<FrameReport>,
    aggregate: Aggregate,
}

/// Sorted filenames in `dir` accepted by `want`.
fn listing(dir: &Path, want: impl Fn(&str) -> bool) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {dir:?}"))? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if want(name) {
            names.push(name.to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn load_pair(pred: &Path, target: &Path, name: &str) -> Result<(ImageBuf, ImageBuf)> {
    let p = load_image(&pred.join(name)).with_context(|| format!("prediction {name}"))?;
    let t = load_image(&target.join(name)).with_context(|| format!("reference {name}"))?;
    Ok((p, t))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn run(args: Args) -> Result<()> {
    let colors = listing(&args.pred, |n| n.ends_with(".ppm"))?;
    if colors.is_empty() {
        bail!("no *.ppm color frames under {:?}", args.pred);
    }
    let class = |prefix: &str, on: bool| -> Result<Vec<String>> {
        if !on {
            return Ok(Vec::new());
        }
        let names = listing(&args.pred, |n| n.starts_with(prefix) && n.ends_with(".pfm"))?;
        if names.len() != colors.len() {
            bail!(
                "{} {prefix}*.pfm planes for {} color frames under {:?}",
                names.len(),
                colors.len(),
                args.pred
            );
        }
        Ok(names)
    };
    let depths = class("depth", args.depth)?;
    let normals = class("normal", args.normal)?;
    let masks = match &args.mask {
        Some(dir) => {
            let names = listing(dir, |n| n.ends_with(".pfm"))?;
            if names.len() != colors.len() {
                bail!("{} masks for {} color frames under {dir:?}", names.len(), colors.len());
            }
            names
        }
        None => Vec::new(),
    };

    let mut frames = Vec::with_capacity(colors.len());
    for (k, name) in colors.iter().enumerate() {
        let (p, t) = load_pair(&args.pred, &args.target, name)?;
        let mask = match &args.mask {
            Some(dir) => Some(load_image(&dir.join(&masks[k]))?),
            None => None,
        };
        let depth = if args.depth {
            let (dp, dt) = load_pair(&args.pred, &args.target, &depths[k])?;
            Some(depth_rmse(&dp, &dt, mask.as_ref())?)
        } else {
            None
        };
        let normal = if args.normal {
            let (np, nt) = load_pair(&args.pred, &args.target, &normals[k])?;
            Some(normal_angle_deg(&np, &nt, mask.as_ref())?)
        } else {
            None
        };
        frames.push(FrameReport {
            name: name.clone(),
            psnr: psnr(&p, &t, 1.0)?,
            ssim: ssim(&p, &t)?,
            depth_rmse: depth,
            normal_angle_deg: normal,
        });
    }

    let aggregate = Aggregate {
        psnr: mean(&frames.iter().map(|f| f.psnr).collect::<Vec<_>>()),
        ssim: mean(&frames.iter().map(|f| f.ssim).collect::<Vec<_>>()),
        depth_rmse: args
            .depth
            .then(|| mean(&frames.iter().filter_map(|f| f.depth_rmse).collect::<Vec<_>>())),
        normal_angle_deg: args
            .normal
            .then(|| mean(&frames.iter().filter_map(|f| f.normal_angle_deg).collect::<Vec<_>>())),
    };
    crate::emit(&serde_json::to_string_pretty(&Report { frames, aggregate })?)?;
    Ok(())
}
