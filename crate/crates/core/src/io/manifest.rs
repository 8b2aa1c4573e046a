//! JSON dataset manifests: a list of posed, timestamped frames with
//! optional expert depth / normal / mask targets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose, Frame};
use crate::error::{Error, Result};
use crate::io::pnm::{atomic_write, load_image};
use crate::math::{Quat, Vec3};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPose {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub image_path: String,
    pub timestamp_s: f64,
    pub intrinsics: CameraIntrinsics,
    /// World-from-camera.
    pub pose: ManifestPose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub frames: Vec<ManifestFrame>,
}

impl DatasetManifest {
    /// Timestamps must be strictly increasing and every frame must carry
    /// valid intrinsics.
    pub fn validate(&self) -> Result<()> {
        for (i, frame) in self.frames.iter().enumerate() {
            frame.intrinsics.validate()?;
            if !frame.timestamp_s.is_finite() {
                return Err(Error::domain(format!("frame {i}: non-finite timestamp")));
            }
            if i > 0 && frame.timestamp_s <= self.frames[i - 1].timestamp_s {
                return Err(Error::domain(format!(
                    "frame {i}: timestamp {} does not increase past {}",
                    frame.timestamp_s,
                    self.frames[i - 1].timestamp_s
                )));
            }
        }
        Ok(())
    }
}

impl From<&ManifestPose> for CameraPose {
    fn from(p: &ManifestPose) -> Self {
        CameraPose {
            rotation: Quat::new(p.qw, p.qx, p.qy, p.qz).normalized(),
            translation: Vec3::new(p.tx, p.ty, p.tz),
        }
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_plane(
    base: &Path,
    rel: &str,
    channels: usize,
    what: &str,
    intr: &CameraIntrinsics,
) -> Result<crate::buffer::ImageBuf> {
    let img = load_image(&resolve(base, rel))?;
    if img.channels() != channels {
        return Err(Error::shape(format!(
            "{what} {rel:?} has {} channels, expected {channels}",
            img.channels()
        )));
    }
    if img.width() != intr.width || img.height() != intr.height {
        return Err(Error::shape(format!(
            "{what} {rel:?} is {}x{}, intrinsics say {}x{}",
            img.width(),
            img.height(),
            intr.width,
            intr.height
        )));
    }
    Ok(img)
}

/// Parses a manifest and decodes every referenced file into [`Frame`]s.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, Vec<Frame>)> {
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
    manifest.validate()?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for mf in &manifest.frames {
        let image = load_plane(&base, &mf.image_path, 3, "image", &mf.intrinsics)?;
        let depth_target = mf
            .depth_path
            .as_ref()
            .map(|p| load_plane(&base, p, 1, "depth", &mf.intrinsics))
            .transpose()?;
        let normal_target = mf
            .normal_path
            .as_ref()
            .map(|p| load_plane(&base, p, 3, "normal", &mf.intrinsics))
            .transpose()?;
        let mask = mf
            .mask_path
            .as_ref()
            .map(|p| load_plane(&base, p, 1, "mask", &mf.intrinsics))
            .transpose()?;
        let frame = Frame {
            image,
            intrinsics: mf.intrinsics,
            pose: (&mf.pose).into(),
            timestamp: mf.timestamp_s,
            depth_target,
            normal_target,
            mask,
        };
        frame.validate()?;
        frames.push(frame);
    }
    Ok((manifest, frames))
}

/// Serializes a manifest as pretty JSON, atomically.
pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}
