//! Pinhole cameras, posed frames, and per-pixel ray encodings.
//!
//! Rays pass through pixel centers at (u+0.5, v+0.5). Poses are
//! world-from-camera: `world = rotation * cam + translation`.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuf;
use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::domain(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain(format!(
                "zero-sized image {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// World-from-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose {
        rotation: Quat::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// Camera center in world coordinates.
    #[inline]
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.conjugate().rotate(p - self.translation)
    }

    /// Camera-space z of a world point (positive in front of the camera).
    #[inline]
    pub fn camera_z(&self, p: Vec3) -> f64 {
        self.world_to_camera(p).z
    }

    /// Unit world-space ray through the center of pixel (px, py).
    pub fn ray_through_pixel(&self, intr: &CameraIntrinsics, px: usize, py: usize) -> Ray {
        let dir_cam = Vec3::new(
            (px as f64 + 0.5 - intr.cx) / intr.fx,
            (py as f64 + 0.5 - intr.cy) / intr.fy,
            1.0,
        );
        Ray {
            origin: self.translation,
            dir: self.rotation.rotate(dir_cam).normalized(),
        }
    }

    /// Projects a world point to continuous pixel coordinates; `None` when
    /// the point is at or behind the camera plane. A point on the ray of
    /// pixel (i, j) projects to (i+0.5, j+0.5).
    pub fn project(&self, intr: &CameraIntrinsics, p: Vec3) -> Option<(f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= 1e-12 {
            return None;
        }
        Some((intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

/// One posed video frame with optional depth/normal supervision targets.
#[derive(Debug, Clone)]
pub struct Frame {
    /// H×W×3 in [0, 1].
    pub image: ImageBuf,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    /// Seconds.
    pub timestamp: f64,
    /// H×W, world units; zero marks invalid.
    pub depth_target: Option<ImageBuf>,
    /// H×W×3 unit vectors.
    pub normal_target: Option<ImageBuf>,
    /// H×W validity weights in [0, 1].
    pub mask: Option<ImageBuf>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !self.timestamp.is_finite() {
            return Err(Error::domain("frame timestamp must be finite".to_string()));
        }
        if self.image.width() != self.intrinsics.width
            || self.image.height() != self.intrinsics.height
            || self.image.channels() != 3
        {
            return Err(Error::shape(format!(
                "frame image {}x{}x{} does not match intrinsics {}x{}x3",
                self.image.width(),
                self.image.height(),
                self.image.channels(),
                self.intrinsics.width,
                self.intrinsics.height
            )));
        }
        if (self.pose.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::domain("frame pose rotation is not unit".to_string()));
        }
        Ok(())
    }
}

/// Per-pixel ray encoding: H×W×6 of (direction, moment = center × direction).
pub fn plucker_rays(intr: &CameraIntrinsics, pose: &CameraPose) -> Result<ImageBuf> {
    intr.validate()?;
    let mut out = ImageBuf::new(intr.width, intr.height, 6);
    for py in 0..intr.height {
        for px in 0..intr.width {
            let ray = pose.ray_through_pixel(intr, px, py);
            let m = ray.origin.cross(ray.dir);
            let p = out.pixel_mut(px, py);
            p[0] = ray.dir.x;
            p[1] = ray.dir.y;
            p[2] = ray.dir.z;
            p[3] = m.x;
            p[4] = m.y;
            p[5] = m.z;
        }
    }
    Ok(out)
}
