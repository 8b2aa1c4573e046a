//! Dynamic Gaussian surfel scene engine.
//!
//! A scene is a set of flat, oriented Gaussian disks that carry a temporal
//! center, lifespan, velocity, and angular velocity, so one primitive set
//! represents both static and moving content. The crate provides:
//!
//! - [`model`]: the representation and its closed-form time evaluation
//! - [`camera`]: pinhole cameras, posed frames, Plücker ray encodings
//! - [`render`]: a tiled front-to-back surfel compositor (color, alpha,
//!   depth, normal, optical flow, dynamic mask) plus a brute-force oracle
//! - [`density`]: patch-opacity statistics, histogram channel pruning, and
//!   densification accounting
//! - [`tokens`]: multi-level chunked attention token layouts and their cost
//!   model
//! - [`loss`]: the training losses (MSE, SSIM, regularizers, expert depth /
//!   normal guidance) and evaluation metrics (PSNR, depth RMSE, normal angle)
//! - [`fit`]: analytic reverse-mode gradients through the full render + loss
//!   pipeline, a finite-difference oracle, and an Adam-based per-scene fitter
//! - [`io`]: the binary scene format, dataset manifests, image formats, and
//!   rolling-window assembly

pub mod buffer;
pub mod camera;
pub mod density;
pub mod error;
pub mod fit;
pub mod io;
pub mod loss;
pub mod math;
pub mod model;
pub mod render;
pub mod tokens;

pub use buffer::ImageBuf;
pub use camera::{CameraIntrinsics, CameraPose, Frame, Ray};
pub use error::{Error, Result};
pub use fit::{fit, FitConfig, FitTrace, ParamVector};
pub use math::{Quat, Vec3};
pub use model::{Gaussian4D, GaussianScene, SurfelSnapshot};
pub use render::{render, render_dynamic_mask, render_flow, render_oracle, RenderConfig, RenderOutput};
