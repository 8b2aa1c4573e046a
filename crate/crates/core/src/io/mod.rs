//! File formats and dataset assembly: images, binary scenes, JSON
//! manifests, and rolling-window planning.

pub mod manifest;
pub mod pnm;
pub mod scene;
pub mod windows;

pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestFrame, ManifestPose};
pub use pnm::{load_image, read_pfm, read_ppm, save_image, write_pfm, write_ppm};
pub use scene::{read_scene, write_scene};
pub use windows::{merge_windows, plan_windows, Window, WindowPlan};
