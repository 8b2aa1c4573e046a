//! Writes a demo scene plus a rendered dataset into a directory, giving the
//! CLI something real to chew on:
//!
//! ```text
//! cargo run --release -p splat4d-bench --example make_demo_dataset -- OUTDIR
//! ```
//!
//! The directory ends up with `scene.4dgt`, four `frame_*.ppm` renders, and a
//! `manifest.json` tying them together.

use splat4d::io::{save_image, save_manifest, write_scene, DatasetManifest, ManifestFrame, ManifestPose};
use splat4d::{render, CameraPose, RenderConfig};
use splat4d_bench::{demo_scene, square_intrinsics};

fn main() {
    let dir = std::env::args().nth(1).expect("usage: make_demo_dataset OUTDIR");
    let dir = std::path::Path::new(&dir);
    std::fs::create_dir_all(dir).expect("output directory should be writable");

    let scene = demo_scene(192, 7);
    write_scene(&dir.join("scene.4dgt"), &scene).unwrap();

    let intr = square_intrinsics(64);
    let pose = ManifestPose {
        qw: 1.0,
        qx: 0.0,
        qy: 0.0,
        qz: 0.0,
        tx: 0.0,
        ty: 0.0,
        tz: 0.0,
    };
    let frames = [0.0_f64, 0.1, 0.2, 0.3]
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let out =
                render(&scene, &intr, &CameraPose::IDENTITY, t, &RenderConfig::default()).unwrap();
            let name = format!("frame_{i:04}.ppm");
            save_image(&dir.join(&name), &out.color).unwrap();
            ManifestFrame {
                image_path: name,
                timestamp_s: t,
                intrinsics: intr,
                pose: pose.clone(),
                depth_path: None,
                normal_path: None,
                mask_path: None,
            }
        })
        .collect();
    save_manifest(&dir.join("manifest.json"), &DatasetManifest { frames }).unwrap();
    println!("{}", dir.display());
}
