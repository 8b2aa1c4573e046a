//! Binary scene file format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset 0   magic "4DGT"
//! offset 4   version   u32 = 1
//! offset 8   count     u64 = n
//! offset 16  reserved  u64 = 0
//! offset 24  f32 arrays, field-major: position[3n], scale[2n],
//!            orientation[4n (w,x,y,z)], opacity[n], color[3n],
//!            t_center[n], lifespan[n], velocity[3n], ang_velocity[3n]
//! tail       time_base f64
//! ```
//!
//! Total size is exactly `24 + 84·n + 8` bytes. Round trips are bit-exact:
//! parameters are stored as f32 and loaded back as the identical f64 values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::pnm::atomic_write;
use crate::math::{Quat, Vec3};
use crate::model::GaussianScene;

const MAGIC: &[u8; 4] = b"4DGT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const FLOATS_PER_GAUSSIAN: usize = 21;

/// Serializes and atomically writes `scene`.
pub fn write_scene(path: &Path, scene: &GaussianScene) -> Result<()> {
    scene.validate()?;
    let n = scene.len();
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * FLOATS_PER_GAUSSIAN * n + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend(VERSION.to_le_bytes());
    bytes.extend((n as u64).to_le_bytes());
    bytes.extend(0u64.to_le_bytes());

    let mut put = |v: f64| bytes.extend((v as f32).to_le_bytes());
    for p in &scene.positions {
        p.to_array().into_iter().for_each(&mut put);
    }
    for s in &scene.scales {
        s.iter().copied().for_each(&mut put);
    }
    for q in &scene.orientations {
        q.to_array().into_iter().for_each(&mut put);
    }
    scene.opacities.iter().copied().for_each(&mut put);
    for c in &scene.colors {
        c.to_array().into_iter().for_each(&mut put);
    }
    scene.t_centers.iter().copied().for_each(&mut put);
    scene.lifespans.iter().copied().for_each(&mut put);
    for v in &scene.velocities {
        v.to_array().into_iter().for_each(&mut put);
    }
    for v in &scene.ang_velocities {
        v.to_array().into_iter().for_each(&mut put);
    }
    bytes.extend(scene.time_base.to_le_bytes());
    atomic_write(path, &bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn f32s(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let at = self.pos;
            let v = f32::from_le_bytes(self.bytes[at..at + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(at as u64, format!("non-finite {field}")));
            }
            out.push(v as f64);
            self.pos += 4;
        }
        Ok(out)
    }
}

/// Reads and validates a scene file.
pub fn read_scene(path: &Path) -> Result<GaussianScene> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN + 8 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("file of {} bytes is shorter than header + footer", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(0, "bad magic, not a scene file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let reserved = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if reserved != 0 {
        return Err(Error::format(16, "reserved word must be zero"));
    }
    let n = usize::try_from(count).map_err(|_| Error::format(8, "count overflows usize"))?;
    let expect = HEADER_LEN
        + 4usize
            .checked_mul(FLOATS_PER_GAUSSIAN * n)
            .ok_or_else(|| Error::format(8, "count overflows file size"))?
        + 8;
    if bytes.len() != expect {
        return Err(Error::format(
            HEADER_LEN as u64,
            format!("{} gaussians need {expect} bytes, file has {}", n, bytes.len()),
        ));
    }

    let mut r = Reader {
        bytes: &bytes,
        pos: HEADER_LEN,
    };
    let to_vec3 = |flat: Vec<f64>| -> Vec<Vec3> {
        flat.chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect()
    };
    let positions = to_vec3(r.f32s(3 * n, "position")?);
    let scales: Vec<[f64; 2]> = r
        .f32s(2 * n, "scale")?
        .chunks_exact(2)
        .map(|c| [c[0], c[1]])
        .collect();
    let orientations: Vec<Quat> = r
        .f32s(4 * n, "orientation")?
        .chunks_exact(4)
        .map(|c| Quat::new(c[0], c[1], c[2], c[3]))
        .collect();
    let opacities = r.f32s(n, "opacity")?;
    let colors = to_vec3(r.f32s(3 * n, "color")?);
    let t_centers = r.f32s(n, "t_center")?;
    let lifespans = r.f32s(n, "lifespan")?;
    let velocities = to_vec3(r.f32s(3 * n, "velocity")?);
    let ang_velocities = to_vec3(r.f32s(3 * n, "ang_velocity")?);
    let time_base = f64::from_le_bytes(bytes[r.pos..r.pos + 8].try_into().unwrap());
    if !time_base.is_finite() {
        return Err(Error::format(r.pos as u64, "non-finite time_base"));
    }

    let scene = GaussianScene {
        positions,
        scales,
        orientations,
        opacities,
        colors,
        t_centers,
        lifespans,
        velocities,
        ang_velocities,
        time_base,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gaussian4D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(seed: u64, count: usize) -> GaussianScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = GaussianScene::new();
        scene.time_base = 3.25;
        for _ in 0..count {
            scene.push(Gaussian4D::new(
                Vec3::new(rng.random(), rng.random(), rng.random::<f64>() + 1.0),
                [rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)],
                Quat::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                rng.random(),
                Vec3::new(rng.random(), rng.random(), rng.random()),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.01..100.0),
                Vec3::new(rng.random(), rng.random(), rng.random()),
                Vec3::new(rng.random(), rng.random(), rng.random()),
            ));
        }
        scene
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.4dgs");
        let scene = random_scene(100, 37);
        write_scene(&path, &scene).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(first.len(), 24 + 84 * 37 + 8);

        let loaded = read_scene(&path).unwrap();
        assert_eq!(loaded.len(), scene.len());
        // f64 -> f32 quantizes once; a second trip changes nothing.
        let path2 = dir.path().join("scene2.4dgs");
        write_scene(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), first);
        for i in 0..scene.len() {
            assert_eq!(loaded.positions[i].x, scene.positions[i].x as f32 as f64);
            assert_eq!(loaded.opacities[i], scene.opacities[i] as f32 as f64);
        }
        assert_eq!(loaded.time_base, scene.time_base);
    }

    #[test]
    fn empty_scene_is_exactly_32_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.4dgs");
        write_scene(&path, &GaussianScene::new()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 32);
        assert!(read_scene(&path).unwrap().is_empty());
    }

    #[test]
    fn corrupted_magic_errors_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.4dgs");
        write_scene(&path, &random_scene(101, 3)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match read_scene(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn detects_truncation_version_and_junk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.4dgs");
        let scene = random_scene(102, 5);
        write_scene(&path, &scene).unwrap();
        let good = std::fs::read(&path).unwrap();

        std::fs::write(&path, &good[..good.len() - 9]).unwrap();
        assert!(read_scene(&path).is_err());

        let mut versioned = good.clone();
        versioned[4] = 9;
        std::fs::write(&path, &versioned).unwrap();
        match read_scene(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }

        let mut trailing = good.clone();
        trailing.extend([0u8; 4]);
        std::fs::write(&path, &trailing).unwrap();
        assert!(read_scene(&path).is_err());

        // NaN opacity: offset 24 + 4·(3n + 2n + 4n) for the first entry.
        let mut nan = good;
        let off = 24 + 4 * 9 * 5;
        nan[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &nan).unwrap();
        match read_scene(&path).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset, off as u64);
                assert!(message.contains("opacity"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
