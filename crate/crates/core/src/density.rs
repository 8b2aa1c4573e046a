//! Patch-opacity statistics and histogram-guided channel pruning.
//!
//! Gaussians are laid out in fixed-size pixel patches, one Gaussian per
//! patch cell ("channel"). A channel is active in a patch when its opacity
//! exceeds the patch mean by more than one standard deviation. Aggregating
//! the active flags across many patches gives a per-channel activation
//! histogram; pruning keeps the most frequently activated channels in every
//! patch, which drops the channels that rarely carry content.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GaussianScene;

/// Per-patch opacity values for a batch of patches, each `patch_size²` long.
#[derive(Debug, Clone)]
pub struct PatchOpacityGrid {
    patch_size: usize,
    values: Vec<f64>,
}

impl PatchOpacityGrid {
    /// `values` concatenates whole patches of `patch_size²` opacities in
    /// [0, 1].
    pub fn new(patch_size: usize, values: Vec<f64>) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::domain("patch_size must be >= 1".to_string()));
        }
        let cells = patch_size * patch_size;
        if !values.len().is_multiple_of(cells) {
            return Err(Error::shape(format!(
                "{} opacities do not form whole patches of {} cells",
                values.len(),
                cells
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("opacity {bad} outside [0, 1]")));
        }
        Ok(PatchOpacityGrid { patch_size, values })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        self.values.len() / (self.patch_size * self.patch_size)
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let cells = self.patch_size * self.patch_size;
        &self.values[i * cells..(i + 1) * cells]
    }
}

/// How often each intra-patch channel was active across a batch of patches.
#[derive(Debug, Clone, Serialize)]
pub struct ActivationHistogram {
    /// One count per channel, `patch_size²` entries.
    pub counts: Vec<u64>,
    pub total_patches: u64,
}

/// Population mean and standard deviation of one patch's opacities.
pub fn patch_stats(patch: &[f64]) -> Result<(f64, f64)> {
    if patch.is_empty() {
        return Err(Error::shape("patch has no cells".to_string()));
    }
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let var = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Flags the channels whose opacity strictly exceeds mean + one standard
/// deviation.
pub fn activation_mask(patch: &[f64]) -> Result<Vec<bool>> {
    let (mean, sd) = patch_stats(patch)?;
    Ok(patch.iter().map(|&v| v > mean + sd).collect())
}

/// Sums activation masks over every patch of every grid. All grids must
/// share one patch size.
pub fn aggregate_histogram(grids: &[PatchOpacityGrid]) -> Result<ActivationHistogram> {
    let Some(first) = grids.first() else {
        return Err(Error::shape("no patch grids to aggregate".to_string()));
    };
    let cells = first.patch_size * first.patch_size;
    let mut counts = vec![0u64; cells];
    let mut total_patches = 0u64;
    for grid in grids {
        if grid.patch_size != first.patch_size {
            return Err(Error::shape(format!(
                "mixed patch sizes {} and {}",
                first.patch_size, grid.patch_size
            )));
        }
        for p in 0..grid.n_patches() {
            for (c, active) in activation_mask(grid.patch(p))?.into_iter().enumerate() {
                counts[c] += active as u64;
            }
            total_patches += 1;
        }
    }
    Ok(ActivationHistogram {
        counts,
        total_patches,
    })
}

/// The `keep` channels with the highest activation counts, returned in
/// ascending index order. Count ties break toward the lower index, so
/// zero-count channels fill remaining slots lowest-index first.
pub fn select_channels(histogram: &ActivationHistogram, keep: usize) -> Result<Vec<usize>> {
    if keep == 0 || keep > histogram.counts.len() {
        return Err(Error::domain(format!(
            "cannot keep {} of {} channels",
            keep,
            histogram.counts.len()
        )));
    }
    let mut order: Vec<usize> = (0..histogram.counts.len()).collect();
    order.sort_by(|&a, &b| histogram.counts[b].cmp(&histogram.counts[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Keeps only the selected intra-patch channels of a patch-major scene.
///
/// The scene must hold whole patches: `patch_size²` consecutive Gaussians
/// per patch, channel index = position within the patch. Relative order is
/// preserved.
pub fn apply_pruning(
    scene: &GaussianScene,
    patch_size: usize,
    channels: &[usize],
) -> Result<GaussianScene> {
    if patch_size == 0 {
        return Err(Error::domain("patch_size must be >= 1".to_string()));
    }
    let cells = patch_size * patch_size;
    if !scene.len().is_multiple_of(cells) {
        return Err(Error::shape(format!(
            "{} Gaussians do not form whole patches of {} cells",
            scene.len(),
            cells
        )));
    }
    let mut sorted = channels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != channels.len() {
        return Err(Error::domain("duplicate channel indices".to_string()));
    }
    if sorted.last().is_some_and(|&c| c >= cells) {
        return Err(Error::domain(format!(
            "channel {} outside patch of {} cells",
            sorted.last().unwrap(),
            cells
        )));
    }
    let mut out = GaussianScene::with_capacity(scene.len() / cells * sorted.len());
    out.time_base = scene.time_base;
    for patch in 0..scene.len() / cells {
        for &c in &sorted {
            out.push(scene.gaussian(patch * cells + c));
        }
    }
    Ok(out)
}

/// Primitive-count accounting for spatially and temporally densified token
/// grids.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensifyPlan {
    /// Spatial upsampling factor per image axis.
    pub spatial_factor: u32,
    /// Temporal upsampling factor.
    pub temporal_factor: u32,
    /// Channels kept per patch after pruning.
    pub kept_channels: u32,
    pub patch_size: u32,
    /// Gaussians per input pixel per frame: `spatial² · temporal · kept / p²`.
    pub gaussian_ratio: f64,
    /// Raw sample-count multiplier before pruning: `spatial² · temporal`.
    pub sampling_gain: f64,
}

pub fn densify_plan(
    spatial_factor: u32,
    temporal_factor: u32,
    kept_channels: u32,
    patch_size: u32,
) -> Result<DensifyPlan> {
    if spatial_factor == 0 || temporal_factor == 0 || kept_channels == 0 || patch_size == 0 {
        return Err(Error::domain("densify factors must be >= 1".to_string()));
    }
    if kept_channels > patch_size * patch_size {
        return Err(Error::domain(format!(
            "cannot keep {} of {} channels",
            kept_channels,
            patch_size * patch_size
        )));
    }
    let gain = (spatial_factor as f64) * (spatial_factor as f64) * (temporal_factor as f64);
    Ok(DensifyPlan {
        spatial_factor,
        temporal_factor,
        kept_channels,
        patch_size,
        gaussian_ratio: gain * (kept_channels as f64)
            / ((patch_size as f64) * (patch_size as f64)),
        sampling_gain: gain,
    })
}

/// Fraction of total activated opacity mass retained by each selection
/// strategy at the same budget.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PruningComparison {
    pub histogram_kept_activation: f64,
    pub random_kept_activation: f64,
    pub uniform_kept_activation: f64,
}

/// Compares histogram-guided channel selection against random and
/// evenly-spaced baselines on the same patch batch. Retention is the kept
/// share of opacity mass summed over activated cells; 1.0 when no cell
/// activates.
pub fn compare_pruning_strategies(
    grids: &[PatchOpacityGrid],
    keep: usize,
    seed: u64,
) -> Result<PruningComparison> {
    let histogram = aggregate_histogram(grids)?;
    let cells = histogram.counts.len();
    let histogram_channels = select_channels(&histogram, keep)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_channels = rand::seq::index::sample(&mut rng, cells, keep).into_vec();
    random_channels.sort_unstable();
    let uniform_channels: Vec<usize> = (0..keep).map(|i| i * cells / keep).collect();

    let retention = |channels: &[usize]| -> Result<f64> {
        let mut member = vec![false; cells];
        for &c in channels {
            member[c] = true;
        }
        let mut kept = 0.0;
        let mut total = 0.0;
        for grid in grids {
            for p in 0..grid.n_patches() {
                let patch = grid.patch(p);
                for (c, active) in activation_mask(patch)?.into_iter().enumerate() {
                    if active {
                        total += patch[c];
                        if member[c] {
                            kept += patch[c];
                        }
                    }
                }
            }
        }
        Ok(if total == 0.0 { 1.0 } else { kept / total })
    };

    Ok(PruningComparison {
        histogram_kept_activation: retention(&histogram_channels)?,
        random_kept_activation: retention(&random_channels)?,
        uniform_kept_activation: retention(&uniform_channels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Quat, Vec3};
    use crate::model::Gaussian4D;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_patch_activates_nothing() {
        let patch = vec![0.4; 9];
        let (mean, sd) = patch_stats(&patch).unwrap();
        assert!((mean - 0.4).abs() < 1e-15);
        assert!(sd < 1e-15);
        // 0.4 > 0.4 + 0 is false for every cell.
        assert!(activation_mask(&patch).unwrap().iter().all(|a| !a));
    }

    #[test]
    fn two_value_patch_stats() {
        let patch = vec![0.0, 1.0];
        let (mean, sd) = patch_stats(&patch).unwrap();
        assert!((mean - 0.5).abs() < 1e-15);
        assert!((sd - 0.5).abs() < 1e-15);
        assert_eq!(activation_mask(&patch).unwrap(), vec![false, false]);
    }

    #[test]
    fn one_hot_patch_activates_only_the_hot_cell() {
        // 196 cells, one 1.0: mean = 1/196, sd = sqrt(195)/196.
        let mut patch = vec![0.0; 196];
        patch[77] = 1.0;
        let (mean, sd) = patch_stats(&patch).unwrap();
        assert!((mean + sd - 0.07634816348861705).abs() < 1e-15);
        let mask = activation_mask(&patch).unwrap();
        assert_eq!(mask.iter().filter(|a| **a).count(), 1);
        assert!(mask[77]);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        for _ in 0..20 {
            let n = rng.random_range(1..300);
            let patch: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let (mean, sd) = patch_stats(&patch).unwrap();
            let m2: f64 = patch.iter().sum::<f64>() / n as f64;
            let v2: f64 = patch.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / n as f64;
            assert!((mean - m2).abs() < 1e-12);
            assert!((sd - v2.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_shift_invariance_and_count_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let patch: Vec<f64> = (0..49).map(|_| rng.random_range(0.0..0.5)).collect();
        let shifted: Vec<f64> = patch.iter().map(|v| v + 0.25).collect();
        assert_eq!(
            activation_mask(&patch).unwrap(),
            activation_mask(&shifted).unwrap()
        );

        let g1 = PatchOpacityGrid::new(7, patch.clone()).unwrap();
        let g2 = PatchOpacityGrid::new(7, shifted).unwrap();
        let h1 = aggregate_histogram(std::slice::from_ref(&g1)).unwrap();
        let h2 = aggregate_histogram(std::slice::from_ref(&g2)).unwrap();
        let both = aggregate_histogram(&[g1, g2]).unwrap();
        assert_eq!(both.total_patches, 2);
        for c in 0..49 {
            assert_eq!(both.counts[c], h1.counts[c] + h2.counts[c]);
        }
    }

    #[test]
    fn histogram_matches_per_patch_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let grids: Vec<PatchOpacityGrid> = (0..3)
            .map(|_| {
                let patches = rng.random_range(1..6);
                PatchOpacityGrid::new(4, (0..16 * patches).map(|_| rng.random()).collect())
                    .unwrap()
            })
            .collect();
        let got = aggregate_histogram(&grids).unwrap();
        let mut want = vec![0u64; 16];
        for g in &grids {
            for p in 0..g.n_patches() {
                for (c, a) in activation_mask(g.patch(p)).unwrap().iter().enumerate() {
                    want[c] += *a as u64;
                }
            }
        }
        assert_eq!(got.counts, want);
    }

    #[test]
    fn select_orders_by_count_then_index() {
        let h = ActivationHistogram {
            counts: vec![5, 9, 9, 0, 7, 0],
            total_patches: 10,
        };
        assert_eq!(select_channels(&h, 3).unwrap(), vec![1, 2, 4]);
        // Both remaining channels count zero; index 3 fills before 5.
        assert_eq!(select_channels(&h, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_channels(&h, 0).is_err());
        assert!(select_channels(&h, 7).is_err());
    }

    fn patch_major_scene(patches: usize, patch_size: usize) -> GaussianScene {
        let cells = patch_size * patch_size;
        let mut scene = GaussianScene::new();
        for i in 0..patches * cells {
            scene.push(Gaussian4D::new(
                Vec3::new(i as f64, 0.0, 1.0),
                [0.1, 0.1],
                Quat::IDENTITY,
                0.5,
                Vec3::new(0.1, 0.2, 0.3),
                0.0,
                1.0,
                Vec3::ZERO,
                Vec3::ZERO,
            ));
        }
        scene
    }

    #[test]
    fn pruning_keeps_selected_cells_in_order() {
        let scene = patch_major_scene(3, 2);
        let pruned = apply_pruning(&scene, 2, &[0, 3]).unwrap();
        assert_eq!(pruned.len(), 6);
        let want: Vec<f64> = vec![0.0, 3.0, 4.0, 7.0, 8.0, 11.0];
        let got: Vec<f64> = pruned.positions.iter().map(|p| p.x).collect();
        assert_eq!(got, want);

        let all: Vec<usize> = (0..4).collect();
        let identity = apply_pruning(&scene, 2, &all).unwrap();
        assert_eq!(identity, scene);
    }

    #[test]
    fn pruning_rejects_bad_inputs() {
        let scene = patch_major_scene(2, 2);
        assert!(apply_pruning(&scene, 3, &[0]).is_err());
        assert!(apply_pruning(&scene, 2, &[0, 0]).is_err());
        assert!(apply_pruning(&scene, 2, &[4]).is_err());
    }

    #[test]
    fn densify_plan_is_exact() {
        let plan = densify_plan(2, 4, 160, 14).unwrap();
        assert_eq!(plan.sampling_gain, 16.0);
        assert_eq!(plan.gaussian_ratio, 16.0 * 160.0 / 196.0);
        assert!((plan.gaussian_ratio / 16.0 - 0.8163265306122449).abs() < 1e-15);
        assert!(densify_plan(0, 1, 1, 14).is_err());
        assert!(densify_plan(1, 1, 197, 14).is_err());
    }

    #[test]
    fn concentrated_mass_is_fully_retained() {
        // Every patch activates the same 4 cells; keeping those 4 retains
        // everything.
        let mut values = Vec::new();
        for _ in 0..50 {
            let mut patch = vec![0.01; 36];
            for &c in &[3, 10, 20, 33] {
                patch[c] = 0.9;
            }
            values.extend(patch);
        }
        let grid = PatchOpacityGrid::new(6, values).unwrap();
        let cmp = compare_pruning_strategies(&[grid], 4, 7).unwrap();
        assert_eq!(cmp.histogram_kept_activation, 1.0);
        assert!(cmp.random_kept_activation <= 1.0);
        assert!(cmp.uniform_kept_activation <= 1.0);
    }

    #[test]
    fn random_selection_retains_budget_fraction_on_uniform_mass() {
        // I.i.d. patches spread activation evenly, so random keep/total
        // concentrates near keep/cells.
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let cells = 36;
        let keep = 9;
        let grids: Vec<PatchOpacityGrid> = (0..4)
            .map(|_| {
                PatchOpacityGrid::new(
                    6,
                    (0..cells * 500).map(|_| rng.random()).collect(),
                )
                .unwrap()
            })
            .collect();
        let mut mean = 0.0;
        let trials = 30;
        for s in 0..trials {
            mean += compare_pruning_strategies(&grids, keep, s).unwrap().random_kept_activation;
        }
        mean /= trials as f64;
        let expect = keep as f64 / cells as f64;
        assert!(
            (mean - expect).abs() < 0.03,
            "mean random retention {mean} vs {expect}"
        );
    }

    #[test]
    fn grid_construction_rejects_bad_values() {
        assert!(PatchOpacityGrid::new(0, vec![]).is_err());
        assert!(PatchOpacityGrid::new(2, vec![0.5; 7]).is_err());
        assert!(PatchOpacityGrid::new(2, vec![0.5, 0.5, 0.5, 1.5]).is_err());
        assert!(PatchOpacityGrid::new(2, vec![0.5; 4]).is_ok());
    }
}
