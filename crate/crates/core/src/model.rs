//! The dynamic surfel representation and its closed-form time evaluation.
//!
//! A `Gaussian4D` is a flat oriented Gaussian disk with a temporal footprint:
//! opacity peaks at `t_center` and decays so that it reaches
//! `BOUNDARY_OPACITY` times the peak at `t_center ± lifespan/2`. Position
//! drifts linearly with `velocity`; orientation spins at the constant
//! angle-axis rate `ang_velocity` about the surfel's own center.

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};

/// Opacity multiplier at the lifespan boundary, fixed for all engine defaults.
pub const BOUNDARY_OPACITY: f64 = 0.05;

/// Smallest admissible lifespan in seconds; shorter values are clamped at
/// construction so the temporal falloff stays finite.
pub const MIN_LIFESPAN: f64 = 1e-4;

/// One dynamic surfel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian4D {
    pub position: Vec3,
    /// Per-tangent-axis extent in world units, both components > 0.
    pub scale: [f64; 2],
    /// Unit quaternion (w, x, y, z); the third rotation column is the surfel
    /// normal.
    pub orientation: Quat,
    /// Peak opacity in [0, 1].
    pub opacity: f64,
    /// RGB in [0, 1].
    pub color: Vec3,
    /// Time of peak opacity, seconds.
    pub t_center: f64,
    /// Temporal extent in seconds, >= MIN_LIFESPAN.
    pub lifespan: f64,
    /// World units per second.
    pub velocity: Vec3,
    /// Angle-axis radians per second.
    pub ang_velocity: Vec3,
}

/// A Gaussian's spatial state frozen at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfelSnapshot {
    pub position_t: Vec3,
    pub orientation_t: Quat,
    pub opacity_t: f64,
    pub scale: [f64; 2],
    pub color: Vec3,
    /// Third rotation column of `orientation_t`, unit length.
    pub normal_t: Vec3,
}

impl Gaussian4D {
    /// Builds a surfel with the domain constraints enforced: orientation
    /// normalized, opacity clamped to [0, 1], scale floored at 1e-6,
    /// lifespan floored at MIN_LIFESPAN.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        position: Vec3,
        scale: [f64; 2],
        orientation: Quat,
        opacity: f64,
        color: Vec3,
        t_center: f64,
        lifespan: f64,
        velocity: Vec3,
        ang_velocity: Vec3,
    ) -> Self {
        Gaussian4D {
            position,
            scale: [scale[0].max(1e-6), scale[1].max(1e-6)],
            orientation: orientation.normalized(),
            opacity: opacity.clamp(0.0, 1.0),
            color,
            t_center,
            lifespan: lifespan.max(MIN_LIFESPAN),
            velocity,
            ang_velocity,
        }
    }

    /// Temporal opacity `o · exp(-(t-c)² / (2σ²))` with σ from
    /// [`temporal_sigma`] at the engine-wide boundary opacity.
    pub fn opacity_at(&self, t: f64) -> f64 {
        let dt = t - self.t_center;
        let sigma_sq = sigma_squared(self.lifespan, BOUNDARY_OPACITY);
        self.opacity * (-0.5 * dt * dt / sigma_sq).exp()
    }

    /// Center position; exactly linear in `t - t_center`.
    pub fn position_at(&self, t: f64) -> Vec3 {
        self.position + self.velocity * (t - self.t_center)
    }

    /// Orientation spun by the angle-axis rate, renormalized.
    pub fn orientation_at(&self, t: f64) -> Quat {
        let spin = Quat::from_angle_axis(self.ang_velocity * (t - self.t_center));
        (self.orientation * spin).normalized()
    }

    /// Full spatial state at `t`.
    pub fn snapshot_at(&self, t: f64) -> SurfelSnapshot {
        let orientation_t = self.orientation_at(t);
        SurfelSnapshot {
            position_t: self.position_at(t),
            orientation_t,
            opacity_t: self.opacity_at(t),
            scale: self.scale,
            color: self.color,
            normal_t: orientation_t.rotation_columns()[2],
        }
    }
}

#[inline]
pub(crate) fn sigma_squared(lifespan: f64, boundary_opacity: f64) -> f64 {
    let half = 0.5 * lifespan;
    -(half * half) / (2.0 * boundary_opacity.ln())
}

/// Width of the temporal opacity falloff:
/// `σ = sqrt(-(lifespan/2)² / (2·ln(boundary_opacity)))`.
///
/// Strictly increasing (linear) in lifespan.
pub fn temporal_sigma(lifespan: f64, boundary_opacity: f64) -> Result<f64> {
    if lifespan.is_nan() || lifespan <= 0.0 {
        return Err(Error::domain(format!(
            "temporal_sigma needs lifespan > 0, got {lifespan}"
        )));
    }
    if !(boundary_opacity > 0.0 && boundary_opacity < 1.0) {
        return Err(Error::domain(format!(
            "temporal_sigma needs boundary opacity in (0,1), got {boundary_opacity}"
        )));
    }
    Ok(sigma_squared(lifespan, boundary_opacity).sqrt())
}

/// Structure-of-arrays collection of [`Gaussian4D`] on a shared clock.
///
/// `time_base` offsets the scene clock: a query at global time `t` evaluates
/// each Gaussian at local time `t - time_base`. Rolling-window assembly uses
/// this to place per-window scenes on one global timeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianScene {
    pub positions: Vec<Vec3>,
    pub scales: Vec<[f64; 2]>,
    pub orientations: Vec<Quat>,
    pub opacities: Vec<f64>,
    pub colors: Vec<Vec3>,
    pub t_centers: Vec<f64>,
    pub lifespans: Vec<f64>,
    pub velocities: Vec<Vec3>,
    pub ang_velocities: Vec<Vec3>,
    pub time_base: f64,
}

impl GaussianScene {
    pub fn new() -> Self {
        GaussianScene::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        GaussianScene {
            positions: Vec::with_capacity(n),
            scales: Vec::with_capacity(n),
            orientations: Vec::with_capacity(n),
            opacities: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            t_centers: Vec::with_capacity(n),
            lifespans: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            ang_velocities: Vec::with_capacity(n),
            time_base: 0.0,
        }
    }

    pub fn from_gaussians<I: IntoIterator<Item = Gaussian4D>>(gaussians: I, time_base: f64) -> Self {
        let mut scene = GaussianScene {
            time_base,
            ..GaussianScene::default()
        };
        for g in gaussians {
            scene.push(g);
        }
        scene
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, g: Gaussian4D) {
        self.positions.push(g.position);
        self.scales.push(g.scale);
        self.orientations.push(g.orientation);
        self.opacities.push(g.opacity);
        self.colors.push(g.color);
        self.t_centers.push(g.t_center);
        self.lifespans.push(g.lifespan);
        self.velocities.push(g.velocity);
        self.ang_velocities.push(g.ang_velocity);
    }

    /// Gathers one Gaussian out of the parallel arrays.
    pub fn gaussian(&self, i: usize) -> Gaussian4D {
        Gaussian4D {
            position: self.positions[i],
            scale: self.scales[i],
            orientation: self.orientations[i],
            opacity: self.opacities[i],
            color: self.colors[i],
            t_center: self.t_centers[i],
            lifespan: self.lifespans[i],
            velocity: self.velocities[i],
            ang_velocity: self.ang_velocities[i],
        }
    }

    /// Checks the parallel-array and per-field invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lengths = [
            self.scales.len(),
            self.orientations.len(),
            self.opacities.len(),
            self.colors.len(),
            self.t_centers.len(),
            self.lifespans.len(),
            self.velocities.len(),
            self.ang_velocities.len(),
        ];
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::shape(format!(
                "scene arrays disagree on count: positions={n}, others={lengths:?}"
            )));
        }
        for i in 0..n {
            if (self.orientations[i].norm() - 1.0).abs() > 1e-6 {
                return Err(Error::domain(format!("gaussian {i}: non-unit orientation")));
            }
            if !(0.0..=1.0).contains(&self.opacities[i]) {
                return Err(Error::domain(format!("gaussian {i}: opacity outside [0,1]")));
            }
            if self.scales[i][0] <= 0.0 || self.scales[i][1] <= 0.0 {
                return Err(Error::domain(format!("gaussian {i}: non-positive scale")));
            }
            if self.lifespans[i] <= 0.0 {
                return Err(Error::domain(format!("gaussian {i}: non-positive lifespan")));
            }
        }
        Ok(())
    }
}

/// Evaluates every Gaussian at global time `t` (scene clock = `t - time_base`).
pub fn evaluate_at_time(scene: &GaussianScene, t: f64) -> Vec<SurfelSnapshot> {
    let local_t = t - scene.time_base;
    (0..scene.len())
        .map(|i| scene.gaussian(i).snapshot_at(local_t))
        .collect()
}
