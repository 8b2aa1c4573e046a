//! Unconstrained reparameterization of scene parameters.
//!
//! The optimizer works on a flat vector of free reals; the decode maps each
//! group back into its constrained domain: scales through exp, opacity and
//! color through the sigmoid, lifespan through a softplus floored at the
//! minimum lifespan, orientation through quaternion normalization. Position,
//! temporal center, velocity, and angular velocity are stored raw.

use crate::math::{Quat, Vec3};
use crate::model::{GaussianScene, MIN_LIFESPAN};

/// Free parameters per Gaussian.
pub const PARAM_STRIDE: usize = 21;

/// Offsets of each group within a Gaussian's parameter block.
pub(crate) const POSITION: usize = 0;
pub(crate) const SCALE: usize = 3;
pub(crate) const QUAT: usize = 5;
pub(crate) const OPACITY: usize = 9;
pub(crate) const COLOR: usize = 10;
pub(crate) const T_CENTER: usize = 13;
pub(crate) const LIFESPAN: usize = 14;
pub(crate) const VELOCITY: usize = 15;
pub(crate) const ANG_VELOCITY: usize = 18;

/// Flat unconstrained parameter vector for a whole scene,
/// [`PARAM_STRIDE`] entries per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub data: Vec<f64>,
    pub time_base: f64,
    /// How many values had to be clamped into the sigmoid's open domain
    /// during encoding; nonzero is worth a warning to the caller.
    pub clamped: usize,
}

impl ParamVector {
    pub fn len_gaussians(&self) -> usize {
        self.data.len() / PARAM_STRIDE
    }

    /// Human-readable group name for a flat index, for diagnostics.
    pub fn group_name(flat_index: usize) -> &'static str {
        match flat_index % PARAM_STRIDE {
            0..=2 => "position",
            3..=4 => "scale",
            5..=8 => "orientation",
            9 => "opacity",
            10..=12 => "color",
            13 => "t_center",
            14 => "lifespan",
            15..=17 => "velocity",
            _ => "ang_velocity",
        }
    }

    /// First non-finite entry as (gaussian index, group name).
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / PARAM_STRIDE, Self::group_name(i)))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64, clamped: &mut usize) -> f64 {
    let p = if (1e-6..=1.0 - 1e-6).contains(&p) {
        p
    } else {
        *clamped += 1;
        p.clamp(1e-6, 1.0 - 1e-6)
    };
    (p / (1.0 - p)).ln()
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Maps a scene into unconstrained parameters. Opacity or color exactly at
/// 0 or 1 is clamped into the sigmoid's open domain; the returned vector
/// counts such clamps.
pub fn encode_params(scene: &GaussianScene) -> ParamVector {
    let n = scene.len();
    let mut data = vec![0.0; n * PARAM_STRIDE];
    let mut clamped = 0;
    for i in 0..n {
        let p = &mut data[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
        p[POSITION..POSITION + 3].copy_from_slice(&scene.positions[i].to_array());
        p[SCALE] = scene.scales[i][0].ln();
        p[SCALE + 1] = scene.scales[i][1].ln();
        p[QUAT..QUAT + 4].copy_from_slice(&scene.orientations[i].to_array());
        p[OPACITY] = logit(scene.opacities[i], &mut clamped);
        let c = scene.colors[i].to_array();
        for j in 0..3 {
            p[COLOR + j] = logit(c[j], &mut clamped);
        }
        p[T_CENTER] = scene.t_centers[i];
        p[LIFESPAN] = softplus_inv(scene.lifespans[i]);
        p[VELOCITY..VELOCITY + 3].copy_from_slice(&scene.velocities[i].to_array());
        p[ANG_VELOCITY..ANG_VELOCITY + 3].copy_from_slice(&scene.ang_velocities[i].to_array());
    }
    ParamVector {
        data,
        time_base: scene.time_base,
        clamped,
    }
}

/// Decodes unconstrained parameters back into a valid scene.
pub fn decode_params(pv: &ParamVector) -> GaussianScene {
    let n = pv.len_gaussians();
    let mut scene = GaussianScene::with_capacity(n);
    scene.time_base = pv.time_base;
    for i in 0..n {
        let p = &pv.data[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
        scene.positions.push(Vec3::new(p[0], p[1], p[2]));
        scene.scales.push([p[SCALE].exp(), p[SCALE + 1].exp()]);
        scene.orientations.push(
            Quat::new(p[QUAT], p[QUAT + 1], p[QUAT + 2], p[QUAT + 3]).normalized(),
        );
        scene.opacities.push(sigmoid(p[OPACITY]));
        scene.colors.push(Vec3::new(
            sigmoid(p[COLOR]),
            sigmoid(p[COLOR + 1]),
            sigmoid(p[COLOR + 2]),
        ));
        scene.t_centers.push(p[T_CENTER]);
        scene.lifespans.push(softplus(p[LIFESPAN]).max(MIN_LIFESPAN));
        scene
            .velocities
            .push(Vec3::new(p[VELOCITY], p[VELOCITY + 1], p[VELOCITY + 2]));
        scene.ang_velocities.push(Vec3::new(
            p[ANG_VELOCITY],
            p[ANG_VELOCITY + 1],
            p[ANG_VELOCITY + 2],
        ));
    }
    scene
}

/// True when the decoded lifespan sits on the floor, where its gradient is
/// zero by convention.
pub(crate) fn lifespan_floored(theta: f64) -> bool {
    softplus(theta) < MIN_LIFESPAN
}
