//! Exact reverse-mode gradients of the training loss with respect to the
//! unconstrained parameter vector.
//!
//! The chain runs loss → rendered planes (color / depth / normal) →
//! front-to-back compositing → splat kernel → ray–plane intersection →
//! time-evaluated surfel → raw parameters. Two structural choices are
//! frozen during differentiation, matching standard splatting practice: the
//! per-pixel hit order (depth sort) and the alpha-clamp / kernel-cutoff /
//! transmittance-floor branches, whose subgradients are taken as zero.

use rayon::prelude::*;

use crate::buffer::ImageBuf;
use crate::camera::Frame;
use crate::error::{Error, Result};
use crate::loss::{ssim_with_grad, total_loss, warmup, LossWeights};
use crate::math::{
    from_angle_axis_jacobian, quat_mul_backward, quat_normalize_backward,
    rotation_columns_backward, Vec3,
};
use crate::model::{sigma_squared, GaussianScene, BOUNDARY_OPACITY};
use crate::render::{collect_hits, prepare, render, Hit, RenderOutput};

use super::params::{
    decode_params, lifespan_floored, sigmoid, ParamVector, ANG_VELOCITY, COLOR, LIFESPAN,
    OPACITY, PARAM_STRIDE, POSITION, QUAT, SCALE, T_CENTER, VELOCITY,
};
use super::FitConfig;

/// Renders every frame and evaluates the full training loss at `step`.
pub fn forward_loss(
    pv: &ParamVector,
    frames: &[Frame],
    cfg: &FitConfig,
    step: u64,
) -> Result<(f64, Vec<RenderOutput>)> {
    if frames.is_empty() {
        return Err(Error::shape("no frames to fit against".to_string()));
    }
    let scene = decode_params(pv);
    let outs: Vec<RenderOutput> = frames
        .par_iter()
        .map(|f| render(&scene, &f.intrinsics, &f.pose, f.timestamp, &cfg.render))
        .collect::<Result<_>>()?;
    let breakdown = total_loss(&outs, frames, &scene, step, &cfg.weights, None)?;
    Ok((breakdown.total, outs))
}

/// Per-snapshot adjoints accumulated over a frame's pixels.
#[derive(Clone, Copy, Default)]
struct SnapAdjoint {
    x_t: Vec3,
    r1: Vec3,
    r2: Vec3,
    r3: Vec3,
    scale: [f64; 2],
    opacity_t: f64,
    color: Vec3,
}

/// Adjoint planes of one frame's loss terms.
struct PlaneAdjoints {
    color: ImageBuf,
    depth: Option<ImageBuf>,
    normal: Option<ImageBuf>,
}

/// d(total)/d(planes) for one frame, given the already-rendered outputs and
/// the warmed weights. `w_frames`/`w_depth`/`w_normal` are the denominators
/// of the respective frame averages.
fn plane_adjoints(
    out: &RenderOutput,
    frame: &Frame,
    warmed: &LossWeights,
    w_frames: f64,
    w_depth: f64,
    w_normal: f64,
) -> Result<PlaneAdjoints> {
    let (w, h) = (out.color.width(), out.color.height());
    let samples = (w * h * 3) as f64;
    let mut g_color = ImageBuf::new(w, h, 3);
    {
        let g = g_color.data_mut();
        let c = out.color.data();
        let t = frame.image.data();
        for i in 0..g.len() {
            g[i] = 2.0 * (c[i] - t[i]) / (samples * w_frames);
        }
    }
    if warmed.ssim != 0.0 {
        let (_, ssim_grad) = ssim_with_grad(&out.color, &frame.image)?;
        let g = g_color.data_mut();
        for (gi, si) in g.iter_mut().zip(ssim_grad.data()) {
            *gi -= warmed.ssim / w_frames * si;
        }
    }

    let depth = match (&frame.depth_target, warmed.depth != 0.0) {
        (Some(target), true) => {
            let mut g = ImageBuf::new(w, h, 1);
            let pixels = (w * h) as f64;
            for ((gi, di), ti) in g
                .data_mut()
                .iter_mut()
                .zip(out.depth.data())
                .zip(target.data())
            {
                *gi = warmed.depth * 2.0 * (di - ti) / (pixels * w_depth);
            }
            Some(g)
        }
        _ => None,
    };
    let normal = match (&frame.normal_target, warmed.normal != 0.0) {
        (Some(target), true) => {
            let mut g = ImageBuf::new(w, h, 3);
            let samples = (w * h * 3) as f64;
            for ((gi, ni), ti) in g
                .data_mut()
                .iter_mut()
                .zip(out.normal.data())
                .zip(target.data())
            {
                *gi = warmed.normal * 2.0 * (ni - ti) / (samples * w_normal);
            }
            Some(g)
        }
        _ => None,
    };
    Ok(PlaneAdjoints {
        color: g_color,
        depth,
        normal,
    })
}

/// Backpropagates one frame's plane adjoints into model-space parameter
/// gradients (same 21-stride layout as [`ParamVector`], but on the decoded
/// values: unit quaternion, linear scale, plain opacity/color/lifespan).
fn frame_backward(
    scene: &GaussianScene,
    frame: &Frame,
    adj: &PlaneAdjoints,
    cfg: &FitConfig,
) -> Vec<f64> {
    let n = scene.len();
    let mut snap_adj = vec![SnapAdjoint::default(); n];
    let prep = prepare(
        scene,
        &frame.intrinsics,
        &frame.pose,
        frame.timestamp,
        &cfg.render,
    );
    let bg = cfg.render.background;

    let mut hits: Vec<Hit> = Vec::new();
    for py in 0..frame.intrinsics.height {
        for px in 0..frame.intrinsics.width {
            let ray = frame.pose.ray_through_pixel(&frame.intrinsics, px, py);
            let candidates = prep.tile_for_pixel(px, py);
            let t_final = collect_hits(&prep.snaps, candidates, &ray, &cfg.render, &mut hits);
            if hits.is_empty() {
                continue;
            }

            let g_color_px = Vec3::from_array(adj.color.pixel(px, py).try_into().unwrap());
            let g_depth_px = adj.depth.as_ref().map_or(0.0, |g| g.get(px, py, 0));
            let g_normal_px = adj
                .normal
                .as_ref()
                .map_or(Vec3::ZERO, |g| Vec3::from_array(g.pixel(px, py).try_into().unwrap()));

            // Recompose the pixel's accumulators (depth numerator, unflipped
            // normal sum) and the per-hit flip signs.
            let mut d_acc = 0.0;
            let mut n_acc = Vec3::ZERO;
            let mut signs: Vec<f64> = Vec::with_capacity(hits.len());
            for hit in &hits {
                let snap = &prep.snaps[hit.index as usize];
                let weight = hit.alpha * hit.trans;
                d_acc += hit.lambda * weight;
                let s = if snap.normal_t.dot(ray.dir) > 0.0 { -1.0 } else { 1.0 };
                n_acc += snap.normal_t * (s * weight);
                signs.push(s);
            }
            let alpha_px = 1.0 - t_final;
            let denom = alpha_px + 1e-10;

            let g_d_acc = g_depth_px / denom;
            let g_alpha_px = -g_depth_px * d_acc / (denom * denom);
            // Unit-normal backward; a zero accumulator renders a zero normal
            // whose subgradient is zero.
            let n_norm = n_acc.norm();
            let g_n_acc = if n_norm > 0.0 {
                let unit = n_acc * (1.0 / n_norm);
                (g_normal_px - unit * unit.dot(g_normal_px)) * (1.0 / n_norm)
            } else {
                Vec3::ZERO
            };
            let g_t_final = g_color_px.dot(bg) - g_alpha_px;

            // Suffix accumulator: S = sum over later hits of gw·w, so that
            // d(loss)/d(alpha_k) = gw_k·T_k − (S + gT_F·T_F)/(1−alpha_k).
            let mut suffix = 0.0;
            for (k, hit) in hits.iter().enumerate().rev() {
                let snap = &prep.snaps[hit.index as usize];
                let a = &mut snap_adj[hit.index as usize];
                let weight = hit.alpha * hit.trans;
                let sign = signs[k];

                let gw = g_color_px.dot(snap.color)
                    + g_d_acc * hit.lambda
                    + sign * g_n_acc.dot(snap.normal_t);
                let g_alpha =
                    gw * hit.trans - (suffix + g_t_final * t_final) / (1.0 - hit.alpha);
                suffix += gw * weight;

                a.color += g_color_px * weight;
                a.r3 += g_n_acc * (sign * weight);

                let mut g_lambda = g_d_acc * weight;
                // A clamped alpha blocks the kernel path entirely.
                let (g_u, g_v, g_opacity_t) = if hit.clamped {
                    (0.0, 0.0, 0.0)
                } else {
                    (
                        -g_alpha * hit.alpha * hit.u,
                        -g_alpha * hit.alpha * hit.v,
                        g_alpha * hit.kernel,
                    )
                };

                // Ray-plane geometry: u = ((o + dir·λ − x_t)·r1)/s_u,
                // λ = ((x_t − o)·r3)/(dir·r3).
                let [r1, r2, r3] = snap.orientation_t.rotation_columns();
                let den = ray.dir.dot(r3);
                let p = ray.origin + ray.dir * hit.lambda;
                let d = p - snap.position_t;
                let (su, sv) = (snap.scale[0], snap.scale[1]);

                g_lambda += g_u * ray.dir.dot(r1) / su + g_v * ray.dir.dot(r2) / sv;
                a.x_t += r1 * (-g_u / su) + r2 * (-g_v / sv) + r3 * (g_lambda / den);
                a.r1 += d * (g_u / su);
                a.r2 += d * (g_v / sv);
                a.r3 += d * (-g_lambda / den);
                a.scale[0] += -g_u * hit.u / su;
                a.scale[1] += -g_v * hit.v / sv;
                a.opacity_t += g_opacity_t;
            }
        }
    }

    // Snapshot adjoints -> model-space parameter gradients through the
    // temporal evaluation at this frame's timestamp.
    let local_t = frame.timestamp - scene.time_base;
    let mut grad = vec![0.0; n * PARAM_STRIDE];
    for i in 0..n {
        let adj = &snap_adj[i];
        let g = &mut grad[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
        let dt = local_t - scene.t_centers[i];
        let q = scene.orientations[i];
        let omega = scene.ang_velocities[i];
        let velocity = scene.velocities[i];
        let opacity = scene.opacities[i];
        let lifespan = scene.lifespans[i];

        // Orientation chain: columns -> q_t -> normalize -> q ⊗ spin ->
        // (q, angle-axis).
        let (spin, spin_jac) = from_angle_axis_jacobian(omega * dt);
        let q_unnorm = q * spin;
        let g_qt = rotation_columns_backward(prep.snaps[i].orientation_t, [adj.r1, adj.r2, adj.r3]);
        let g_qu = quat_normalize_backward(q_unnorm, g_qt);
        let (g_q, g_spin) = quat_mul_backward(q, spin, g_qu);
        let mut g_axis = Vec3::ZERO;
        for (row, g_row) in g_spin.iter().enumerate() {
            g_axis.x += g_row * spin_jac[row][0];
            g_axis.y += g_row * spin_jac[row][1];
            g_axis.z += g_row * spin_jac[row][2];
        }
        for (slot, val) in g.iter_mut().skip(QUAT).take(4).zip(g_q) {
            *slot += val;
        }
        g[ANG_VELOCITY] += g_axis.x * dt;
        g[ANG_VELOCITY + 1] += g_axis.y * dt;
        g[ANG_VELOCITY + 2] += g_axis.z * dt;
        g[T_CENTER] += -g_axis.dot(omega);

        // Motion: x_t = x + v·dt.
        g[POSITION] += adj.x_t.x;
        g[POSITION + 1] += adj.x_t.y;
        g[POSITION + 2] += adj.x_t.z;
        g[VELOCITY] += adj.x_t.x * dt;
        g[VELOCITY + 1] += adj.x_t.y * dt;
        g[VELOCITY + 2] += adj.x_t.z * dt;
        g[T_CENTER] += -adj.x_t.dot(velocity);

        // Temporal opacity: o_t = o·exp(−dt²/(2σ²)), σ² ∝ l².
        let sig2 = sigma_squared(lifespan, BOUNDARY_OPACITY);
        let envelope = (-0.5 * dt * dt / sig2).exp();
        g[OPACITY] += adj.opacity_t * envelope;
        g[T_CENTER] += adj.opacity_t * opacity * envelope * dt / sig2;
        g[LIFESPAN] += adj.opacity_t * opacity * envelope * dt * dt / (sig2 * lifespan);

        g[SCALE] += adj.scale[0];
        g[SCALE + 1] += adj.scale[1];
        g[COLOR] += adj.color.x;
        g[COLOR + 1] += adj.color.y;
        g[COLOR + 2] += adj.color.z;
    }
    grad
}

/// Training loss and its exact gradient with respect to `pv` at optimizer
/// step `step` (warmup applies per step).
pub fn loss_and_grad(
    pv: &ParamVector,
    frames: &[Frame],
    cfg: &FitConfig,
    step: u64,
) -> Result<(f64, ParamVector)> {
    cfg.validate()?;
    let (total, outs) = forward_loss(pv, frames, cfg, step)?;
    let scene = decode_params(pv);
    let warmed = warmup(step, &cfg.weights);

    let w_frames = frames.len() as f64;
    let w_depth = frames.iter().filter(|f| f.depth_target.is_some()).count() as f64;
    let w_normal = frames.iter().filter(|f| f.normal_target.is_some()).count() as f64;

    let frame_grads: Vec<Vec<f64>> = frames
        .par_iter()
        .zip(&outs)
        .map(|(frame, out)| -> Result<Vec<f64>> {
            let adj = plane_adjoints(out, frame, &warmed, w_frames, w_depth, w_normal)?;
            Ok(frame_backward(&scene, frame, &adj, cfg))
        })
        .collect::<Result<_>>()?;

    let n = scene.len();
    let mut model_grad = vec![0.0; n * PARAM_STRIDE];
    for fg in &frame_grads {
        for (m, f) in model_grad.iter_mut().zip(fg) {
            *m += f;
        }
    }

    // Regularizers act on the decoded parameters directly.
    if n > 0 {
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let g = &mut model_grad[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
            let v = scene.velocities[i].to_array();
            let w = scene.ang_velocities[i].to_array();
            // L1 subgradient at zero is zero; signum(0.0) is 1.0, so guard.
            let sub = |x: f64| if x == 0.0 { 0.0 } else { x.signum() };
            for j in 0..3 {
                g[VELOCITY + j] += warmed.velocity * inv_n * sub(v[j]);
                g[ANG_VELOCITY + j] += warmed.ang_velocity * inv_n * sub(w[j]);
            }
            let l = scene.lifespans[i];
            g[LIFESPAN] += -warmed.lifespan * inv_n / (l * l);
        }
    }

    // Reparameterization backward: model space -> raw space.
    let mut raw_grad = vec![0.0; n * PARAM_STRIDE];
    for i in 0..n {
        let g = &model_grad[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
        let r = &mut raw_grad[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];
        let p = &pv.data[i * PARAM_STRIDE..(i + 1) * PARAM_STRIDE];

        r[POSITION..POSITION + 3].copy_from_slice(&g[POSITION..POSITION + 3]);
        r[SCALE] = g[SCALE] * scene.scales[i][0];
        r[SCALE + 1] = g[SCALE + 1] * scene.scales[i][1];
        let raw_q = crate::math::Quat::new(p[QUAT], p[QUAT + 1], p[QUAT + 2], p[QUAT + 3]);
        let gq = quat_normalize_backward(raw_q, [g[QUAT], g[QUAT + 1], g[QUAT + 2], g[QUAT + 3]]);
        r[QUAT..QUAT + 4].copy_from_slice(&gq);
        let o = scene.opacities[i];
        r[OPACITY] = g[OPACITY] * o * (1.0 - o);
        for j in 0..3 {
            let c = scene.colors[i].to_array()[j];
            r[COLOR + j] = g[COLOR + j] * c * (1.0 - c);
        }
        r[T_CENTER] = g[T_CENTER];
        r[LIFESPAN] = if lifespan_floored(p[LIFESPAN]) {
            0.0
        } else {
            g[LIFESPAN] * sigmoid(p[LIFESPAN])
        };
        r[VELOCITY..VELOCITY + 3].copy_from_slice(&g[VELOCITY..VELOCITY + 3]);
        r[ANG_VELOCITY..ANG_VELOCITY + 3].copy_from_slice(&g[ANG_VELOCITY..ANG_VELOCITY + 3]);
    }

    Ok((
        total,
        ParamVector {
            data: raw_grad,
            time_base: pv.time_base,
            clamped: 0,
        },
    ))
}
