//! Training losses and evaluation metrics.
//!
//! The total training loss is MSE plus weighted structural, perceptual,
//! regularization, and expert-guidance terms. All weighted terms warm up
//! linearly over the first `warmup_steps` optimizer steps; MSE is always at
//! full strength. Perceptual distance is a plug-in trait with no default
//! implementation, so its term reads as disabled unless one is supplied.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuf;
use crate::camera::Frame;
use crate::error::{Error, Result};
use crate::model::GaussianScene;
use crate::render::RenderOutput;

/// Weighting of every non-MSE loss term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lpips: f64,
    pub ssim: f64,
    pub velocity: f64,
    pub ang_velocity: f64,
    pub lifespan: f64,
    pub depth: f64,
    pub normal: f64,
    pub warmup_steps: u32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lpips: 2.0,
            ssim: 0.2,
            velocity: 1.0,
            ang_velocity: 1.0,
            lifespan: 1.0,
            depth: 0.1,
            normal: 0.01,
            warmup_steps: 2500,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lpips,
            self.ssim,
            self.velocity,
            self.ang_velocity,
            self.lifespan,
            self.depth,
            self.normal,
        ];
        if all.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::domain("loss weights must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// Linearly scales every weight except MSE by `min(1, step/warmup_steps)`.
pub fn warmup(step: u64, weights: &LossWeights) -> LossWeights {
    let factor = if weights.warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / weights.warmup_steps as f64).min(1.0)
    };
    LossWeights {
        lpips: weights.lpips * factor,
        ssim: weights.ssim * factor,
        velocity: weights.velocity * factor,
        ang_velocity: weights.ang_velocity * factor,
        lifespan: weights.lifespan * factor,
        depth: weights.depth * factor,
        normal: weights.normal * factor,
        warmup_steps: weights.warmup_steps,
    }
}

/// Image-pair perceptual distance plug-in. The engine ships no
/// implementation; without one the perceptual term contributes zero.
pub trait PerceptualLoss {
    fn eval(&self, a: &ImageBuf, b: &ImageBuf) -> f64;
}

pub(crate) fn frame_mse(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape(format!(
            "mse shapes {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Mean over frames of per-frame mean squared error.
pub fn mse_loss(rendered: &[ImageBuf], target: &[ImageBuf]) -> Result<f64> {
    if rendered.len() != target.len() || rendered.is_empty() {
        return Err(Error::shape(format!(
            "{} rendered frames vs {} targets",
            rendered.len(),
            target.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in rendered.iter().zip(target) {
        acc += frame_mse(a, b)?;
    }
    Ok(acc / rendered.len() as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_C1: f64 = 1e-4; // (0.01·range)²
const SSIM_C2: f64 = 9e-4; // (0.03·range)²

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let sigma = 1.5;
    let mut k = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - (SSIM_WINDOW as f64 - 1.0) / 2.0;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Valid-region separable convolution of a `w`×`h` plane; output is
/// `(w-10)`×`(h-10)`.
fn conv_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += src[y * w + x + i] * kv;
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += tmp[(y + j) * ow + x] * kv;
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`conv_valid`]: scatters a valid-region gradient back to the
/// full plane.
fn conv_valid_adjoint(grad: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let g = grad[y * ow + x];
            for (j, kv) in k.iter().enumerate() {
                tmp[(y + j) * ow + x] += g * kv;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let g = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += g * kv;
            }
        }
    }
    out
}

fn ssim_impl(a: &ImageBuf, b: &ImageBuf, want_grad: bool) -> Result<(f64, Option<ImageBuf>)> {
    if !a.same_shape(b) {
        return Err(Error::shape("ssim inputs differ in shape".to_string()));
    }
    let (w, h, c) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::domain(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = ssim_kernel();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let norm = (ow * oh * c) as f64;

    let mut ssim_sum = 0.0;
    let mut grad = want_grad.then(|| ImageBuf::new(w, h, c));

    let mut pa = vec![0.0; w * h];
    let mut pb = vec![0.0; w * h];
    let mut prod = vec![0.0; w * h];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let va = a.get(x, y, ch);
                let vb = b.get(x, y, ch);
                pa[y * w + x] = va;
                pb[y * w + x] = vb;
                prod[y * w + x] = va * vb;
            }
        }
        let mu_a = conv_valid(&pa, w, h, &k);
        let mu_b = conv_valid(&pb, w, h, &k);
        let e_aa = conv_valid(&pa.iter().map(|v| v * v).collect::<Vec<_>>(), w, h, &k);
        let e_bb = conv_valid(&pb.iter().map(|v| v * v).collect::<Vec<_>>(), w, h, &k);
        let e_ab = conv_valid(&prod, w, h, &k);

        let mut g_mu_a = want_grad.then(|| vec![0.0; ow * oh]);
        let mut g_e_aa = want_grad.then(|| vec![0.0; ow * oh]);
        let mut g_e_ab = want_grad.then(|| vec![0.0; ow * oh]);

        for i in 0..ow * oh {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let a1 = 2.0 * ma * mb + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = ma * ma + mb * mb + SSIM_C1;
            let b2 = var_a + var_b + SSIM_C2;
            let s = (a1 * a2) / (b1 * b2);
            // Summed then divided once so identical inputs score exactly 1.
            ssim_sum += s;

            if want_grad {
                let gs = 1.0 / norm;
                let ds_da1 = a2 / (b1 * b2);
                let ds_da2 = a1 / (b1 * b2);
                let ds_db1 = -s / b1;
                let ds_db2 = -s / b2;
                // a1 and the covariance both see mu_a; var_a sees mu_a and
                // e_aa; cov sees e_ab.
                g_mu_a.as_mut().unwrap()[i] = gs
                    * (ds_da1 * 2.0 * mb + ds_da2 * (-2.0 * mb)
                        + ds_db1 * 2.0 * ma
                        + ds_db2 * (-2.0 * ma));
                g_e_aa.as_mut().unwrap()[i] = gs * ds_db2;
                g_e_ab.as_mut().unwrap()[i] = gs * ds_da2 * 2.0;
            }
        }

        if let Some(g) = grad.as_mut() {
            let back_mu = conv_valid_adjoint(g_mu_a.as_ref().unwrap(), w, h, &k);
            let back_aa = conv_valid_adjoint(g_e_aa.as_ref().unwrap(), w, h, &k);
            let back_ab = conv_valid_adjoint(g_e_ab.as_ref().unwrap(), w, h, &k);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let v = back_mu[i] + 2.0 * pa[i] * back_aa[i] + pb[i] * back_ab[i];
                    g.set(x, y, ch, v);
                }
            }
        }
    }
    Ok((ssim_sum / norm, grad))
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1), averaged over the valid region
/// and channels.
pub fn ssim(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM plus the gradient of the mean SSIM with respect to `a`.
pub(crate) fn ssim_with_grad(a: &ImageBuf, b: &ImageBuf) -> Result<(f64, ImageBuf)> {
    let (s, g) = ssim_impl(a, b, true)?;
    Ok((s, g.unwrap()))
}

/// Peak signal-to-noise ratio in dB; identical inputs return the 99 dB cap.
pub fn psnr(a: &ImageBuf, b: &ImageBuf, peak: f64) -> Result<f64> {
    let mse = frame_mse(a, b)?;
    if mse == 0.0 {
        return Ok(99.0);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Root-mean-square depth error over pixels that are masked in (when a mask
/// is given) and have positive target depth.
pub fn depth_rmse(pred: &ImageBuf, target: &ImageBuf, mask: Option<&ImageBuf>) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::shape("depth shapes differ".to_string()));
    }
    let mut acc = 0.0;
    let mut count = 0u64;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if let Some(m) = mask {
                if m.get(x, y, 0) <= 0.5 {
                    continue;
                }
            }
            let t = target.get(x, y, 0);
            if t <= 0.0 {
                continue;
            }
            let d = pred.get(x, y, 0) - t;
            acc += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain("no valid depth pixels".to_string()));
    }
    Ok((acc / count as f64).sqrt())
}

/// Mean angle in degrees between predicted and target normals over valid
/// pixels (masked in, both vectors non-degenerate).
pub fn normal_angle_deg(
    pred: &ImageBuf,
    target: &ImageBuf,
    mask: Option<&ImageBuf>,
) -> Result<f64> {
    if !pred.same_shape(target) || pred.channels() != 3 {
        return Err(Error::shape("normal maps must share an HxWx3 shape".to_string()));
    }
    let mut acc = 0.0;
    let mut count = 0u64;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if let Some(m) = mask {
                if m.get(x, y, 0) <= 0.5 {
                    continue;
                }
            }
            let p = crate::math::Vec3::from_array(
                pred.pixel(x, y).try_into().expect("3 channels"),
            );
            let t = crate::math::Vec3::from_array(
                target.pixel(x, y).try_into().expect("3 channels"),
            );
            if p.norm() <= 1e-6 || t.norm() <= 1e-6 {
                continue;
            }
            let dot = p.normalized().dot(t.normalized()).clamp(-1.0, 1.0);
            acc += dot.acos().to_degrees();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain("no valid normal pixels".to_string()));
    }
    Ok(acc / count as f64)
}

/// Motion and lifespan regularizers: mean L1 velocity norm, mean L1 angular
/// velocity norm, and mean reciprocal lifespan. All zero on an empty scene.
pub fn reg_losses(scene: &GaussianScene) -> (f64, f64, f64) {
    if scene.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = scene.len() as f64;
    let v = scene.velocities.iter().map(|v| v.l1_norm()).sum::<f64>() / n;
    let w = scene.ang_velocities.iter().map(|v| v.l1_norm()).sum::<f64>() / n;
    let l = scene.lifespans.iter().map(|l| 1.0 / l).sum::<f64>() / n;
    (v, w, l)
}

/// Depth and normal pseudo-supervision terms: per-frame MSE against expert
/// maps, averaged over frames.
pub fn expert_losses(
    rendered_depth: &[ImageBuf],
    target_depth: &[ImageBuf],
    rendered_normal: &[ImageBuf],
    target_normal: &[ImageBuf],
) -> Result<(f64, f64)> {
    Ok((
        mse_loss(rendered_depth, target_depth)?,
        mse_loss(rendered_normal, target_normal)?,
    ))
}

/// Every term of one loss evaluation, unweighted, plus the warmed weights
/// that combined them.
#[derive(Debug, Clone, Serialize)]
pub struct LossBreakdown {
    pub mse: f64,
    /// `None` means no perceptual plug-in was supplied (term disabled).
    pub lpips: Option<f64>,
    /// Mean over frames of 1 − ssim.
    pub ssim_loss: f64,
    pub velocity: f64,
    pub ang_velocity: f64,
    pub lifespan: f64,
    pub depth: f64,
    pub normal: f64,
    pub warmed: LossWeights,
    pub total: f64,
}

/// Full training loss over a batch of rendered frames, their targets, and
/// the scene's regularizers at optimizer step `step`.
///
/// Depth and normal guidance average over the frames that carry the
/// corresponding expert target; frames without one contribute nothing.
pub fn total_loss(
    rendered: &[RenderOutput],
    targets: &[Frame],
    scene: &GaussianScene,
    step: u64,
    weights: &LossWeights,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<LossBreakdown> {
    weights.validate()?;
    if rendered.len() != targets.len() || rendered.is_empty() {
        return Err(Error::shape(format!(
            "{} rendered frames vs {} targets",
            rendered.len(),
            targets.len()
        )));
    }

    let mut mse = 0.0;
    let mut ssim_loss = 0.0;
    let mut lpips_acc = 0.0;
    let mut depth_acc = 0.0;
    let mut depth_frames = 0usize;
    let mut normal_acc = 0.0;
    let mut normal_frames = 0usize;
    for (out, frame) in rendered.iter().zip(targets) {
        mse += frame_mse(&out.color, &frame.image)?;
        ssim_loss += 1.0 - ssim(&out.color, &frame.image)?;
        if let Some(p) = perceptual {
            lpips_acc += p.eval(&out.color, &frame.image);
        }
        if let Some(d) = &frame.depth_target {
            depth_acc += frame_mse(&out.depth, d)?;
            depth_frames += 1;
        }
        if let Some(n) = &frame.normal_target {
            normal_acc += frame_mse(&out.normal, n)?;
            normal_frames += 1;
        }
    }
    let w_frames = rendered.len() as f64;
    mse /= w_frames;
    ssim_loss /= w_frames;
    let lpips = perceptual.map(|_| lpips_acc / w_frames);
    let depth = if depth_frames > 0 {
        depth_acc / depth_frames as f64
    } else {
        0.0
    };
    let normal = if normal_frames > 0 {
        normal_acc / normal_frames as f64
    } else {
        0.0
    };
    let (velocity, ang_velocity, lifespan) = reg_losses(scene);

    let warmed = warmup(step, weights);
    let total = mse
        + warmed.lpips * lpips.unwrap_or(0.0)
        + warmed.ssim * ssim_loss
        + warmed.velocity * velocity
        + warmed.ang_velocity * ang_velocity
        + warmed.lifespan * lifespan
        + warmed.depth * depth
        + warmed.normal * normal;

    Ok(LossBreakdown {
        mse,
        lpips,
        ssim_loss,
        velocity,
        ang_velocity,
        lifespan,
        depth,
        normal,
        warmed,
        total,
    })
}
