//! Multi-level chunked attention token layouts and their cost model.
//!
//! A video of `N` frames, each contributing `tokens_per_frame` patch tokens,
//! is split into `M` temporal chunks that attend within themselves. Each
//! additional level doubles the temporal span of a chunk while subsampling
//! its per-frame tokens by two, so every chunk at every level holds exactly
//! `N·tokens_per_frame / M` tokens and pairwise attention cost stays flat
//! per chunk while temporal reach grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};

/// One attention level of a [`TokenLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LevelLayout {
    pub level: u32,
    /// Independent attention groups at this level.
    pub chunk_count: usize,
    pub frames_per_chunk: usize,
    /// Tokens kept per frame after subsampling.
    pub tokens_per_frame: usize,
    /// Always `total_tokens / chunks`, independent of level.
    pub tokens_per_chunk: usize,
    /// Stride of the kept-token subset within a frame.
    pub token_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenLayout {
    pub frames: usize,
    pub chunks: usize,
    pub tokens_per_frame: usize,
    /// `frames · tokens_per_frame`.
    pub total_tokens: usize,
    /// Each chunk additionally carries this many classification tokens;
    /// they ride along through attention but are excluded from pair costs.
    pub classification_tokens_per_chunk: usize,
    pub levels: Vec<LevelLayout>,
}

/// Exact pairwise-attention cost, in query-key pairs.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub per_level: Vec<u128>,
    pub total: u128,
    /// Cost of one full self-attention over all tokens.
    pub baseline: u128,
    pub ratio: f64,
}

/// Frame indices kept when subsampling a window of `window` frames by
/// `stride`.
pub fn window_subsample(window: usize, stride: usize) -> Result<Vec<usize>> {
    if stride < 1 || window < stride {
        return Err(Error::domain(format!(
            "need window >= stride >= 1, got window {window}, stride {stride}"
        )));
    }
    Ok((0..window).step_by(stride).collect())
}

/// Patch tokens per frame for an image evenly divided into `p`-pixel
/// patches.
pub fn patch_grid(intr: &CameraIntrinsics, p: usize) -> Result<usize> {
    intr.validate()?;
    if p == 0 {
        return Err(Error::domain("patch size must be >= 1".to_string()));
    }
    if !intr.width.is_multiple_of(p) || !intr.height.is_multiple_of(p) {
        return Err(Error::shape(format!(
            "image {}x{} not divisible by patch {}; pad to {}x{}",
            intr.width,
            intr.height,
            p,
            intr.width.div_ceil(p) * p,
            intr.height.div_ceil(p) * p,
        )));
    }
    Ok((intr.width / p) * (intr.height / p))
}

/// Builds the level structure for `frames` frames in `chunks` chunks over
/// `levels` attention levels.
pub fn build_layout(
    frames: usize,
    chunks: usize,
    levels: u32,
    tokens_per_frame: usize,
) -> Result<TokenLayout> {
    if frames == 0 || chunks == 0 || levels == 0 || tokens_per_frame == 0 {
        return Err(Error::domain("layout dimensions must be >= 1".to_string()));
    }
    if !frames.is_multiple_of(chunks) {
        return Err(Error::domain(format!(
            "{chunks} chunks do not divide {frames} frames"
        )));
    }
    let top_stride = 1usize << (levels - 1);
    if !chunks.is_multiple_of(top_stride) {
        return Err(Error::domain(format!(
            "{levels} levels need chunk count divisible by {top_stride}, got {chunks}"
        )));
    }
    if !tokens_per_frame.is_multiple_of(top_stride) {
        return Err(Error::domain(format!(
            "{levels} levels need tokens per frame divisible by {top_stride}, got {tokens_per_frame}"
        )));
    }
    let base_frames = frames / chunks;
    let mut level_layouts = Vec::with_capacity(levels as usize);
    for l in 0..levels {
        let stride = 1usize << l;
        let layout = LevelLayout {
            level: l,
            chunk_count: chunks / stride,
            frames_per_chunk: base_frames * stride,
            tokens_per_frame: tokens_per_frame / stride,
            tokens_per_chunk: base_frames * tokens_per_frame,
            token_stride: stride,
        };
        debug_assert_eq!(
            layout.frames_per_chunk * layout.tokens_per_frame,
            layout.tokens_per_chunk
        );
        level_layouts.push(layout);
    }
    Ok(TokenLayout {
        frames,
        chunks,
        tokens_per_frame,
        total_tokens: frames * tokens_per_frame,
        classification_tokens_per_chunk: 1,
        levels: level_layouts,
    })
}

/// Exact query-key pair counts per level against the all-tokens baseline.
pub fn attention_cost(layout: &TokenLayout) -> CostReport {
    let per_level: Vec<u128> = layout
        .levels
        .iter()
        .map(|l| l.chunk_count as u128 * (l.tokens_per_chunk as u128).pow(2))
        .collect();
    let total: u128 = per_level.iter().sum();
    let baseline = (layout.total_tokens as u128).pow(2);
    CostReport {
        per_level,
        total,
        baseline,
        ratio: total as f64 / baseline as f64,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PassthroughLevel {
    pub level: u32,
    pub chunk_count: usize,
    /// Rows per chunk actually attended, classification token included.
    pub tokens_with_class: usize,
    pub token_dim: usize,
    /// Every chunk's attention output matched its input shape.
    pub output_shape_ok: bool,
    /// Query-key pairs executed between non-classification tokens.
    pub measured_pairs: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassthroughReport {
    pub levels: Vec<PassthroughLevel>,
    /// Measured per-level pair counts equal [`attention_cost`] exactly and
    /// all shapes round-tripped.
    pub matches_cost_report: bool,
}

/// Row-wise softmax attention for one chunk; counts non-class query-key
/// pairs as a side effect. Row 0 is the classification token.
fn attend_chunk(
    tokens: &[f64],
    rows: usize,
    dim: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    pairs: &mut u128,
) -> Vec<f64> {
    let matmul = |x: &[f64], w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; rows * dim];
        for r in 0..rows {
            for c in 0..dim {
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += x[r * dim + k] * w[k * dim + c];
                }
                out[r * dim + c] = acc;
            }
        }
        out
    };
    let q = matmul(tokens, wq);
    let k = matmul(tokens, wk);
    let v = matmul(tokens, wv);

    let scale = 1.0 / (dim as f64).sqrt();
    let mut out = vec![0.0; rows * dim];
    let mut scores = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..rows {
            if r > 0 && c > 0 {
                *pairs += 1;
            }
            let mut dot = 0.0;
            for d in 0..dim {
                dot += q[r * dim + d] * k[c * dim + d];
            }
            scores[c] = dot * scale;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        for c in 0..rows {
            let w = scores[c] / denom;
            for d in 0..dim {
                out[r * dim + d] += w * v[c * dim + d];
            }
        }
    }
    out
}

/// Runs every chunk of every level through real softmax attention on random
/// tokens, verifying that token counts and shapes survive and that the
/// executed pair counts reproduce [`attention_cost`].
pub fn token_passthrough_check(
    layout: &TokenLayout,
    token_dim: usize,
    seed: u64,
) -> Result<PassthroughReport> {
    if token_dim == 0 {
        return Err(Error::domain("token_dim must be >= 1".to_string()));
    }
    let cost = attention_cost(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::with_capacity(layout.levels.len());
    let mut all_match = true;
    for (li, level) in layout.levels.iter().enumerate() {
        let rows = level.tokens_per_chunk + layout.classification_tokens_per_chunk;
        let rand_mat =
            |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let wq = rand_mat(&mut rng, token_dim * token_dim);
        let wk = rand_mat(&mut rng, token_dim * token_dim);
        let wv = rand_mat(&mut rng, token_dim * token_dim);

        let mut measured = 0u128;
        let mut shapes_ok = true;
        for _ in 0..level.chunk_count {
            let tokens = rand_mat(&mut rng, rows * token_dim);
            let out = attend_chunk(&tokens, rows, token_dim, &wq, &wk, &wv, &mut measured);
            shapes_ok &= out.len() == tokens.len();
        }
        all_match &= shapes_ok && measured == cost.per_level[li];
        levels.push(PassthroughLevel {
            level: level.level,
            chunk_count: level.chunk_count,
            tokens_with_class: rows,
            token_dim,
            output_shape_ok: shapes_ok,
            measured_pairs: measured,
        });
    }
    Ok(PassthroughReport {
        levels,
        matches_cost_report: all_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr(width: usize, height: usize) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    #[test]
    fn window_subsample_examples() {
        assert_eq!(window_subsample(8, 2).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(window_subsample(5, 3).unwrap(), vec![0, 3]);
        assert_eq!(window_subsample(4, 1).unwrap(), vec![0, 1, 2, 3]);
        assert!(window_subsample(4, 0).is_err());
        assert!(window_subsample(2, 3).is_err());
    }

    #[test]
    fn patch_grid_counts_and_pad_hint() {
        assert_eq!(patch_grid(&intr(504, 378), 14).unwrap(), 36 * 27);
        assert_eq!(patch_grid(&intr(504, 504), 14).unwrap(), 1296);
        let err = patch_grid(&intr(500, 378), 14).unwrap_err().to_string();
        assert!(err.contains("pad to 504x378"), "{err}");
    }

    #[test]
    fn canonical_layout_has_flat_tokens_per_chunk() {
        let layout = build_layout(64, 4, 3, 1296).unwrap();
        assert_eq!(layout.total_tokens, 82944);
        assert_eq!(layout.levels.len(), 3);
        for (l, lev) in layout.levels.iter().enumerate() {
            assert_eq!(lev.tokens_per_chunk, 20736);
            assert_eq!(lev.token_stride, 1 << l);
        }
        assert_eq!(
            layout.levels.iter().map(|l| l.chunk_count).collect::<Vec<_>>(),
            vec![4, 2, 1]
        );
        assert_eq!(
            layout
                .levels
                .iter()
                .map(|l| l.frames_per_chunk)
                .collect::<Vec<_>>(),
            vec![16, 32, 64]
        );
    }

    #[test]
    fn layout_rejects_indivisible_dimensions() {
        assert!(build_layout(0, 4, 3, 8).is_err());
        assert!(build_layout(10, 4, 3, 8).is_err());
        assert!(build_layout(12, 6, 3, 8).is_err());
        assert!(build_layout(16, 4, 3, 6).is_err());
        assert!(build_layout(16, 4, 0, 8).is_err());
    }

    #[test]
    fn canonical_cost_ratio_is_seven_sixteenths() {
        let layout = build_layout(64, 4, 3, 1296).unwrap();
        let cost = attention_cost(&layout);
        assert_eq!(cost.ratio, 0.4375);
        assert_eq!(cost.total * 16, cost.baseline * 7);
    }

    #[test]
    fn cost_matches_geometric_series_exactly() {
        for (frames, chunks, levels, tpf) in
            [(16usize, 8usize, 4u32, 16usize), (24, 4, 2, 6), (64, 4, 3, 1296)]
        {
            let layout = build_layout(frames, chunks, levels, tpf).unwrap();
            let cost = attention_cost(&layout);
            // total = n²(2^L - 1) / (M·2^(L-1)), exact in integers.
            let lhs = cost.total * (chunks as u128) * (1u128 << (levels - 1));
            let rhs = cost.baseline * ((1u128 << levels) - 1);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn small_layout_cost_by_hand() {
        let layout = build_layout(8, 4, 3, 8).unwrap();
        let cost = attention_cost(&layout);
        assert_eq!(cost.per_level, vec![4 * 256, 2 * 256, 256]);
        assert_eq!(cost.total, 1792);
        assert_eq!(cost.baseline, 4096);
        assert_eq!(cost.ratio, 0.4375);
    }

    #[test]
    fn passthrough_preserves_shapes_and_reproduces_cost() {
        let layout = build_layout(8, 4, 3, 8).unwrap();
        let report = token_passthrough_check(&layout, 8, 11).unwrap();
        assert!(report.matches_cost_report);
        let cost = attention_cost(&layout);
        for (lev, want) in report.levels.iter().zip(&cost.per_level) {
            assert!(lev.output_shape_ok);
            assert_eq!(lev.measured_pairs, *want);
            assert_eq!(lev.tokens_with_class, 17);
        }
        assert!(token_passthrough_check(&layout, 0, 11).is_err());
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        // With value weights = identity pattern unavailable, check the
        // softmax property directly: each output row must lie inside the
        // bounding box of the value rows.
        let rows = 5;
        let dim = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let tokens: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eye: Vec<f64> = (0..dim * dim)
            .map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 })
            .collect();
        let mut pairs = 0;
        let out = attend_chunk(&tokens, rows, dim, &eye, &eye, &eye, &mut pairs);
        assert_eq!(pairs, ((rows - 1) * (rows - 1)) as u128);
        for d in 0..dim {
            let lo = (0..rows).map(|r| tokens[r * dim + d]).fold(f64::INFINITY, f64::min);
            let hi = (0..rows)
                .map(|r| tokens[r * dim + d])
                .fold(f64::NEG_INFINITY, f64::max);
            for r in 0..rows {
                assert!(out[r * dim + d] >= lo - 1e-12 && out[r * dim + d] <= hi + 1e-12);
            }
        }
    }
}
