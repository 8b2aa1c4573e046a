//! `schedule`: token layout and attention cost report.

use anyhow::Result;
use serde::Serialize;

use splat4d::tokens::{attention_cost, build_layout, CostReport, TokenLayout};

#[derive(clap::Args)]
pub struct Args {
    /// Frames in the window.
    #[arg(long)]
    frames: usize,
    /// Base-level chunk count; must divide --frames and be divisible by
    /// 2^(levels-1).
    #[arg(long)]
    chunks: usize,
    /// Attention levels.
    #[arg(long)]
    levels: u32,
    /// Tokens per frame before subsampling.
    #[arg(long = "tokens-per-frame")]
    tokens_per_frame: usize,
}

#[derive(Serialize)]
struct Report {
    layout: TokenLayout,
    cost: CostReport,
}

pub fn run(args: Args) -> Result<()> {
    let layout = build_layout(args.frames, args.chunks, args.levels, args.tokens_per_frame)?;
    let cost = attention_cost(&layout);
    crate::emit(&serde_json::to_string_pretty(&Report { layout, cost })?)?;
    Ok(())
}
