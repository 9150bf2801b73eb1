//! Analytic multiply-accumulate counts.
//!
//! Only products are counted: projections, write-backs, the fusion matrix,
//! the FFN and the per-step SSM costs ([`SsmParams::step_macs`]). Pooling,
//! averaging and bias additions are free.

use super::{Backbone, BlockConfig, PrismBlock};
use crate::error::Result;
use crate::grid::FeatureMap;
use crate::scans::ScanOrder;
use crate::ssm::SsmParams;

/// Geometry the ring branch sees for one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingBranchShape {
    /// Pixels in the map; every pixel is one token of exactly one ring.
    pub pixels: usize,
    /// `R★ + 1`, including empty rings (they still take a radial step).
    pub rings: usize,
    /// Channels routed through the branch (`C'`).
    pub retained: usize,
}

fn ssm_step(m: usize, d: usize) -> u64 {
    SsmParams::zeros(m, d).step_macs()
}

/// `P`, the angular and radial SSMs and `Ψ`, on `C'` channels.
pub fn count_ring_branch_macs(cfg: &BlockConfig, shape: RingBranchShape) -> u64 {
    let (m, d) = (cfg.token_width, cfg.state_width);
    let n = shape.pixels as u64;
    let cr = shape.retained as u64;
    n * (m as u64) * cr + n * ssm_step(m, d) + shape.rings as u64 * ssm_step(d, d) + n * cr * d as u64
}

fn block_macs_for(cfg: &BlockConfig, shape: RingBranchShape) -> u64 {
    let n = shape.pixels as u64;
    let c = cfg.channels as u64;
    let ffn = if cfg.ffn { 4 * n * c * c } else { 0 };
    count_ring_branch_macs(cfg, shape) + n * c * c + ffn
}

/// Whole-block count with the channel partition this input would realize.
pub fn count_block_macs(block: &PrismBlock, input: &FeatureMap) -> Result<u64> {
    let rings = block.rings_for(input.height(), input.width())?;
    let retained = block.partition(input).retained.len();
    Ok(block_macs_for(
        block.config(),
        RingBranchShape { pixels: input.pixel_count(), rings: rings.ring_count(), retained },
    ))
}

/// A fixed scan order on an `H × W × C` map: per member path, projection,
/// one SSM step per pixel and the write-back.
pub fn count_scan_macs(order: &ScanOrder, channels: usize, token_width: usize, state_width: usize) -> u64 {
    let paths = order.paths();
    let per_path: u64 = paths
        .first()
        .map(|p| {
            let n = p.len() as u64;
            let c = channels as u64;
            n * (token_width as u64) * c + n * ssm_step(token_width, state_width) + n * c * state_width as u64
        })
        .unwrap_or(0);
    per_path * paths.len() as u64
}

/// Backbone count for one image. Block partitions depend on the values each
/// block receives, so the forward pass is run to realize them.
pub fn count_backbone_macs(backbone: &Backbone, image: &FeatureMap) -> Result<u64> {
    let trace = backbone.forward_traced(image)?;
    let cfg = backbone.config();
    let p = cfg.patchify;
    let (h0, w0, c0) = trace.stage_shapes[0];
    let mut total = (h0 * w0 * c0 * p * p * image.channels()) as u64;
    let mut k = 0;
    for (s, &(h, w, c)) in trace.stage_shapes.iter().enumerate() {
        if s > 0 {
            let prev = trace.stage_shapes[s - 1].2;
            total += (h * w * c * prev) as u64;
        }
        for block in &backbone.stages()[s] {
            let rings = block.rings_for(h, w)?.ring_count();
            total +=
                block_macs_for(block.config(), RingBranchShape { pixels: h * w, rings, retained: trace.retained[k] });
            k += 1;
        }
    }
    total += (cfg.classes * trace.stage_shapes[3].2) as u64;
    Ok(total)
}
