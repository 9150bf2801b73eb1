//! Reverse-mode gradients of the PRISM block.
//!
//! The channel partition and the ring partition are treated as constants of
//! the input: a perturbation that would flip a channel across the salience
//! threshold is not differentiable and is not modelled.

use super::{PrismBlock, PrismParams, PrismTrace};
use crate::error::{shape_err, PrismError, Result};
use crate::grid::FeatureMap;
use crate::linalg::Matrix;
use crate::pcf::PcfPartition;
use crate::ssm::ssm_backward;

/// Holds the most recent forward trace so that `backward` can be called
/// afterwards. Calling `backward` first is a state error.
#[derive(Debug, Default)]
pub struct PrismTape {
    trace: Option<PrismTrace>,
}

impl PrismTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, block: &PrismBlock, input: &FeatureMap) -> Result<FeatureMap> {
        let trace = block.forward_traced(input)?;
        let out = trace.output.clone();
        self.trace = Some(trace);
        Ok(out)
    }

    pub fn forward_with_partition(
        &mut self,
        block: &PrismBlock,
        input: &FeatureMap,
        partition: PcfPartition,
    ) -> Result<FeatureMap> {
        let trace = block.forward_with_partition(input, partition)?;
        let out = trace.output.clone();
        self.trace = Some(trace);
        Ok(out)
    }

    pub fn trace(&self) -> Option<&PrismTrace> {
        self.trace.as_ref()
    }

    pub fn backward(&self, block: &PrismBlock, d_output: &FeatureMap) -> Result<(FeatureMap, PrismParams)> {
        let trace =
            self.trace.as_ref().ok_or_else(|| PrismError::State("backward called before any forward pass".into()))?;
        prism_backward(block, trace, d_output)
    }
}

/// Gradients `(dL/dX_in, dL/dparams)` for upstream `dL/dX_out`.
pub fn prism_backward(
    block: &PrismBlock,
    trace: &PrismTrace,
    d_output: &FeatureMap,
) -> Result<(FeatureMap, PrismParams)> {
    let cfg = block.config();
    let p = &block.params;
    let c = cfg.channels;
    let (h, w) = (trace.input.height(), trace.input.width());
    if d_output.shape() != trace.input.shape() {
        return shape_err(format!("upstream gradient {:?} for output {:?}", d_output.shape(), trace.input.shape()));
    }
    let n = h * w;
    let mut grads = PrismParams::zeros(cfg);

    // Optional FFN: out = f + W₂ relu(W₁ f + b₁) + b₂.
    let mut d_fused = d_output.values().to_vec();
    if let (Some(ffn), Some(hidden), Some(g)) = (&p.ffn, &trace.ffn_hidden, grads.ffn.as_mut()) {
        let mut act = vec![0.0; 2 * c];
        let mut d_pre = vec![0.0; 2 * c];
        for px in 0..n {
            let dout = &d_output.values()[px * c..(px + 1) * c];
            let pre = &hidden[px * 2 * c..(px + 1) * 2 * c];
            let f_in = &trace.fused.values()[px * c..(px + 1) * c];
            act.iter_mut().zip(pre).for_each(|(a, &z)| *a = z.max(0.0));
            g.down.add_outer(dout, &act);
            g.down_b.iter_mut().zip(dout).for_each(|(b, v)| *b += v);
            d_pre.iter_mut().for_each(|v| *v = 0.0);
            ffn.down.matvec_t_acc(dout, &mut d_pre);
            d_pre.iter_mut().zip(pre).for_each(|(v, &z)| {
                if z <= 0.0 {
                    *v = 0.0
                }
            });
            g.up.add_outer(&d_pre, f_in);
            g.up_b.iter_mut().zip(&d_pre).for_each(|(b, v)| *b += v);
            ffn.up.matvec_t_acc(&d_pre, &mut d_fused[px * c..(px + 1) * c]);
        }
    }

    // fused = X_in + Fuse · Y + b
    let mut d_input = d_fused.clone();
    let mut d_merged = vec![0.0; n * c];
    for px in 0..n {
        let df = &d_fused[px * c..(px + 1) * c];
        grads.fuse.add_outer(df, &trace.merged.values()[px * c..(px + 1) * c]);
        grads.fuse_b.iter_mut().zip(df).for_each(|(b, v)| *b += v);
        p.fuse.matvec_t_acc(df, &mut d_merged[px * c..(px + 1) * c]);
    }

    // Bypassed channels of Y are the input itself.
    for px in 0..n {
        for &ch in &trace.partition.bypassed {
            d_input[px * c + ch] += d_merged[px * c + ch];
        }
    }

    // Retained channels: Y[ch] = Ψ[ch, :] · y^rad_{r̂}.
    let branch = &trace.branch;
    let channels = &branch.channels;
    let cr = channels.len();
    let d = cfg.state_width;
    let m = cfg.token_width;
    let rings = &branch.rings;
    let writeback = p.writeback.select_rows(channels);
    let mut d_writeback = Matrix::zeros(cr, d);
    let mut d_radial_out = vec![0.0; rings.ring_count() * d];
    let mut dy = vec![0.0; cr];
    for v in 0..h {
        for u in 0..w {
            let px = v * w + u;
            let r = rings.ring_of(u, v);
            for (k, &ch) in channels.iter().enumerate() {
                dy[k] = d_merged[px * c + ch];
            }
            d_writeback.add_outer(&dy, branch.radial.output(r));
            writeback.matvec_t_acc(&dy, &mut d_radial_out[r * d..(r + 1) * d]);
        }
    }
    grads.writeback.scatter_add_rows(channels, &d_writeback);

    let (d_desc, g_radial) = ssm_backward(&branch.radial, &p.radial, &d_radial_out)?;
    grads.radial = g_radial;

    // z_r = mean_k y_{r,k}; tokens = P_sel · X_sel.
    let proj = p.proj.select_columns(channels);
    let mut d_proj = Matrix::zeros(m, cr);
    let mut d_sub = vec![0.0; n * cr];
    for (r, run) in branch.angular.iter().enumerate() {
        let len = run.len();
        if len == 0 {
            continue;
        }
        let scale = 1.0 / len as f64;
        let dz: Vec<f64> = d_desc[r * d..(r + 1) * d].iter().map(|v| v * scale).collect();
        let d_out: Vec<f64> = dz.iter().copied().cycle().take(len * d).collect();
        let (d_tokens, g_ang) = ssm_backward(run, &p.angular, &d_out)?;
        grads.angular.accumulate(&g_ang);
        for (k, &(u, v)) in rings.rings()[r].pixels.iter().enumerate() {
            let px = v * w + u;
            let dt = &d_tokens[k * m..(k + 1) * m];
            d_proj.add_outer(dt, branch.input.pixel(u, v));
            proj.matvec_t_acc(dt, &mut d_sub[px * cr..(px + 1) * cr]);
        }
    }
    grads.proj.scatter_add_columns(channels, &d_proj);
    for px in 0..n {
        for (k, &ch) in channels.iter().enumerate() {
            d_input[px * c + ch] += d_sub[px * cr + k];
        }
    }

    let d_input = FeatureMap::from_values(h, w, c, d_input)?;
    Ok((d_input, grads))
}
