//! The PRISM block and a toy four-stage backbone.
//!
//! Forward pipeline for one block on `X_in ∈ ℝ^{H×W×C}`:
//!
//! 1. partial channel filtering picks the retained channels;
//! 2. the grid is split into rings (cached per geometry);
//! 3. each ring's loop is projected by `P` and run through the angular SSM,
//!    then mean-pooled into a descriptor `z_r`;
//! 4. the radial SSM runs over `z_0 … z_R★`;
//! 5. every pixel on ring `r` receives `Ψ · y^rad_r` on the retained channels,
//!    bypassed channels keep their input values (`Y`);
//! 6. `X_out = X_in + Fuse · Y + b`, optionally followed by a residual
//!    pointwise FFN.
//!
//! Under filtering, `P` and `Ψ` are stored at full width and only the columns
//! (rows) of the retained channels are used.

mod backbone;
mod backward;
mod macs;

pub use backbone::{backbone_forward, Backbone, BackboneConfig, BackboneTrace, STAGES};
pub use backward::{prism_backward, PrismTape};
pub use macs::{count_backbone_macs, count_block_macs, count_ring_branch_macs, count_scan_macs, RingBranchShape};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::grid::{default_center, gap, FeatureMap, GridCenter};
use crate::linalg::Matrix;
use crate::pcf::{merge, partition_salience, ChannelBranch, PcfMode, PcfPartition};
use crate::rings::{build_rings, ring_tokens, RingPartition, DEFAULT_DELTA_R};
use crate::ssm::{radial_forward, ssm_forward, RingDescriptorSet, SsmParams, SsmRun, INIT_BOUND};

/// Where the ring partition is centered.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CenterPolicy {
    /// `((W−1)/2, (H−1)/2)` of whatever map the block sees.
    #[default]
    Symmetric,
    Fixed(GridCenter),
}

impl CenterPolicy {
    pub fn resolve(&self, height: usize, width: usize) -> GridCenter {
        match self {
            CenterPolicy::Symmetric => default_center(height, width),
            CenterPolicy::Fixed(c) => *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub channels: usize,
    pub token_width: usize,
    pub state_width: usize,
    pub delta_r: f64,
    pub center: CenterPolicy,
    pub pcf: PcfMode,
    pub ffn: bool,
}

impl BlockConfig {
    pub fn new(channels: usize, token_width: usize, state_width: usize) -> Self {
        Self {
            channels,
            token_width,
            state_width,
            delta_r: DEFAULT_DELTA_R,
            center: CenterPolicy::Symmetric,
            pcf: PcfMode::Mean,
            ffn: false,
        }
    }
}

/// Residual pointwise FFN: `x + W₂ relu(W₁ x + b₁) + b₂`, hidden width `2C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub up: Matrix,
    pub up_b: Vec<f64>,
    pub down: Matrix,
    pub down_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrismParams {
    /// `m × C`
    pub proj: Matrix,
    pub angular: SsmParams,
    /// Radial SSM, token width `d`.
    pub radial: SsmParams,
    /// `C × d`
    pub writeback: Matrix,
    /// `C × C`
    pub fuse: Matrix,
    pub fuse_b: Vec<f64>,
    pub ffn: Option<Ffn>,
}

impl PrismParams {
    pub fn zeros(cfg: &BlockConfig) -> Self {
        let (c, m, d) = (cfg.channels, cfg.token_width, cfg.state_width);
        Self {
            proj: Matrix::zeros(m, c),
            angular: SsmParams::zeros(m, d),
            radial: SsmParams::zeros(d, d),
            writeback: Matrix::zeros(c, d),
            fuse: Matrix::zeros(c, c),
            fuse_b: vec![0.0; c],
            ffn: cfg.ffn.then(|| Ffn {
                up: Matrix::zeros(2 * c, c),
                up_b: vec![0.0; 2 * c],
                down: Matrix::zeros(c, 2 * c),
                down_b: vec![0.0; c],
            }),
        }
    }

    /// Weights uniform in `(−0.1, 0.1)`, biases zero except the SSM decay bias.
    pub fn seeded(cfg: &BlockConfig, seed: u64) -> Self {
        let (c, m, d) = (cfg.channels, cfg.token_width, cfg.state_width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = Matrix::uniform(m, c, INIT_BOUND, &mut rng);
        let angular = SsmParams::from_rng(m, d, &mut rng);
        let radial = SsmParams::from_rng(d, d, &mut rng);
        let writeback = Matrix::uniform(c, d, INIT_BOUND, &mut rng);
        let fuse = Matrix::uniform(c, c, INIT_BOUND, &mut rng);
        let ffn = cfg.ffn.then(|| Ffn {
            up: Matrix::uniform(2 * c, c, INIT_BOUND, &mut rng),
            up_b: vec![0.0; 2 * c],
            down: Matrix::uniform(c, 2 * c, INIT_BOUND, &mut rng),
            down_b: vec![0.0; c],
        });
        Self { proj, angular, radial, writeback, fuse, fuse_b: vec![0.0; c], ffn }
    }

    /// Every weight and bias uniform in `(−bound, bound)`. Unlike [`Self::seeded`]
    /// the biases are nonzero, so zero-valued inputs do not land on the FFN's
    /// ReLU kink.
    pub fn uniform_all(cfg: &BlockConfig, bound: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Self::zeros(cfg).to_flat().len();
        let flat: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::from_flat(cfg, &flat).expect("length matches the config")
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.proj.data()];
        v.push(self.writeback.data());
        v.push(self.fuse.data());
        v.push(&self.fuse_b);
        if let Some(f) = &self.ffn {
            v.extend([f.up.data(), &f.up_b[..], f.down.data(), &f.down_b[..]]);
        }
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.angular.to_flat();
        out.extend(self.radial.to_flat());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn from_flat(cfg: &BlockConfig, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(cfg);
        let n_ang = p.angular.param_count();
        let n_rad = p.radial.param_count();
        let rest_len: usize = p.slices().iter().map(|s| s.len()).sum();
        if flat.len() != n_ang + n_rad + rest_len {
            return shape_err(format!("{} values for {} block parameters", flat.len(), n_ang + n_rad + rest_len));
        }
        p.angular = SsmParams::from_flat(cfg.token_width, cfg.state_width, &flat[..n_ang])?;
        p.radial = SsmParams::from_flat(cfg.state_width, cfg.state_width, &flat[n_ang..n_ang + n_rad])?;
        let mut rest = &flat[n_ang + n_rad..];
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(p.proj.data_mut());
        take(p.writeback.data_mut());
        take(p.fuse.data_mut());
        take(&mut p.fuse_b);
        if let Some(f) = &mut p.ffn {
            take(f.up.data_mut());
            take(&mut f.up_b);
            take(f.down.data_mut());
            take(&mut f.down_b);
        }
        Ok(p)
    }

    fn check(&self, cfg: &BlockConfig) -> Result<()> {
        let (c, m, d) = (cfg.channels, cfg.token_width, cfg.state_width);
        self.angular.check()?;
        self.radial.check()?;
        let ok = (self.proj.rows(), self.proj.cols()) == (m, c)
            && (self.angular.token_width(), self.angular.state_width()) == (m, d)
            && (self.radial.token_width(), self.radial.state_width()) == (d, d)
            && (self.writeback.rows(), self.writeback.cols()) == (c, d)
            && (self.fuse.rows(), self.fuse.cols()) == (c, c)
            && self.fuse_b.len() == c
            && self.ffn.is_some() == cfg.ffn
            && self.ffn.as_ref().is_none_or(|f| {
                (f.up.rows(), f.up.cols()) == (2 * c, c)
                    && f.up_b.len() == 2 * c
                    && (f.down.rows(), f.down.cols()) == (c, 2 * c)
                    && f.down_b.len() == c
            });
        if ok && c > 0 && m > 0 && d > 0 {
            Ok(())
        } else {
            shape_err(format!("block weights inconsistent with C={c}, m={m}, d={d}"))
        }
    }
}

type GeometryKey = (usize, usize, u64, u64, u64);

#[derive(Debug)]
pub struct PrismBlock {
    config: BlockConfig,
    pub params: PrismParams,
    rings: Mutex<HashMap<GeometryKey, Arc<RingPartition>>>,
}

impl Clone for PrismBlock {
    fn clone(&self) -> Self {
        Self::from_params(self.config.clone(), self.params.clone()).expect("cloned params are valid")
    }
}

/// Ring pathway intermediates for one input.
#[derive(Debug, Clone)]
pub struct BranchTrace {
    /// Channels of the full-width weights the branch used.
    pub channels: Vec<usize>,
    pub rings: Arc<RingPartition>,
    /// The branch input (only the channels in `channels`).
    pub input: FeatureMap,
    pub angular: Vec<SsmRun>,
    pub descriptors: RingDescriptorSet,
    pub radial: SsmRun,
    /// Write-back `Ψ · y^rad_{r̂(u,v)}` on `channels`.
    pub output: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct PrismTrace {
    pub input: FeatureMap,
    pub partition: PcfPartition,
    pub branch: BranchTrace,
    /// `Y`: branch output on retained channels, input values on bypassed ones.
    pub merged: FeatureMap,
    /// `X_in + Fuse · Y + b`.
    pub fused: FeatureMap,
    /// FFN pre-activations (`N × 2C`) when the FFN is enabled.
    pub ffn_hidden: Option<Vec<f64>>,
    pub output: FeatureMap,
}

impl PrismBlock {
    pub fn from_params(config: BlockConfig, params: PrismParams) -> Result<Self> {
        if config.delta_r.is_nan() || config.delta_r <= 0.0 {
            return crate::error::param_err(format!("ring width must be positive, got {}", config.delta_r));
        }
        params.check(&config)?;
        Ok(Self { config, params, rings: Mutex::new(HashMap::new()) })
    }

    pub fn seeded(config: BlockConfig, seed: u64) -> Result<Self> {
        let params = PrismParams::seeded(&config, seed);
        Self::from_params(config, params)
    }

    pub fn from_rng(config: BlockConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::seeded(config, rng.next_u64())
    }

    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    /// Ring partition for an `h × w` input, built once per geometry.
    pub fn rings_for(&self, height: usize, width: usize) -> Result<Arc<RingPartition>> {
        let center = self.config.center.resolve(height, width);
        let key = (height, width, center.cx.to_bits(), center.cy.to_bits(), self.config.delta_r.to_bits());
        let mut cache = self.rings.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = cache.get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(build_rings(height, width, center, self.config.delta_r)?);
        cache.insert(key, Arc::clone(&p));
        Ok(p)
    }

    pub fn partition(&self, input: &FeatureMap) -> PcfPartition {
        partition_salience(gap(input), self.config.pcf)
    }

    /// The ring pathway on an input carrying exactly `channels` (indices into
    /// the full-width weights).
    pub fn run_branch(&self, input: &FeatureMap, channels: &[usize]) -> Result<BranchTrace> {
        let p = &self.params;
        if input.channels() != channels.len() || channels.iter().any(|&c| c >= self.config.channels) {
            return shape_err(format!(
                "branch input has {} channels for channel list {:?}",
                input.channels(),
                channels
            ));
        }
        let rings = self.rings_for(input.height(), input.width())?;
        let proj = p.proj.select_columns(channels);
        let writeback = p.writeback.select_rows(channels);
        let (m, d) = (self.config.token_width, self.config.state_width);

        let mut angular = Vec::with_capacity(rings.ring_count());
        for r in 0..rings.ring_count() {
            if rings.rings()[r].is_empty() {
                angular.push(SsmRun::empty(m, d));
                continue;
            }
            let seq = ring_tokens(input, &rings, r, &proj)?;
            angular.push(ssm_forward(&seq, &p.angular)?);
        }
        let descriptors = RingDescriptorSet::from_runs(&angular)?;
        let radial = radial_forward(&descriptors, &p.radial)?;

        let mut output =
            FeatureMap::zeros(input.height(), input.width(), channels.len())?.with_mask(input.mask().to_vec())?;
        for v in 0..input.height() {
            for u in 0..input.width() {
                let r = rings.ring_of(u, v);
                writeback.matvec_into(radial.output(r), output.pixel_mut(u, v));
            }
        }
        Ok(BranchTrace {
            channels: channels.to_vec(),
            rings,
            input: input.clone(),
            angular,
            descriptors,
            radial,
            output,
        })
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.forward_traced(input)?.output)
    }

    pub fn forward_traced(&self, input: &FeatureMap) -> Result<PrismTrace> {
        let partition = self.partition(input);
        self.forward_with_partition(input, partition)
    }

    /// Forward pass with a caller-supplied channel partition.
    pub fn forward_with_partition(&self, input: &FeatureMap, partition: PcfPartition) -> Result<PrismTrace> {
        let c = self.config.channels;
        if input.channels() != c {
            return shape_err(format!("block expects {c} channels, input has {}", input.channels()));
        }
        if partition.channels() != c || partition.retained.is_empty() {
            return shape_err("channel partition does not fit the block");
        }
        let sub = crate::pcf::select_channels(input, &partition.retained)?;
        let branch = self.run_branch(&sub, &partition.retained)?;
        let merged = merge(&branch.output, input, &partition)?;

        let p = &self.params;
        let mut fused = input.clone();
        let mut tmp = vec![0.0; c];
        for (dst, y) in fused.values_mut().chunks_exact_mut(c).zip(merged.values().chunks_exact(c)) {
            p.fuse.matvec_into(y, &mut tmp);
            for ((o, t), b) in dst.iter_mut().zip(&tmp).zip(&p.fuse_b) {
                *o += t + b;
            }
        }

        let (output, ffn_hidden) = match &p.ffn {
            None => (fused.clone(), None),
            Some(f) => {
                let mut out = fused.clone();
                let mut hidden = vec![0.0; fused.pixel_count() * 2 * c];
                let mut act = vec![0.0; 2 * c];
                for ((dst, x), pre) in out
                    .values_mut()
                    .chunks_exact_mut(c)
                    .zip(fused.values().chunks_exact(c))
                    .zip(hidden.chunks_exact_mut(2 * c))
                {
                    f.up.matvec_into(x, pre);
                    for ((a, h), b) in act.iter_mut().zip(pre.iter_mut()).zip(&f.up_b) {
                        *h += b;
                        *a = h.max(0.0);
                    }
                    f.down.matvec_into(&act, &mut tmp);
                    for ((o, t), b) in dst.iter_mut().zip(&tmp).zip(&f.down_b) {
                        *o += t + b;
                    }
                }
                (out, Some(hidden))
            }
        };

        Ok(PrismTrace { input: input.clone(), partition, branch, merged, fused, ffn_hidden, output })
    }
}

impl ChannelBranch for PrismBlock {
    fn run(&self, input: &FeatureMap, channels: &[usize]) -> Result<FeatureMap> {
        Ok(self.run_branch(input, channels)?.output)
    }

    fn width(&self) -> usize {
        self.config.channels
    }
}

/// Convenience wrapper over [`PrismBlock::forward`].
pub fn prism_forward(input: &FeatureMap, block: &PrismBlock) -> Result<FeatureMap> {
    block.forward(input)
}
