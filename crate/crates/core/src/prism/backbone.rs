//! Four-stage backbone: patchify, `L_i` PRISM blocks per stage, mean-pool
//! downsampling with a channel projection between stages, global average
//! pooling and a linear head. Forward only, seeded random weights.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockConfig, CenterPolicy, PrismBlock};
use crate::error::{param_err, shape_err, Result};
use crate::grid::{gap, FeatureMap};
use crate::linalg::Matrix;
use crate::pcf::PcfMode;
use crate::rings::DEFAULT_DELTA_R;

pub const STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub blocks: [usize; STAGES],
    pub channels: [usize; STAGES],
    pub in_channels: usize,
    pub patchify: usize,
    pub downsample: usize,
    pub classes: usize,
    pub token_width: usize,
    pub state_width: usize,
    pub delta_r: f64,
    pub pcf: PcfMode,
    pub ffn: bool,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            blocks: [1, 1, 1, 1],
            channels: [8, 16, 32, 64],
            in_channels: 3,
            patchify: 4,
            downsample: 2,
            classes: 10,
            token_width: 4,
            state_width: 4,
            delta_r: DEFAULT_DELTA_R,
            pcf: PcfMode::Mean,
            ffn: false,
            seed: 42,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [self.in_channels, self.patchify, self.downsample, self.classes, self.token_width, self.state_width];
        if positive.contains(&0) || self.channels.contains(&0) {
            return param_err("backbone sizes must be positive");
        }
        if self.delta_r.is_nan() || self.delta_r <= 0.0 {
            return param_err(format!("delta_r must be positive, got {}", self.delta_r));
        }
        Ok(())
    }

    fn block_config(&self, stage: usize) -> BlockConfig {
        BlockConfig {
            channels: self.channels[stage],
            token_width: self.token_width,
            state_width: self.state_width,
            delta_r: self.delta_r,
            center: CenterPolicy::Symmetric,
            pcf: self.pcf,
            ffn: self.ffn,
        }
    }

    /// `(H, W, C)` after each stage for an `height × width` image.
    pub fn stage_shapes(&self, height: usize, width: usize) -> Result<[(usize, usize, usize); STAGES]> {
        self.validate()?;
        let p = self.patchify;
        let f = self.downsample;
        let total = p * f.pow(STAGES as u32 - 1);
        if height == 0 || width == 0 || !height.is_multiple_of(total) || !width.is_multiple_of(total) {
            return shape_err(format!(
                "{height}x{width} image is not divisible by patchify {p} and three {f}x downsamples"
            ));
        }
        let mut shapes = [(0, 0, 0); STAGES];
        let (mut h, mut w) = (height / p, width / p);
        for (s, shape) in shapes.iter_mut().enumerate() {
            if s > 0 {
                h /= f;
                w /= f;
            }
            *shape = (h, w, self.channels[s]);
        }
        Ok(shapes)
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    /// `C_1 × p²·C_in`, input flattened as `(dv, du, c)`.
    patch: Matrix,
    stages: Vec<Vec<PrismBlock>>,
    /// `C_{i+1} × C_i`.
    transitions: Vec<Matrix>,
    head: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneTrace {
    pub stage_shapes: Vec<(usize, usize, usize)>,
    /// Global average pool of each stage's output.
    pub pooled: Vec<Vec<f64>>,
    /// `C'` realized by every block, stage-major.
    pub retained: Vec<usize>,
    pub scores: Vec<f64>,
}

fn fan_in_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, 1.0 / (cols as f64).sqrt(), rng)
}

impl Backbone {
    pub fn new(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.channels;
        let p = config.patchify;
        let patch = fan_in_uniform(c[0], p * p * config.in_channels, &mut rng);
        let mut stages = Vec::with_capacity(STAGES);
        let mut transitions = Vec::with_capacity(STAGES - 1);
        for s in 0..STAGES {
            if s > 0 {
                transitions.push(fan_in_uniform(c[s], c[s - 1], &mut rng));
            }
            let blocks = (0..config.blocks[s])
                .map(|_| PrismBlock::seeded(config.block_config(s), rng.next_u64()))
                .collect::<Result<Vec<_>>>()?;
            stages.push(blocks);
        }
        let head = fan_in_uniform(config.classes, c[STAGES - 1], &mut rng);
        Ok(Self { config: config.clone(), patch, stages, transitions, head })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn stages(&self) -> &[Vec<PrismBlock>] {
        &self.stages
    }

    pub fn forward(&self, image: &FeatureMap) -> Result<Vec<f64>> {
        Ok(self.forward_traced(image)?.scores)
    }

    pub fn forward_traced(&self, image: &FeatureMap) -> Result<BackboneTrace> {
        if image.channels() != self.config.in_channels {
            return shape_err(format!(
                "backbone expects {} input channels, image has {}",
                self.config.in_channels,
                image.channels()
            ));
        }
        let shapes = self.config.stage_shapes(image.height(), image.width())?;
        let mut x = patchify(image, self.config.patchify, &self.patch)?;
        let mut pooled = Vec::with_capacity(STAGES);
        let mut retained = Vec::new();
        for (s, blocks) in self.stages.iter().enumerate() {
            if s > 0 {
                x = downsample(&x, self.config.downsample, &self.transitions[s - 1])?;
            }
            for block in blocks {
                let t = block.forward_traced(&x)?;
                retained.push(t.partition.retained.len());
                x = t.output;
            }
            debug_assert_eq!(x.shape(), shapes[s]);
            pooled.push(gap(&x));
        }
        let scores = self.head.matvec(&pooled[STAGES - 1]);
        Ok(BackboneTrace { stage_shapes: shapes.to_vec(), pooled, retained, scores })
    }
}

/// Builds a backbone from `cfg` with `seed` replacing `cfg.seed` and returns
/// the class scores.
pub fn backbone_forward(image: &FeatureMap, cfg: &BackboneConfig, seed: u64) -> Result<Vec<f64>> {
    let cfg = BackboneConfig { seed, ..cfg.clone() };
    Backbone::new(&cfg)?.forward(image)
}

/// A pixel is valid after pooling only if every pixel it covers was.
fn pooled_mask(map: &FeatureMap, f: usize) -> Vec<bool> {
    let (h, w) = (map.height() / f, map.width() / f);
    let mut mask = vec![true; h * w];
    for v in 0..map.height() {
        for u in 0..map.width() {
            if !map.is_valid(u, v) {
                mask[(v / f) * w + u / f] = false;
            }
        }
    }
    mask
}

fn patchify(image: &FeatureMap, p: usize, proj: &Matrix) -> Result<FeatureMap> {
    let (h, w, c) = (image.height() / p, image.width() / p, image.channels());
    let mut out = FeatureMap::zeros(h, w, proj.rows())?.with_mask(pooled_mask(image, p))?;
    let mut patch = Vec::with_capacity(p * p * c);
    for v in 0..h {
        for u in 0..w {
            patch.clear();
            for dv in 0..p {
                for du in 0..p {
                    patch.extend_from_slice(image.pixel(u * p + du, v * p + dv));
                }
            }
            proj.matvec_into(&patch, out.pixel_mut(u, v));
        }
    }
    Ok(out)
}

fn downsample(map: &FeatureMap, f: usize, proj: &Matrix) -> Result<FeatureMap> {
    let (h, w, c) = (map.height() / f, map.width() / f, map.channels());
    let mut out = FeatureMap::zeros(h, w, proj.rows())?.with_mask(pooled_mask(map, f))?;
    let mut mean = vec![0.0; c];
    let scale = 1.0 / (f * f) as f64;
    for v in 0..h {
        for u in 0..w {
            mean.iter_mut().for_each(|m| *m = 0.0);
            for dv in 0..f {
                for du in 0..f {
                    mean.iter_mut().zip(map.pixel(u * f + du, v * f + dv)).for_each(|(m, x)| *m += x);
                }
            }
            mean.iter_mut().for_each(|m| *m *= scale);
            proj.matvec_into(&mean, out.pixel_mut(u, v));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_map, Fill};

    #[test]
    fn example_shapes() {
        let cfg = BackboneConfig::default();
        let img = make_map(32, 32, 3, Fill::Seeded(0)).unwrap();
        let t = Backbone::new(&cfg).unwrap().forward_traced(&img).unwrap();
        assert_eq!(t.stage_shapes, vec![(8, 8, 8), (4, 4, 16), (2, 2, 32), (1, 1, 64)]);
        assert_eq!(t.scores.len(), 10);
        assert_eq!(t.retained.len(), 4);
    }

    #[test]
    fn same_seed_same_scores() {
        let cfg = BackboneConfig { ffn: true, blocks: [2, 1, 1, 1], ..Default::default() };
        let img = make_map(32, 32, 3, Fill::Seeded(1)).unwrap();
        let a = backbone_forward(&img, &cfg, 7).unwrap();
        let b = backbone_forward(&img, &cfg, 7).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, backbone_forward(&img, &cfg, 8).unwrap());
    }

    #[test]
    fn indivisible_images_are_rejected() {
        let cfg = BackboneConfig::default();
        let bb = Backbone::new(&cfg).unwrap();
        assert!(bb.forward(&make_map(30, 32, 3, Fill::Constant(1.0)).unwrap()).is_err());
        assert!(bb.forward(&make_map(16, 16, 3, Fill::Constant(1.0)).unwrap()).is_err());
        assert!(bb.forward(&make_map(32, 32, 2, Fill::Constant(1.0)).unwrap()).is_err());
        assert!(bb.forward(&make_map(64, 96, 3, Fill::Constant(1.0)).unwrap()).is_ok());
    }

    #[test]
    fn downsample_of_constant_map_is_projection_of_constant() {
        let map = FeatureMap::filled(4, 6, 2, 1.5).unwrap();
        let proj = Matrix::from_vec(1, 2, vec![1.0, -2.0]);
        let out = downsample(&map, 2, &proj).unwrap();
        assert_eq!(out.shape(), (2, 3, 1));
        assert!(out.values().iter().all(|&v| v == 1.5 - 3.0));
    }

    #[test]
    fn patch_flattening_order() {
        // 2x2 patch of a 1-channel map: values in (dv, du) order
        let map = FeatureMap::from_values(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let proj = Matrix::from_vec(1, 4, vec![1.0, 10.0, 100.0, 1000.0]);
        let out = patchify(&map, 2, &proj).unwrap();
        assert_eq!(out.values(), &[4321.0]);
    }
}
