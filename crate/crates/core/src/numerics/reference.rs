//! Reference forward passes in double-double, written against the flat
//! parameter layouts of [`SsmParams::to_flat`] and [`PrismParams::to_flat`]
//! and sharing no arithmetic with the kernels. Geometry (ring loops) and the
//! channel partition are taken as given, as in the gradient definition.
//!
//! [`SsmParams::to_flat`]: crate::ssm::SsmParams::to_flat
//! [`PrismParams::to_flat`]: crate::prism::PrismParams::to_flat

use super::extended::{dot_dd, finite_diff_extended, Dd};
use crate::grid::FeatureMap;
use crate::pcf::PcfPartition;
use crate::prism::BlockConfig;
use crate::rings::RingPartition;

/// Number of flat parameters of an SSM with token width `m`, state width `d`.
pub fn ssm_param_count(m: usize, d: usize) -> usize {
    2 * d * m + 2 * d + d * d + m + 1
}

struct SsmView<'a> {
    m: usize,
    d: usize,
    decay_w: &'a [Dd],
    decay_b: &'a [Dd],
    input_w: &'a [Dd],
    input_b: &'a [Dd],
    mix: &'a [Dd],
    gate_w: &'a [Dd],
    gate_b: Dd,
}

fn split<'a>(rest: &mut &'a [Dd], n: usize) -> &'a [Dd] {
    let (head, tail) = rest.split_at(n);
    *rest = tail;
    head
}

impl<'a> SsmView<'a> {
    fn parse(m: usize, d: usize, rest: &mut &'a [Dd]) -> Self {
        SsmView {
            m,
            d,
            decay_w: split(rest, d * m),
            decay_b: split(rest, d),
            input_w: split(rest, d * m),
            input_b: split(rest, d),
            mix: split(rest, d * d),
            gate_w: split(rest, m),
            gate_b: split(rest, 1)[0],
        }
    }

    /// Outputs `T × d` of `h_k = A_k ⊙ h_{k−1} + [valid] Bx_k`, `y_k = g_k C0 h_k`
    /// with `A = 1 / (1 + e^s)` and `g = 1 / (1 + e^{−t})`.
    fn run(&self, tokens: &[Dd], mask: &[bool]) -> Vec<Dd> {
        let (m, d) = (self.m, self.d);
        let mut h = vec![Dd::ZERO; d];
        let mut out = Vec::with_capacity(mask.len() * d);
        for (k, &valid) in mask.iter().enumerate() {
            let x = &tokens[k * m..(k + 1) * m];
            for i in 0..d {
                let s = dot_dd(&self.decay_w[i * m..(i + 1) * m], x) + self.decay_b[i];
                let a = (Dd::ONE + s.exp()).recip();
                h[i] = a * h[i];
                if valid {
                    h[i] += dot_dd(&self.input_w[i * m..(i + 1) * m], x) + self.input_b[i];
                }
            }
            let t = dot_dd(self.gate_w, x) + self.gate_b;
            let g = (Dd::ONE + (-t).exp()).recip();
            for r in 0..d {
                out.push(g * dot_dd(&self.mix[r * d..(r + 1) * d], &h));
            }
        }
        out
    }
}

/// Reference SSM outputs for flat parameters `theta`.
pub fn reference_ssm(m: usize, d: usize, theta: &[Dd], tokens: &[Dd], mask: &[bool]) -> Vec<Dd> {
    assert_eq!(theta.len(), ssm_param_count(m, d), "flat SSM parameter count");
    assert_eq!(tokens.len(), mask.len() * m, "tokens are T × m");
    let mut rest = theta;
    SsmView::parse(m, d, &mut rest).run(tokens, mask)
}

/// Reference block output (`H × W × C`, row-major) for input `x`, flat
/// parameters `theta`, a fixed ring partition and a fixed channel partition.
pub fn reference_block(
    cfg: &BlockConfig,
    rings: &RingPartition,
    partition: &PcfPartition,
    x: &[Dd],
    mask: &[bool],
    theta: &[Dd],
) -> Vec<Dd> {
    let (c, m, d) = (cfg.channels, cfg.token_width, cfg.state_width);
    let (h, w) = (rings.height(), rings.width());
    assert_eq!(x.len(), h * w * c, "input is H × W × C");
    let mut rest = theta;
    let angular = SsmView::parse(m, d, &mut rest);
    let radial = SsmView::parse(d, d, &mut rest);
    let proj = split(&mut rest, m * c);
    let writeback = split(&mut rest, c * d);
    let fuse = split(&mut rest, c * c);
    let fuse_b = split(&mut rest, c);
    let ffn = cfg.ffn.then(|| {
        let up = split(&mut rest, 2 * c * c);
        let up_b = split(&mut rest, 2 * c);
        let down = split(&mut rest, 2 * c * c);
        let down_b = split(&mut rest, c);
        (up, up_b, down, down_b)
    });
    assert!(rest.is_empty(), "flat block parameter count");

    let retained = &partition.retained;
    let pixel = |u: usize, v: usize| &x[(v * w + u) * c..(v * w + u + 1) * c];

    // Ring descriptors: mean of angular outputs along each loop.
    let mut z = Vec::with_capacity(rings.ring_count() * d);
    for ring in rings.rings() {
        if ring.is_empty() {
            z.extend(std::iter::repeat_n(Dd::ZERO, d));
            continue;
        }
        let mut tokens = Vec::with_capacity(ring.len() * m);
        let mut valid = Vec::with_capacity(ring.len());
        for &(u, v) in &ring.pixels {
            let px = pixel(u, v);
            for i in 0..m {
                let mut acc = Dd::ZERO;
                for &ch in retained {
                    acc += proj[i * c + ch] * px[ch];
                }
                tokens.push(acc);
            }
            valid.push(mask[v * w + u]);
        }
        let ys = angular.run(&tokens, &valid);
        let n = Dd::new(ring.len() as f64);
        for j in 0..d {
            let mut s = Dd::ZERO;
            for k in 0..ring.len() {
                s += ys[k * d + j];
            }
            z.push(s / n);
        }
    }
    let y_rad = radial.run(&z, &vec![true; rings.ring_count()]);

    let mut out = Vec::with_capacity(x.len());
    let mut y = vec![Dd::ZERO; c];
    for v in 0..h {
        for u in 0..w {
            let px = pixel(u, v);
            let r = rings.ring_of(u, v);
            y.copy_from_slice(px);
            for &ch in retained {
                y[ch] = dot_dd(&writeback[ch * d..(ch + 1) * d], &y_rad[r * d..(r + 1) * d]);
            }
            let fused: Vec<Dd> = (0..c).map(|i| px[i] + dot_dd(&fuse[i * c..(i + 1) * c], &y) + fuse_b[i]).collect();
            match &ffn {
                None => out.extend(fused),
                Some((up, up_b, down, down_b)) => {
                    let act: Vec<Dd> =
                        (0..2 * c).map(|j| (dot_dd(&up[j * c..(j + 1) * c], &fused) + up_b[j]).relu()).collect();
                    out.extend((0..c).map(|i| fused[i] + dot_dd(&down[i * 2 * c..(i + 1) * 2 * c], &act) + down_b[i]));
                }
            }
        }
    }
    out
}

fn to_dd(v: &[f64]) -> Vec<Dd> {
    v.iter().map(|&x| Dd::new(x)).collect()
}

/// Central differences of `Σ weights ⊙ SSM(tokens; θ)` with respect to the
/// flat parameters and to the tokens, evaluated in double-double.
pub fn ssm_loss_differences(
    m: usize,
    d: usize,
    theta: &[f64],
    tokens: &[f64],
    mask: &[bool],
    weights: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let w = to_dd(weights);
    let (theta_dd, tokens_dd) = (to_dd(theta), to_dd(tokens));
    let by_param = finite_diff_extended(|th| dot_dd(&w, &reference_ssm(m, d, th, &tokens_dd, mask)), theta, h);
    let by_token = finite_diff_extended(|x| dot_dd(&w, &reference_ssm(m, d, &theta_dd, x, mask)), tokens, h);
    (by_param, by_token)
}

/// Central differences of `Σ weights ⊙ block(x; θ)` with respect to the flat
/// parameters and to the input values, rings and channel partition held fixed.
pub fn block_loss_differences(
    cfg: &BlockConfig,
    rings: &RingPartition,
    partition: &PcfPartition,
    x: &FeatureMap,
    theta: &[f64],
    weights: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let w = to_dd(weights);
    let (theta_dd, x_dd) = (to_dd(theta), to_dd(x.values()));
    let mask = x.mask();
    let by_param =
        finite_diff_extended(|th| dot_dd(&w, &reference_block(cfg, rings, partition, &x_dd, mask, th)), theta, h);
    let by_input = finite_diff_extended(
        |xi| dot_dd(&w, &reference_block(cfg, rings, partition, xi, mask, &theta_dd)),
        x.values(),
        h,
    );
    (by_param, by_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_map, Fill};
    use crate::prism::PrismBlock;
    use crate::scans::TokenSequence;
    use crate::ssm::{ssm_forward, SsmParams};

    fn dd(v: &[f64]) -> Vec<Dd> {
        to_dd(v)
    }

    #[test]
    fn ssm_reference_matches_kernel() {
        for seed in 0..20 {
            let (m, d) = (3, 4);
            let p = SsmParams::seeded(m, d, seed);
            let t = 11;
            let tokens: Vec<f64> = (0..t * m).map(|i| ((i as f64) * 0.37 + seed as f64).sin()).collect();
            let mask: Vec<bool> = (0..t).map(|k| !(k + seed as usize).is_multiple_of(4)).collect();
            let run = ssm_forward(&TokenSequence::new(m, tokens.clone(), mask.clone()).unwrap(), &p).unwrap();
            let reference = reference_ssm(m, d, &dd(&p.to_flat()), &dd(&tokens), &mask);
            assert_eq!(p.to_flat().len(), ssm_param_count(m, d));
            for (a, b) in run.outputs.iter().zip(&reference) {
                assert!((a - b.to_f64()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn block_reference_matches_forward() {
        for (h, w, c, ffn) in [(6, 6, 4, false), (5, 9, 3, true), (7, 7, 5, true)] {
            let mut cfg = BlockConfig::new(c, 3, 2);
            cfg.ffn = ffn;
            let block = PrismBlock::seeded(cfg.clone(), h as u64).unwrap();
            let mut x = make_map(h, w, c, Fill::Seeded(c as u64)).unwrap();
            x.mask_mut()[h * w / 2] = false;
            x.mask_mut()[1] = false;
            let t = block.forward_traced(&x).unwrap();
            let rings = block.rings_for(h, w).unwrap();
            let reference =
                reference_block(&cfg, &rings, &t.partition, &dd(x.values()), x.mask(), &dd(&block.params.to_flat()));
            for (a, b) in t.output.values().iter().zip(&reference) {
                assert!((a - b.to_f64()).abs() < 1e-13);
            }
        }
    }
}
