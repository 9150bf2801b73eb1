//! Seeded synthetic inputs.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::FeatureMap;

/// Cosines summed per channel.
pub const SMOOTH_TERMS: usize = 5;
/// Largest spatial frequency, in cycles across the shorter side.
pub const MAX_CYCLES: f64 = 2.0;

/// Band-limited image: per channel, a sum of [`SMOOTH_TERMS`] random
/// low-frequency 2D cosines, then rescaled to span `[−1, 1]`.
pub fn smooth_image(height: usize, width: usize, channels: usize, seed: u64) -> Result<FeatureMap> {
    let mut map = FeatureMap::zeros(height, width, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = height.min(width) as f64;
    for c in 0..channels {
        let terms: Vec<(f64, f64, f64, f64)> = (0..SMOOTH_TERMS)
            .map(|_| {
                let amp = rng.gen_range(0.2..1.0);
                let fx = rng.gen_range(-MAX_CYCLES..MAX_CYCLES) / span;
                let fy = rng.gen_range(-MAX_CYCLES..MAX_CYCLES) / span;
                let phase = rng.gen_range(0.0..TAU);
                (amp, fx, fy, phase)
            })
            .collect();
        let mut plane = Vec::with_capacity(height * width);
        for v in 0..height {
            for u in 0..width {
                let s: f64 =
                    terms.iter().map(|&(a, fx, fy, ph)| a * (TAU * (fx * u as f64 + fy * v as f64) + ph).cos()).sum();
                plane.push(s);
            }
        }
        let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (i, s) in plane.into_iter().enumerate() {
            map.values_mut()[i * channels + c] = if range > 0.0 { 2.0 * (s - lo) / range - 1.0 } else { 0.0 };
        }
    }
    Ok(map)
}

/// The upper `C/2` channels are identically zero; the rest are
/// `0.5 + 0.3 · smooth`, so every live channel has mean magnitude well above
/// the channel-average salience and all of them are retained under the mean
/// threshold.
pub fn half_dead_image(height: usize, width: usize, channels: usize, seed: u64) -> Result<FeatureMap> {
    let mut map = smooth_image(height, width, channels, seed)?;
    let live = channels - channels / 2;
    for px in map.values_mut().chunks_exact_mut(channels) {
        for (c, x) in px.iter_mut().enumerate() {
            *x = if c < live { 0.5 + 0.3 * *x } else { 0.0 };
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcf::pcf_partition;

    #[test]
    fn smooth_spans_unit_interval_per_channel() {
        let m = smooth_image(16, 12, 3, 7).unwrap();
        for c in 0..3 {
            let ch = m.channel(c);
            let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        assert_eq!(m, smooth_image(16, 12, 3, 7).unwrap());
        assert_ne!(m, smooth_image(16, 12, 3, 8).unwrap());
    }

    #[test]
    fn smooth_is_smooth() {
        // neighbouring pixels differ by at most the largest gradient of the sum
        let m = smooth_image(32, 32, 1, 3).unwrap();
        for v in 0..32 {
            for u in 1..32 {
                assert!((m.get(u, v, 0) - m.get(u - 1, v, 0)).abs() < 1.0);
            }
        }
    }

    #[test]
    fn half_dead_keeps_exactly_the_live_half() {
        for seed in 0..10 {
            let m = half_dead_image(16, 16, 8, seed).unwrap();
            assert_eq!(pcf_partition(&m).retained, vec![0, 1, 2, 3]);
        }
    }
}
