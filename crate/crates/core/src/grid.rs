//! Feature-map container and geometric transforms.
//!
//! Coordinates: `u` is the column (x, `0..W`), `v` is the row (y, `0..H`,
//! growing downwards). Values are stored row-major by `(v, u, c)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// How [`make_map`] fills a fresh map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Constant(f64),
    /// Uniform in `[-1, 1)` from a ChaCha8 stream.
    Seeded(u64),
}

pub fn make_map(height: usize, width: usize, channels: usize, fill: Fill) -> Result<FeatureMap> {
    match fill {
        Fill::Constant(c) => FeatureMap::filled(height, width, channels, c),
        Fill::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = checked_len(height, width, channels)?;
            let values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FeatureMap::from_values(height, width, channels, values)
        }
    }
}

fn checked_len(height: usize, width: usize, channels: usize) -> Result<usize> {
    if height == 0 || width == 0 || channels == 0 {
        return shape_err(format!("zero dimension in {height}x{width}x{channels}"));
    }
    height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(channels))
        .map_or_else(|| shape_err("map size overflows usize"), Ok)
}

impl FeatureMap {
    pub fn filled(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        let n = checked_len(height, width, channels)?;
        Ok(Self { height, width, channels, values: vec![fill; n], mask: vec![true; height * width] })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn from_values(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let n = checked_len(height, width, channels)?;
        if values.len() != n {
            return shape_err(format!("expected {n} values, got {}", values.len()));
        }
        Ok(Self { height, width, channels, values, mask: vec![true; height * width] })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.height * self.width {
            return shape_err(format!("mask length {} != {}", mask.len(), self.height * self.width));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    #[inline]
    pub fn pixel_index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f64] {
        let i = self.pixel_index(u, v) * self.channels;
        &self.values[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f64] {
        let i = self.pixel_index(u, v) * self.channels;
        &mut self.values[i..i + self.channels]
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.values[self.pixel_index(u, v) * self.channels + c]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.mask[self.pixel_index(u, v)]
    }

    /// Channel `c` as a contiguous vector in row-major pixel order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    /// `a·self + b·other`, keeping `self`'s mask.
    pub fn lin_comb(&self, a: f64, other: &FeatureMap, b: f64) -> Result<FeatureMap> {
        if !self.same_shape(other) {
            return shape_err("lin_comb of differently shaped maps");
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(FeatureMap { values, ..self.clone() })
    }
}

/// Geometric center used for ring partitions, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCenter {
    pub cx: f64,
    pub cy: f64,
}

impl GridCenter {
    pub fn new(cx: f64, cy: f64) -> Self {
        Self { cx, cy }
    }
}

/// Midpoint of the index range, `((W-1)/2, (H-1)/2)`; fractional for even sizes.
pub fn default_center(height: usize, width: usize) -> GridCenter {
    GridCenter { cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0 }
}

/// Global average pooling per channel. The validity mask is ignored.
pub fn gap(map: &FeatureMap) -> Vec<f64> {
    let c = map.channels;
    let mut sums = vec![0.0; c];
    for px in map.values.chunks_exact(c) {
        for (s, x) in sums.iter_mut().zip(px) {
            *s += x;
        }
    }
    let n = map.pixel_count() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// Rotates a square map by `quarter_turns` × 90°, counterclockwise as displayed
/// (rows growing downwards). Output pixel `(u, v)` takes input pixel `(W-1-v, u)`
/// for one turn.
pub fn rotate_exact(map: &FeatureMap, quarter_turns: i64) -> Result<FeatureMap> {
    if map.height != map.width {
        return shape_err(format!("exact rotation needs a square map, got {}x{}", map.height, map.width));
    }
    let turns = quarter_turns.rem_euclid(4) as u8;
    let n = map.width;
    let mut out = map.clone();
    for v in 0..n {
        for u in 0..n {
            let (su, sv) = rotate_source(u, v, n, turns);
            let dst = out.pixel_index(u, v);
            out.mask[dst] = map.is_valid(su, sv);
            out.pixel_mut(u, v).copy_from_slice(map.pixel(su, sv));
        }
    }
    Ok(out)
}

/// Source pixel of output `(u, v)` after `turns` counterclockwise quarter turns
/// on an `n × n` grid.
#[inline]
pub(crate) fn rotate_source(u: usize, v: usize, n: usize, turns: u8) -> (usize, usize) {
    match turns & 3 {
        0 => (u, v),
        1 => (n - 1 - v, u),
        2 => (n - 1 - u, n - 1 - v),
        _ => (v, n - 1 - u),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Nearest,
    Bilinear,
}

/// `(cos, sin)` of an angle in degrees, exact at multiples of 90°.
fn exact_cos_sin(angle_degrees: f64) -> (f64, f64) {
    let r = angle_degrees.rem_euclid(360.0);
    if r.fract() == 0.0 && (r as i64) % 90 == 0 {
        match (r as i64) / 90 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let t = angle_degrees.to_radians();
        (t.cos(), t.sin())
    }
}

/// Rotates about [`default_center`] on the same canvas, counterclockwise as
/// displayed. Pixels whose source falls outside the grid become 0 with
/// `mask = false`.
pub fn rotate_resampled(map: &FeatureMap, angle_degrees: f64, mode: Resample) -> FeatureMap {
    let (cos, sin) = exact_cos_sin(angle_degrees);
    let center = default_center(map.height, map.width);
    let (w, h) = (map.width as f64, map.height as f64);
    let mut out = map.clone();
    let channels = map.channels;
    let mut acc = vec![0.0; channels];
    for v in 0..map.height {
        for u in 0..map.width {
            let ox = u as f64 - center.cx;
            let oy = v as f64 - center.cy;
            let sx = ox * cos - oy * sin + center.cx;
            let sy = ox * sin + oy * cos + center.cy;
            let dst = out.pixel_index(u, v);
            let inside = match mode {
                Resample::Nearest => {
                    let (iu, iv) = ((sx + 0.5).floor(), (sy + 0.5).floor());
                    if iu >= 0.0 && iu < w && iv >= 0.0 && iv < h {
                        let (iu, iv) = (iu as usize, iv as usize);
                        out.mask[dst] = map.is_valid(iu, iv);
                        out.pixel_mut(u, v).copy_from_slice(map.pixel(iu, iv));
                        true
                    } else {
                        false
                    }
                }
                Resample::Bilinear => {
                    const EPS: f64 = 1e-9;
                    if sx >= -EPS && sx <= w - 1.0 + EPS && sy >= -EPS && sy <= h - 1.0 + EPS {
                        let sx = sx.clamp(0.0, w - 1.0);
                        let sy = sy.clamp(0.0, h - 1.0);
                        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                        let (x1, y1) = ((x0 + 1).min(map.width - 1), (y0 + 1).min(map.height - 1));
                        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for (px, py, wgt) in [
                            (x0, y0, (1.0 - fx) * (1.0 - fy)),
                            (x1, y0, fx * (1.0 - fy)),
                            (x0, y1, (1.0 - fx) * fy),
                            (x1, y1, fx * fy),
                        ] {
                            if wgt != 0.0 {
                                for (a, x) in acc.iter_mut().zip(map.pixel(px, py)) {
                                    *a += wgt * x;
                                }
                            }
                        }
                        let (nu, nv) = ((sx + 0.5).floor() as usize, (sy + 0.5).floor() as usize);
                        out.mask[dst] = map.is_valid(nu.min(map.width - 1), nv.min(map.height - 1));
                        out.pixel_mut(u, v).copy_from_slice(&acc);
                        true
                    } else {
                        false
                    }
                }
            };
            if !inside {
                out.mask[dst] = false;
                out.pixel_mut(u, v).iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
    out
}

/// Zeroes tile `(tile_row, tile_col)` of a `grid_div × grid_div` tiling and
/// marks it invalid.
pub fn occlude(map: &FeatureMap, tile_row: usize, tile_col: usize, grid_div: usize) -> Result<FeatureMap> {
    if grid_div == 0 || !map.height.is_multiple_of(grid_div) || !map.width.is_multiple_of(grid_div) {
        return param_err(format!("grid_div {grid_div} must divide {}x{}", map.height, map.width));
    }
    if tile_row >= grid_div || tile_col >= grid_div {
        return param_err(format!("tile ({tile_row},{tile_col}) outside {grid_div}x{grid_div} grid"));
    }
    let (th, tw) = (map.height / grid_div, map.width / grid_div);
    let mut out = map.clone();
    for v in tile_row * th..(tile_row + 1) * th {
        for u in tile_col * tw..(tile_col + 1) * tw {
            let i = out.pixel_index(u, v);
            out.mask[i] = false;
            out.pixel_mut(u, v).iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_2x2(vals: [f64; 4]) -> FeatureMap {
        FeatureMap::from_values(2, 2, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn make_map_examples() {
        let m = make_map(2, 2, 1, Fill::Constant(0.0)).unwrap();
        assert_eq!(m.values(), &[0.0; 4]);
        assert!(m.mask().iter().all(|&b| b));
        let m = make_map(1, 1, 3, Fill::Constant(7.0)).unwrap();
        assert_eq!(m.values(), &[7.0; 3]);
        let a = make_map(3, 3, 2, Fill::Seeded(42)).unwrap();
        let b = make_map(3, 3, 2, Fill::Seeded(42)).unwrap();
        assert_eq!(a, b);
        assert!(make_map(0, 2, 1, Fill::Constant(0.0)).is_err());
        assert!(make_map(2, 2, 0, Fill::Seeded(1)).is_err());
    }

    #[test]
    fn default_center_examples() {
        assert_eq!(default_center(3, 3), GridCenter::new(1.0, 1.0));
        assert_eq!(default_center(4, 4), GridCenter::new(1.5, 1.5));
        assert_eq!(default_center(1, 5), GridCenter::new(2.0, 0.0));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(&map_2x2([1.0, 2.0, 3.0, 4.0])), vec![2.5]);
        let m = FeatureMap::filled(3, 5, 4, -1.25).unwrap();
        assert_eq!(gap(&m), vec![-1.25; 4]);
        // ch0 = [1,1,1,1], ch1 = [-2,0,0,2], interleaved per pixel
        let m = FeatureMap::from_values(2, 2, 2, vec![1.0, -2.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(gap(&m), vec![1.0, 0.0]);
    }

    #[test]
    fn rotate_exact_examples() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let m = map_2x2([a, b, c, d]);
        assert_eq!(rotate_exact(&m, 0).unwrap(), m);
        assert_eq!(rotate_exact(&m, 4).unwrap(), m);
        assert_eq!(rotate_exact(&m, 1).unwrap().values(), &[b, d, a, c]);
        let rect = FeatureMap::zeros(2, 3, 1).unwrap();
        assert!(rotate_exact(&rect, 1).is_err());
    }

    #[test]
    fn rotate_exact_moves_mask_with_values() {
        let m = map_2x2([1.0, 2.0, 3.0, 4.0]).with_mask(vec![false, true, true, true]).unwrap();
        let r = rotate_exact(&m, 1).unwrap();
        // value `a` (invalid) lands at (0, 1)
        assert_eq!(r.mask(), &[true, true, false, true]);
    }

    #[test]
    fn rotate_resampled_identity_and_quarter_turns() {
        let m = make_map(6, 6, 2, Fill::Seeded(3)).unwrap();
        assert_eq!(rotate_resampled(&m, 0.0, Resample::Nearest), m);
        assert_eq!(rotate_resampled(&m, 0.0, Resample::Bilinear), m);
        for q in 1..4 {
            let exact = rotate_exact(&m, q).unwrap();
            assert_eq!(rotate_resampled(&m, 90.0 * q as f64, Resample::Nearest), exact);
            assert_eq!(rotate_resampled(&m, 90.0 * q as f64, Resample::Bilinear), exact);
        }
        assert_eq!(rotate_resampled(&m, -90.0, Resample::Nearest), rotate_exact(&m, 3).unwrap());
    }

    /// Independent inside test: the nearest-neighbour source lands in the grid
    /// iff the output point lies inside the source cell square
    /// `[-0.5, n-0.5)²` rotated forward about the center. The square's corners
    /// are rotated with a complex multiply and containment is decided with
    /// edge cross products.
    fn padded_pixels_oracle(n: usize, angle: f64) -> usize {
        let c = (n as f64 - 1.0) / 2.0;
        let t = -angle.to_radians();
        let rot = |x: f64, y: f64| {
            let (dx, dy) = (x - c, y - c);
            (dx * t.cos() - dy * t.sin() + c, dx * t.sin() + dy * t.cos() + c)
        };
        let lo = -0.5;
        let hi = n as f64 - 0.5;
        let corners = [rot(lo, lo), rot(hi, lo), rot(hi, hi), rot(lo, hi)];
        let mut outside = 0;
        for v in 0..n {
            for u in 0..n {
                let (px, py) = (u as f64, v as f64);
                let signs: Vec<f64> = (0..4)
                    .map(|i| {
                        let (ax, ay) = corners[i];
                        let (bx, by) = corners[(i + 1) % 4];
                        (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                    })
                    .collect();
                let inside = signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0);
                if !inside {
                    outside += 1;
                }
            }
        }
        outside
    }

    #[test]
    fn rotate_60_pads_corners() {
        let m = FeatureMap::filled(8, 8, 1, 1.0).unwrap();
        let r = rotate_resampled(&m, 60.0, Resample::Nearest);
        let padded = r.mask().iter().filter(|&&b| !b).count();
        assert_eq!(padded_pixels_oracle(8, 60.0), 8);
        assert_eq!(padded, 8);
        for (u, v) in [(0, 0), (7, 0), (0, 7), (7, 7)] {
            assert!(!r.is_valid(u, v), "corner ({u},{v}) should be padding");
            assert_eq!(r.get(u, v, 0), 0.0);
        }
    }

    #[test]
    fn occlude_examples() {
        let m = make_map(4, 4, 2, Fill::Seeded(9)).unwrap();
        let all = occlude(&m, 0, 0, 1).unwrap();
        assert!(all.values().iter().all(|&x| x == 0.0));
        assert!(all.mask().iter().all(|&b| !b));

        let q = occlude(&m, 0, 0, 2).unwrap();
        for v in 0..4 {
            for u in 0..4 {
                let hit = u < 2 && v < 2;
                assert_eq!(q.is_valid(u, v), !hit);
                if hit {
                    assert_eq!(q.pixel(u, v), &[0.0, 0.0]);
                } else {
                    assert_eq!(q.pixel(u, v), m.pixel(u, v));
                }
            }
        }

        let big = FeatureMap::filled(16, 16, 1, 1.0).unwrap();
        let o = occlude(&big, 3, 1, 4).unwrap();
        assert_eq!(o.mask().iter().filter(|&&b| !b).count(), 16);
        assert!(!o.is_valid(4, 12) && !o.is_valid(7, 15));

        assert!(occlude(&m, 0, 0, 3).is_err());
        assert!(occlude(&m, 2, 0, 2).is_err());
        assert!(occlude(&m, 0, 0, 0).is_err());
    }

    fn square_map() -> impl Strategy<Value = FeatureMap> {
        (1usize..9, 1usize..4, any::<u64>()).prop_map(|(n, c, seed)| make_map(n, n, c, Fill::Seeded(seed)).unwrap())
    }

    proptest! {
        #[test]
        fn four_quarter_turns_are_identity(m in square_map()) {
            let mut r = m.clone();
            for _ in 0..4 {
                r = rotate_exact(&r, 1).unwrap();
            }
            prop_assert_eq!(&r, &m);
            prop_assert_eq!(rotate_exact(&rotate_exact(&m, 1).unwrap(), 3).unwrap(), m);
        }

        #[test]
        fn gap_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let m1 = make_map(5, 4, 3, Fill::Seeded(seed)).unwrap();
            let m2 = make_map(5, 4, 3, Fill::Seeded(seed ^ 0xabcd)).unwrap();
            let lhs = gap(&m1.lin_comb(a, &m2, b).unwrap());
            let (g1, g2) = (gap(&m1), gap(&m2));
            for i in 0..3 {
                let rhs = a * g1[i] + b * g2[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn occlude_leaves_other_tiles(seed in any::<u64>(), tr in 0usize..4, tc in 0usize..4) {
            let m = make_map(8, 8, 2, Fill::Seeded(seed)).unwrap();
            let o = occlude(&m, tr, tc, 4).unwrap();
            for v in 0..8 {
                for u in 0..8 {
                    if v / 2 != tr || u / 2 != tc {
                        prop_assert_eq!(o.pixel(u, v), m.pixel(u, v));
                        prop_assert!(o.is_valid(u, v));
                    }
                }
            }
        }
    }
}
