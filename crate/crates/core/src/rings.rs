//! Concentric-ring partition and alternating closed-loop ordering.
//!
//! A pixel's ring is `floor(‖(u − c_x, v − c_y)‖₂ / Δr)`. Inside a ring the
//! pixels are sorted by `θ = atan2(v − c_y, u − c_x)` ascending on `[−π, π)`,
//! ties broken by radius then `(v, u)`; that order is the counterclockwise loop
//! (orientation measured in the `(u, v)` frame) and odd rings use its reversal.
//!
//! Angles are compared exactly with half-plane tests and cross products rather
//! than through `atan2`, so a quarter turn of a square grid about its symmetric
//! center maps every loop onto a cyclic shift of itself without rounding
//! surprises.

use std::cmp::Ordering;

use crate::error::{param_err, shape_err, Result};
use crate::grid::{rotate_source, FeatureMap, GridCenter};
use crate::linalg::Matrix;
use crate::scans::{Pixel, TokenSequence};

pub const DEFAULT_DELTA_R: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

impl Direction {
    pub fn for_ring(r: usize) -> Self {
        if r % 2 == 1 {
            Direction::Clockwise
        } else {
            Direction::Counterclockwise
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingLoop {
    pub ring: usize,
    pub pixels: Vec<Pixel>,
    pub direction: Direction,
}

impl RingLoop {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingPartition {
    height: usize,
    width: usize,
    center: GridCenter,
    delta_r: f64,
    ring_index: Vec<usize>,
    rings: Vec<RingLoop>,
}

/// `0` for angles in `[−π, 0)`, `1` for `[0, π)`.
fn half(dx: f64, dy: f64) -> u8 {
    if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
        0
    } else {
        1
    }
}

/// Exact comparison of `atan2(dy, dx)` mapped to `[−π, π)`. The zero vector
/// sorts as angle 0.
fn angle_cmp(a: (f64, f64), b: (f64, f64)) -> Ordering {
    let zero_a = a == (0.0, 0.0);
    let zero_b = b == (0.0, 0.0);
    match (zero_a, zero_b) {
        (true, true) => return Ordering::Equal,
        (true, false) => return angle_cmp((1.0, 0.0), b),
        (false, true) => return angle_cmp(a, (1.0, 0.0)),
        _ => {}
    }
    half(a.0, a.1).cmp(&half(b.0, b.1)).then_with(|| {
        let cross = a.0 * b.1 - a.1 * b.0;
        0.0.partial_cmp(&cross).unwrap_or(Ordering::Equal)
    })
}

pub fn build_rings(height: usize, width: usize, center: GridCenter, delta_r: f64) -> Result<RingPartition> {
    if delta_r <= 0.0 || !delta_r.is_finite() {
        return param_err(format!("ring width must be positive and finite, got {delta_r}"));
    }
    if height == 0 || width == 0 {
        return shape_err(format!("ring partition of empty grid {height}x{width}"));
    }
    if !center.cx.is_finite() || !center.cy.is_finite() {
        return param_err("ring center must be finite");
    }
    let mut ring_index = Vec::with_capacity(height * width);
    let mut radius = Vec::with_capacity(height * width);
    for v in 0..height {
        for u in 0..width {
            let (dx, dy) = (u as f64 - center.cx, v as f64 - center.cy);
            let r = (dx * dx + dy * dy).sqrt();
            let idx = (r / delta_r).floor();
            if idx > (u32::MAX as f64) {
                return param_err(format!("ring index {idx} too large; increase delta_r"));
            }
            ring_index.push(idx as usize);
            radius.push(r);
        }
    }
    let max_ring = *ring_index.iter().max().expect("grid is nonempty");
    let mut members: Vec<Vec<Pixel>> = vec![Vec::new(); max_ring + 1];
    for v in 0..height {
        for u in 0..width {
            members[ring_index[v * width + u]].push((u, v));
        }
    }
    let rings = members
        .into_iter()
        .enumerate()
        .map(|(r, mut pixels)| {
            pixels.sort_by(|&(ua, va), &(ub, vb)| {
                let a = (ua as f64 - center.cx, va as f64 - center.cy);
                let b = (ub as f64 - center.cx, vb as f64 - center.cy);
                angle_cmp(a, b)
                    .then_with(|| radius[va * width + ua].total_cmp(&radius[vb * width + ub]))
                    .then_with(|| (va, ua).cmp(&(vb, ub)))
            });
            let direction = Direction::for_ring(r);
            if direction == Direction::Clockwise {
                pixels.reverse();
            }
            RingLoop { ring: r, pixels, direction }
        })
        .collect();
    Ok(RingPartition { height, width, center, delta_r, ring_index, rings })
}

impl RingPartition {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn center(&self) -> GridCenter {
        self.center
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    /// `R★ + 1`, counting empty rings.
    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn max_ring(&self) -> usize {
        self.rings.len() - 1
    }

    pub fn rings(&self) -> &[RingLoop] {
        &self.rings
    }

    pub fn ring(&self, r: usize) -> Option<&RingLoop> {
        self.rings.get(r)
    }

    pub fn ring_of(&self, u: usize, v: usize) -> usize {
        self.ring_index[v * self.width + u]
    }

    pub fn ring_index(&self) -> &[usize] {
        &self.ring_index
    }

    /// Shoelace signed area of ring `r`'s loop around the center, in the
    /// `(u, v)` frame: positive for counterclockwise.
    pub fn signed_area(&self, r: usize) -> f64 {
        let px = &self.rings[r].pixels;
        let n = px.len();
        (0..n)
            .map(|i| {
                let (ua, va) = px[i];
                let (ub, vb) = px[(i + 1) % n];
                let (ax, ay) = (ua as f64 - self.center.cx, va as f64 - self.center.cy);
                let (bx, by) = (ub as f64 - self.center.cx, vb as f64 - self.center.cy);
                ax * by - ay * bx
            })
            .sum::<f64>()
            / 2.0
    }
}

/// `x_{r,k} = P · X[σ_r(k)]` in loop order, masks copied from the pixels.
pub fn ring_tokens(map: &FeatureMap, part: &RingPartition, r: usize, proj: &Matrix) -> Result<TokenSequence> {
    let Some(ring) = part.ring(r) else {
        return param_err(format!("ring {r} beyond R* = {}", part.max_ring()));
    };
    if (map.height(), map.width()) != (part.height, part.width) {
        return shape_err("ring partition and map sizes differ");
    }
    if proj.cols() != map.channels() || proj.rows() == 0 {
        return shape_err(format!("projector {}x{} vs {} channels", proj.rows(), proj.cols(), map.channels()));
    }
    let m = proj.rows();
    let mut tokens = vec![0.0; ring.len() * m];
    let mut mask = Vec::with_capacity(ring.len());
    for (k, &(u, v)) in ring.pixels.iter().enumerate() {
        proj.matvec_into(map.pixel(u, v), &mut tokens[k * m..(k + 1) * m]);
        mask.push(map.is_valid(u, v));
    }
    TokenSequence::new(m, tokens, mask)
}

/// Shift `s` such that, after rotating the grid content by `quarter_turns`
/// counterclockwise quarter turns, ring `r`'s token sequence is the original
/// one rolled forward by `s` (`rotated[k] = original[(k − s) mod L]`).
///
/// `Ok(None)` when no pure cyclic shift relates the two loops, which can only
/// happen for centers other than the symmetric one.
pub fn cyclic_shift_of(part: &RingPartition, quarter_turns: i64, r: usize) -> Result<Option<usize>> {
    if part.height != part.width {
        return shape_err("cyclic shifts are defined for square grids only");
    }
    let Some(ring) = part.ring(r) else {
        return param_err(format!("ring {r} beyond R* = {}", part.max_ring()));
    };
    let l = ring.len();
    if l == 0 {
        return Ok(Some(0));
    }
    let n = part.width;
    let turns = quarter_turns.rem_euclid(4) as u8;
    let mut position = vec![usize::MAX; n * n];
    for (k, &(u, v)) in ring.pixels.iter().enumerate() {
        position[v * n + u] = k;
    }
    let source_pos = |k: usize| {
        let (u, v) = ring.pixels[k];
        let (su, sv) = rotate_source(u, v, n, turns);
        position[sv * n + su]
    };
    let j0 = source_pos(0);
    if j0 == usize::MAX {
        return Ok(None);
    }
    let s = (l - j0) % l;
    for k in 1..l {
        if source_pos(k) != (k + l - s) % l {
            return Ok(None);
        }
    }
    Ok(Some(s))
}
