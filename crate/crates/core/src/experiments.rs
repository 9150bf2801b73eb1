//! Stress and benchmark harnesses behind the CLI and the acceptance suite.
//!
//! Rotation and occlusion stress compare the ring pathway with fixed scan
//! orders. For a fixed scan the measured quantity is the written map; for the
//! ring pathway it is the ring-descriptor set. Both are reported as
//! `‖after − before‖ / ‖before‖`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param_err, Result};
use crate::grid::{occlude, rotate_resampled, FeatureMap, Resample};
use crate::linalg::Matrix;
use crate::numerics::{loglog_slope, median, paired_deviation, relative_l2};
use crate::pcf::{select_channels, PcfMode};
use crate::prism::{count_ring_branch_macs, count_scan_macs, BlockConfig, CenterPolicy, PrismBlock, RingBranchShape};
use crate::rings::DEFAULT_DELTA_R;
use crate::scans::{build_scan, run_scan_order, ScanChoice, ScanId, ScanKernel, ScanOrder, TokenSequence};
use crate::ssm::{ssm_forward, SsmParams, INIT_BOUND};
use crate::synth::{half_dead_image, smooth_image};

/// Decay bias that drives `A = exp(−softplus(·))` below `1e-17` for
/// unit-scale tokens.
pub const MEMORYLESS_DECAY_BIAS: f64 = 40.0;

/// Image and weight settings shared by the stress harnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct StressSetup {
    pub size: usize,
    pub channels: usize,
    pub token_width: usize,
    pub state_width: usize,
    pub delta_r: f64,
    pub center: CenterPolicy,
    pub pcf: PcfMode,
    /// Seed for the scan kernel and ring block weights.
    pub param_seed: u64,
    /// Replace the angular decay bias with [`MEMORYLESS_DECAY_BIAS`].
    pub memoryless: bool,
}

impl Default for StressSetup {
    fn default() -> Self {
        Self {
            size: 32,
            channels: 4,
            token_width: 4,
            state_width: 4,
            delta_r: DEFAULT_DELTA_R,
            center: CenterPolicy::Symmetric,
            pcf: PcfMode::Off,
            param_seed: 0,
            memoryless: false,
        }
    }
}

impl StressSetup {
    pub fn kernel(&self) -> ScanKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(self.param_seed);
        let proj = Matrix::uniform(self.token_width, self.channels, INIT_BOUND, &mut rng);
        let ssm = SsmParams::from_rng(self.token_width, self.state_width, &mut rng);
        let writeback = Matrix::uniform(self.channels, self.state_width, INIT_BOUND, &mut rng);
        ScanKernel { proj, ssm, writeback }
    }

    pub fn block(&self) -> Result<PrismBlock> {
        let mut cfg = BlockConfig::new(self.channels, self.token_width, self.state_width);
        cfg.delta_r = self.delta_r;
        cfg.center = self.center;
        cfg.pcf = self.pcf;
        let mut block = PrismBlock::seeded(cfg, self.param_seed)?;
        if self.memoryless {
            block.params.angular.decay_b = vec![MEMORYLESS_DECAY_BIAS; self.state_width];
        }
        Ok(block)
    }

    pub fn image(&self, seed: u64) -> Result<FeatureMap> {
        smooth_image(self.size, self.size, self.channels, seed)
    }
}

/// Ring descriptors `z_0 … z_R★` of the branch, flattened.
pub fn ring_descriptors(block: &PrismBlock, map: &FeatureMap) -> Result<Vec<f64>> {
    let part = block.partition(map);
    let sub = select_channels(map, &part.retained)?;
    Ok(block.run_branch(&sub, &part.retained)?.descriptors.values().to_vec())
}

/// Prepared pipelines for every requested method.
struct Methods {
    kernel: ScanKernel,
    block: PrismBlock,
    orders: Vec<(ScanChoice, Option<ScanOrder>)>,
}

impl Methods {
    fn new(setup: &StressSetup, scans: &[ScanChoice]) -> Result<Self> {
        let orders = scans
            .iter()
            .map(|&s| match s {
                ScanChoice::Fixed(id) => Ok((s, Some(build_scan(id, setup.size, setup.size)?))),
                ScanChoice::Ring => Ok((s, None)),
            })
            .collect::<Result<_>>()?;
        Ok(Self { kernel: setup.kernel(), block: setup.block()?, orders })
    }

    fn outputs(&self, map: &FeatureMap) -> Result<Vec<Vec<f64>>> {
        self.orders
            .iter()
            .map(|(_, order)| match order {
                Some(o) => Ok(run_scan_order(map, o, &self.kernel)?.values().to_vec()),
                None => ring_descriptors(&self.block, map),
            })
            .collect()
    }
}

fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Image seeds used by the harnesses for `count` images from `base`.
pub fn image_seeds(base: u64, count: usize) -> Vec<u64> {
    seed_list(base, count)
}

fn check_scans(scans: &[ScanChoice], seeds: &[u64]) -> Result<()> {
    if scans.is_empty() {
        return param_err("no scan methods requested");
    }
    if seeds.is_empty() {
        return param_err("no seeds requested");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub method: ScanChoice,
    pub seed: u64,
    pub deviation: f64,
}

/// Ring against one fixed scan, paired over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSummary {
    pub against: ScanId,
    pub ring_mean: f64,
    /// `mean(ring − fixed)`
    pub mean_diff: f64,
    /// Fraction of seeds where the ring deviation is strictly smaller.
    pub win_fraction: f64,
    pub cases: usize,
}

fn summarize(rows: &[DeviationRow]) -> Result<Vec<PairedSummary>> {
    let ring: Vec<f64> = rows.iter().filter(|r| r.method == ScanChoice::Ring).map(|r| r.deviation).collect();
    if ring.is_empty() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<ScanId> = Vec::new();
    for r in rows {
        if let ScanChoice::Fixed(id) = r.method {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    ids.into_iter()
        .map(|id| {
            let fixed: Vec<f64> =
                rows.iter().filter(|r| r.method == ScanChoice::Fixed(id)).map(|r| r.deviation).collect();
            let (mean_diff, win_fraction) = paired_deviation(&ring, &fixed)?;
            Ok(PairedSummary {
                against: id,
                ring_mean: ring.iter().sum::<f64>() / ring.len() as f64,
                mean_diff,
                win_fraction,
                cases: ring.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleResult {
    pub angle: f64,
    /// Seed-major, then in the requested method order.
    pub rows: Vec<DeviationRow>,
    pub summaries: Vec<PairedSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationReport {
    pub angles: Vec<AngleResult>,
}

pub fn rotation_stress(
    setup: &StressSetup,
    angles: &[f64],
    seeds: &[u64],
    scans: &[ScanChoice],
) -> Result<RotationReport> {
    if angles.is_empty() {
        return param_err("no rotation angles requested");
    }
    if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
        return param_err(format!("angle {a} is not finite"));
    }
    check_scans(scans, seeds)?;
    let methods = Methods::new(setup, scans)?;
    let per_seed: Vec<Vec<Vec<DeviationRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let img = setup.image(seed)?;
            let base = methods.outputs(&img)?;
            angles
                .iter()
                .map(|&angle| {
                    let rotated = rotate_resampled(&img, angle, Resample::Bilinear);
                    let after = methods.outputs(&rotated)?;
                    Ok(scans
                        .iter()
                        .zip(base.iter().zip(&after))
                        .map(|(&method, (b, a))| DeviationRow { method, seed, deviation: relative_l2(b, a) })
                        .collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let angles = angles
        .iter()
        .enumerate()
        .map(|(i, &angle)| {
            let rows: Vec<DeviationRow> = per_seed.iter().flat_map(|s| s[i].iter().cloned()).collect();
            let summaries = summarize(&rows)?;
            Ok(AngleResult { angle, rows, summaries })
        })
        .collect::<Result<_>>()?;
    Ok(RotationReport { angles })
}

fn fmt_angle(a: f64) -> String {
    format!("{a}")
}

impl RotationReport {
    /// `method,angle,seed,deviation,mean_diff,win_fraction`. Summary rows
    /// have seed `all`, method `ring_vs_<scan>` and the mean ring deviation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,angle,seed,deviation,mean_diff,win_fraction\n");
        for a in &self.angles {
            for r in &a.rows {
                out.push_str(&format!("{},{},{},{},,\n", r.method, fmt_angle(a.angle), r.seed, r.deviation));
            }
            for s in &a.summaries {
                out.push_str(&format!(
                    "ring_vs_{},{},all,{},{},{}\n",
                    s.against,
                    fmt_angle(a.angle),
                    s.ring_mean,
                    s.mean_diff,
                    s.win_fraction
                ));
            }
        }
        out
    }
}

/// Tile `(row, col)` dropped for `seed` at this tiling.
pub fn occlusion_tile(seed: u64, grid_div: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (grid_div as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (rng.gen_range(0..grid_div), rng.gen_range(0..grid_div))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionResult {
    pub grid_div: usize,
    pub rows: Vec<DeviationRow>,
    pub summaries: Vec<PairedSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionReport {
    pub divisions: Vec<OcclusionResult>,
}

pub fn occlusion_stress(
    setup: &StressSetup,
    grid_divs: &[usize],
    seeds: &[u64],
    scans: &[ScanChoice],
) -> Result<OcclusionReport> {
    if grid_divs.is_empty() {
        return param_err("no grid divisions requested");
    }
    for &g in grid_divs {
        if g == 0 || !setup.size.is_multiple_of(g) {
            return param_err(format!("grid_div {g} must be positive and divide the image size {}", setup.size));
        }
    }
    check_scans(scans, seeds)?;
    let methods = Methods::new(setup, scans)?;
    let per_seed: Vec<Vec<Vec<DeviationRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let img = setup.image(seed)?;
            let base = methods.outputs(&img)?;
            grid_divs
                .iter()
                .map(|&g| {
                    let (row, col) = occlusion_tile(seed, g);
                    let after = methods.outputs(&occlude(&img, row, col, g)?)?;
                    Ok(scans
                        .iter()
                        .zip(base.iter().zip(&after))
                        .map(|(&method, (b, a))| DeviationRow { method, seed, deviation: relative_l2(b, a) })
                        .collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let divisions = grid_divs
        .iter()
        .enumerate()
        .map(|(i, &grid_div)| {
            let rows: Vec<DeviationRow> = per_seed.iter().flat_map(|s| s[i].iter().cloned()).collect();
            let summaries = summarize(&rows)?;
            Ok(OcclusionResult { grid_div, rows, summaries })
        })
        .collect::<Result<_>>()?;
    Ok(OcclusionReport { divisions })
}

impl OcclusionReport {
    /// `method,grid_div,seed,deviation`; summary rows carry seed `all`,
    /// method `ring_vs_<scan>_win_fraction` and the fraction as deviation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,grid_div,seed,deviation\n");
        for d in &self.divisions {
            for r in &d.rows {
                out.push_str(&format!("{},{},{},{}\n", r.method, d.grid_div, r.seed, r.deviation));
            }
            for s in &d.summaries {
                out.push_str(&format!("ring_vs_{}_win_fraction,{},all,{}\n", s.against, d.grid_div, s.win_fraction));
            }
        }
        out
    }

    pub fn deviations(&self, grid_div: usize, method: ScanChoice) -> Vec<f64> {
        self.divisions
            .iter()
            .filter(|d| d.grid_div == grid_div)
            .flat_map(|d| d.rows.iter().filter(|r| r.method == method).map(|r| r.deviation))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSetup {
    pub size: usize,
    pub channels: usize,
    pub token_width: usize,
    pub state_width: usize,
    pub delta_r: f64,
    pub center: CenterPolicy,
    pub reps: usize,
    /// Zero the upper half of the channels.
    pub half_dead: bool,
    pub param_seed: u64,
}

impl Default for BenchSetup {
    fn default() -> Self {
        Self {
            size: 32,
            channels: 64,
            token_width: 4,
            state_width: 4,
            delta_r: DEFAULT_DELTA_R,
            center: CenterPolicy::Symmetric,
            reps: 5,
            half_dead: false,
            param_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scan_id: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub tokens: usize,
    pub macs: u64,
    pub wall_ns: u128,
}

/// One benchmarked method: a fixed order, or the ring branch under a
/// filtering mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    Fixed(ScanId),
    Ring(PcfMode),
}

impl BenchMethod {
    pub fn label(&self) -> String {
        match self {
            BenchMethod::Fixed(id) => id.to_string(),
            BenchMethod::Ring(PcfMode::Off) => "ring".into(),
            BenchMethod::Ring(mode) => format!("ring+pcf_{mode}"),
        }
    }
}

fn median_ns(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<u128> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_nanos() as f64);
    }
    Ok(median(&mut times) as u128)
}

/// Rows in seed-major order, methods in the given order. `reps ≥ 5`.
pub fn scan_bench(setup: &BenchSetup, methods: &[BenchMethod], seeds: &[u64]) -> Result<Vec<BenchRow>> {
    if setup.size == 0 || setup.channels == 0 || setup.token_width == 0 || setup.state_width == 0 {
        return param_err("benchmark sizes must be positive");
    }
    if setup.reps < 5 {
        return param_err(format!("at least 5 repetitions are required, got {}", setup.reps));
    }
    if methods.is_empty() || seeds.is_empty() {
        return param_err("no methods or seeds requested");
    }
    let (n, c, m, d) = (setup.size, setup.channels, setup.token_width, setup.state_width);
    let stress = StressSetup {
        size: n,
        channels: c,
        token_width: m,
        state_width: d,
        delta_r: setup.delta_r,
        center: setup.center,
        pcf: PcfMode::Off,
        param_seed: setup.param_seed,
        memoryless: false,
    };
    let kernel = stress.kernel();
    let mut rows = Vec::new();
    for &seed in seeds {
        let img = if setup.half_dead { half_dead_image(n, n, c, seed)? } else { smooth_image(n, n, c, seed)? };
        for method in methods {
            let (tokens, macs, wall_ns) = match *method {
                BenchMethod::Fixed(id) => {
                    let order = build_scan(id, n, n)?;
                    let macs = count_scan_macs(&order, c, m, d);
                    let ns = median_ns(setup.reps, || run_scan_order(&img, &order, &kernel).map(drop))?;
                    (n * n * order.paths().len(), macs, ns)
                }
                BenchMethod::Ring(mode) => {
                    let block = StressSetup { pcf: mode, ..stress.clone() }.block()?;
                    let rings = block.rings_for(n, n)?;
                    let part = block.partition(&img);
                    let shape =
                        RingBranchShape { pixels: n * n, rings: rings.ring_count(), retained: part.retained.len() };
                    let macs = count_ring_branch_macs(block.config(), shape);
                    let ns = median_ns(setup.reps, || {
                        let part = block.partition(&img);
                        let sub = select_channels(&img, &part.retained)?;
                        block.run_branch(&sub, &part.retained).map(drop)
                    })?;
                    (n * n, macs, ns)
                }
            };
            rows.push(BenchRow { scan_id: method.label(), height: n, width: n, channels: c, tokens, macs, wall_ns });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("scan_id,H,W,C,T_tokens,macs,wall_ns_median_of_k\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scan_id, r.height, r.width, r.channels, r.tokens, r.macs, r.wall_ns
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub sizes: Vec<f64>,
    /// Median seconds per call.
    pub seconds: Vec<f64>,
    pub slope: f64,
}

/// Median over `reps` of the per-call time, where each repetition runs `f`
/// enough times to cover roughly `budget` units of work of size `size`.
fn per_call_seconds(reps: usize, size: usize, budget: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let inner = (budget / size).max(1);
    f()?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        for _ in 0..inner {
            f()?;
        }
        times.push(t.elapsed().as_secs_f64() / inner as f64);
    }
    Ok(median(&mut times))
}

/// Wall time of `ssm_forward` against sequence length.
pub fn ssm_scaling(lengths: &[usize], reps: usize, seed: u64) -> Result<ScalingFit> {
    let (m, d) = (4, 4);
    let p = SsmParams::seeded(m, d, seed);
    let budget = lengths.iter().copied().max().unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let mut seconds = Vec::with_capacity(lengths.len());
    for &t in lengths {
        let tokens: Vec<f64> = (0..t * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = TokenSequence::from_tokens(m, tokens)?;
        seconds.push(per_call_seconds(reps, t, budget, || ssm_forward(&seq, &p).map(drop))?);
    }
    let sizes: Vec<f64> = lengths.iter().map(|&t| t as f64).collect();
    let slope = loglog_slope(&sizes, &seconds);
    Ok(ScalingFit { sizes, seconds, slope })
}

/// Wall time of a full block forward against `N = side²`.
pub fn prism_scaling(sides: &[usize], channels: usize, reps: usize, seed: u64) -> Result<ScalingFit> {
    let block = PrismBlock::seeded(BlockConfig::new(channels, 4, 4), seed)?;
    let budget = sides.iter().map(|s| s * s).max().unwrap_or(1);
    let mut seconds = Vec::with_capacity(sides.len());
    for &side in sides {
        let img = smooth_image(side, side, channels, seed)?;
        seconds.push(per_call_seconds(reps, side * side, budget, || block.forward(&img).map(drop))?);
    }
    let sizes: Vec<f64> = sides.iter().map(|&s| (s * s) as f64).collect();
    let slope = loglog_slope(&sizes, &seconds);
    Ok(ScalingFit { sizes, seconds, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(n: u8) -> ScanChoice {
        ScanChoice::Fixed(ScanId::new(n).unwrap())
    }

    #[test]
    fn zero_angle_gives_zero_deviation() {
        let setup = StressSetup { size: 12, ..Default::default() };
        let rep = rotation_stress(&setup, &[0.0], &[1, 2], &[s(1), s(19), ScanChoice::Ring]).unwrap();
        assert!(rep.angles[0].rows.iter().all(|r| r.deviation == 0.0));
        assert_eq!(rep.angles[0].summaries.len(), 2);
    }

    #[test]
    fn memoryless_ring_is_exact_at_quarter_turns() {
        let setup = StressSetup { size: 12, memoryless: true, ..Default::default() };
        let rep = rotation_stress(&setup, &[90.0, 180.0, 270.0], &[3, 4], &[s(1), ScanChoice::Ring]).unwrap();
        for a in &rep.angles {
            for r in &a.rows {
                match r.method {
                    ScanChoice::Ring => assert!(r.deviation <= 1e-10, "{}", r.deviation),
                    _ => assert!(r.deviation > 0.0),
                }
            }
        }
    }

    #[test]
    fn rotation_csv_shape() {
        let setup = StressSetup { size: 8, ..Default::default() };
        let rep = rotation_stress(&setup, &[0.0, 30.0], &[0, 1, 2], &[s(1), ScanChoice::Ring]).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,angle,seed,deviation,mean_diff,win_fraction");
        // 2 angles × (3 seeds × 2 methods + 1 summary)
        assert_eq!(lines.len(), 1 + 2 * 7);
        assert!(lines.iter().any(|l| l.starts_with("ring_vs_s1,30,all,")));
        assert!(rotation_stress(&setup, &[], &[0], &[s(1)]).is_err());
    }

    #[test]
    fn occlusion_rows_and_validation() {
        let setup = StressSetup { size: 16, ..Default::default() };
        let rep = occlusion_stress(&setup, &[2, 4], &[5, 6], &[s(1), ScanChoice::Ring]).unwrap();
        assert_eq!(rep.deviations(4, ScanChoice::Ring).len(), 2);
        assert!(rep.to_csv().starts_with("method,grid_div,seed,deviation\n"));
        assert!(occlusion_stress(&setup, &[3], &[0], &[s(1)]).is_err());
        assert!(occlusion_stress(&setup, &[0], &[0], &[s(1)]).is_err());
        // whole image dropped: every pixel changes
        let whole = occlusion_stress(&setup, &[1], &[0], &[s(1), ScanChoice::Ring]).unwrap();
        assert!(whole.divisions[0].rows.iter().all(|r| r.deviation > 0.0));
    }

    #[test]
    fn tiles_are_seeded_and_in_range() {
        for seed in 0..50 {
            let (r, c) = occlusion_tile(seed, 4);
            assert!(r < 4 && c < 4);
            assert_eq!(occlusion_tile(seed, 4), (r, c));
        }
    }

    #[test]
    fn bench_rows_and_pcf_savings() {
        let setup = BenchSetup { size: 16, channels: 8, half_dead: true, ..Default::default() };
        let methods = [
            BenchMethod::Fixed(ScanId::new(1).unwrap()),
            BenchMethod::Ring(PcfMode::Mean),
            BenchMethod::Ring(PcfMode::Off),
        ];
        let rows = scan_bench(&setup, &methods, &[0, 1, 2]).unwrap();
        assert_eq!(rows.len(), 9);
        for chunk in rows.chunks(3) {
            assert!(chunk[1].macs < chunk[2].macs);
            assert_eq!(chunk[0].tokens, 256);
        }
        assert!(bench_csv(&rows).starts_with("scan_id,H,W,C,T_tokens,macs,wall_ns_median_of_k\n"));
        assert!(scan_bench(&BenchSetup { size: 0, ..setup.clone() }, &methods, &[0]).is_err());
        assert!(scan_bench(&BenchSetup { reps: 4, ..setup }, &methods, &[0]).is_err());
    }
}
