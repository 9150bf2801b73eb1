//! Partial channel filtering: hard routing of channels by pooled salience.
//!
//! Salience is `μ_i = GAP(channel i)`, the threshold is `μ = mean |μ_i|` and a
//! channel is retained when `|μ_i| ≥ μ`. The channel with the largest `|μ_i|`
//! always qualifies, so the retained set is never empty.

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, PrismError, Result};
use crate::grid::{gap, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcfMode {
    #[default]
    Mean,
    /// Threshold at the median of `|μ_i|`; sorts, so `O(D_c log D_c)`.
    Median,
    /// Every channel retained.
    Off,
}

impl fmt::Display for PcfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcfMode::Mean => "mean",
            PcfMode::Median => "median",
            PcfMode::Off => "off",
        })
    }
}

impl FromStr for PcfMode {
    type Err = PrismError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(PcfMode::Mean),
            "median" => Ok(PcfMode::Median),
            "off" => Ok(PcfMode::Off),
            other => Err(PrismError::Format(format!("unknown pcf mode {other:?} (mean|median|off)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcfPartition {
    pub salience: Vec<f64>,
    pub threshold: f64,
    pub retained: Vec<usize>,
    pub bypassed: Vec<usize>,
}

impl PcfPartition {
    /// All channels retained; used when filtering is off.
    pub fn keep_all(salience: Vec<f64>) -> Self {
        let threshold = mean_abs(&salience);
        let retained = (0..salience.len()).collect();
        Self { salience, threshold, retained, bypassed: Vec::new() }
    }

    pub fn channels(&self) -> usize {
        self.salience.len()
    }

    pub fn retains_all(&self) -> bool {
        self.bypassed.is_empty()
    }

    fn split(salience: Vec<f64>, threshold: f64) -> Self {
        let (mut retained, mut bypassed) = (Vec::new(), Vec::new());
        for (i, s) in salience.iter().enumerate() {
            if s.abs() >= threshold {
                retained.push(i);
            } else {
                bypassed.push(i);
            }
        }
        Self { salience, threshold, retained, bypassed }
    }
}

pub fn mean_abs(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
}

/// Mean-threshold partition.
pub fn pcf_partition(map: &FeatureMap) -> PcfPartition {
    pcf_partition_with(map, PcfMode::Mean)
}

pub fn pcf_partition_with(map: &FeatureMap, mode: PcfMode) -> PcfPartition {
    partition_salience(gap(map), mode)
}

pub fn partition_salience(salience: Vec<f64>, mode: PcfMode) -> PcfPartition {
    match mode {
        PcfMode::Off => PcfPartition::keep_all(salience),
        PcfMode::Mean => {
            let mu = mean_abs(&salience);
            PcfPartition::split(salience, mu)
        }
        PcfMode::Median => {
            let mut mags: Vec<f64> = salience.iter().map(|v| v.abs()).collect();
            mags.sort_by(f64::total_cmp);
            let mu = mags[(mags.len() - 1) / 2];
            PcfPartition::split(salience, mu)
        }
    }
}

fn check_channels(map: &FeatureMap, part: &PcfPartition) -> Result<()> {
    if map.channels() != part.channels() {
        return shape_err(format!("partition over {} channels, map has {}", part.channels(), map.channels()));
    }
    Ok(())
}

/// Channel subset, in ascending channel order.
pub fn select_channels(map: &FeatureMap, channels: &[usize]) -> Result<FeatureMap> {
    if channels.is_empty() {
        return shape_err("cannot gather zero channels");
    }
    if let Some(&bad) = channels.iter().find(|&&c| c >= map.channels()) {
        return shape_err(format!("channel {bad} out of range for {} channels", map.channels()));
    }
    let mut values = Vec::with_capacity(map.pixel_count() * channels.len());
    for px in map.values().chunks_exact(map.channels()) {
        values.extend(channels.iter().map(|&c| px[c]));
    }
    FeatureMap::from_values(map.height(), map.width(), channels.len(), values)?.with_mask(map.mask().to_vec())
}

pub fn gather(map: &FeatureMap, part: &PcfPartition) -> Result<FeatureMap> {
    check_channels(map, part)?;
    select_channels(map, &part.retained)
}

/// Retained channels from `branch_out` (by rank), bypassed channels from
/// `original`. The mask comes from `original`.
pub fn merge(branch_out: &FeatureMap, original: &FeatureMap, part: &PcfPartition) -> Result<FeatureMap> {
    check_channels(original, part)?;
    if branch_out.channels() != part.retained.len() {
        return shape_err(format!(
            "branch produced {} channels for {} retained",
            branch_out.channels(),
            part.retained.len()
        ));
    }
    if (branch_out.height(), branch_out.width()) != (original.height(), original.width()) {
        return shape_err("branch output and original differ spatially");
    }
    let mut out = original.clone();
    let c = original.channels();
    let cr = branch_out.channels();
    for (dst, src) in out.values_mut().chunks_exact_mut(c).zip(branch_out.values().chunks_exact(cr)) {
        for (rank, &ch) in part.retained.iter().enumerate() {
            dst[ch] = src[rank];
        }
    }
    Ok(out)
}

/// A branch whose first operation is a channel-linear projection. `channels`
/// names which columns of its full-width input weights the input map carries,
/// and which rows of its full-width output weights it should produce.
pub trait ChannelBranch {
    fn run(&self, input: &FeatureMap, channels: &[usize]) -> Result<FeatureMap>;

    /// Full-width channel count the branch weights are sized for.
    fn width(&self) -> usize;
}

/// Runs the branch at full width with bypassed channels zeroed, then merges.
/// Must agree with [`gathered_path`].
pub fn masked_equivalent(map: &FeatureMap, part: &PcfPartition, branch: &dyn ChannelBranch) -> Result<FeatureMap> {
    check_channels(map, part)?;
    let mut zeroed = map.clone();
    let c = map.channels();
    for px in zeroed.values_mut().chunks_exact_mut(c) {
        for &b in &part.bypassed {
            px[b] = 0.0;
        }
    }
    let all: Vec<usize> = (0..c).collect();
    let full = branch.run(&zeroed, &all)?;
    merge(&select_channels(&full, &part.retained)?, map, part)
}

/// gather → branch on the retained channels → merge.
pub fn gathered_path(map: &FeatureMap, part: &PcfPartition, branch: &dyn ChannelBranch) -> Result<FeatureMap> {
    let sub = gather(map, part)?;
    let out = branch.run(&sub, &part.retained)?;
    merge(&out, map, part)
}

/// Pointwise `C × C` linear map used as a simple test branch.
#[derive(Debug, Clone)]
pub struct LinearBranch {
    pub weights: crate::linalg::Matrix,
}

impl ChannelBranch for LinearBranch {
    fn run(&self, input: &FeatureMap, channels: &[usize]) -> Result<FeatureMap> {
        let w = self.weights.select_rows(channels).select_columns(channels);
        let k = channels.len();
        if input.channels() != k {
            return shape_err("input channel count does not match the channel list");
        }
        let mut out = input.clone();
        for (dst, src) in out.values_mut().chunks_exact_mut(k).zip(input.values().chunks_exact(k)) {
            w.matvec_into(src, dst);
        }
        Ok(out)
    }

    fn width(&self) -> usize {
        self.weights.rows()
    }
}
