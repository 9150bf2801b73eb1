//! The backbone config file and small value parsers shared with the CLI.
//!
//! ```text
//! # toy backbone
//! stages.blocks   = 1,1,1,1
//! stages.channels = 8,16,32,64
//! patchify = 4
//! delta_r  = 1.0
//! pcf      = mean
//! seed     = 42
//! ffn      = off
//! ```
//!
//! One `key = value` per line, `#` starts a comment. Unknown and repeated keys
//! are errors; missing keys keep their [`BackboneConfig::default`] values.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use crate::error::{PrismError, Result};
use crate::grid::GridCenter;
use crate::prism::{BackboneConfig, STAGES};

fn format_err<T>(line: usize, msg: impl std::fmt::Display) -> Result<T> {
    Err(PrismError::Format(format!("line {line}: {msg}")))
}

fn scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().or_else(|_| format_err(line, format!("bad value {value:?} for {key}")))
}

fn stage_list(line: usize, key: &str, value: &str) -> Result<[usize; STAGES]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != STAGES {
        return format_err(line, format!("{key} needs {STAGES} comma-separated values, got {}", parts.len()));
    }
    let mut out = [0; STAGES];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = scalar(line, key, p)?;
    }
    Ok(out)
}

fn switch(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => format_err(line, format!("{key} must be on or off, got {value:?}")),
    }
}

pub fn parse_config(text: &str) -> Result<BackboneConfig> {
    let mut cfg = BackboneConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return format_err(line, format!("expected key = value, got {content:?}"));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return format_err(line, format!("duplicate key {key}"));
        }
        match key {
            "stages.blocks" => cfg.blocks = stage_list(line, key, value)?,
            "stages.channels" => cfg.channels = stage_list(line, key, value)?,
            "in_channels" => cfg.in_channels = scalar(line, key, value)?,
            "patchify" => cfg.patchify = scalar(line, key, value)?,
            "downsample" => cfg.downsample = scalar(line, key, value)?,
            "classes" => cfg.classes = scalar(line, key, value)?,
            "token_width" => cfg.token_width = scalar(line, key, value)?,
            "state_width" => cfg.state_width = scalar(line, key, value)?,
            "delta_r" => cfg.delta_r = scalar(line, key, value)?,
            "pcf" => cfg.pcf = value.parse().or_else(|e| format_err(line, e))?,
            "seed" => cfg.seed = scalar(line, key, value)?,
            "ffn" => cfg.ffn = switch(line, key, value)?,
            _ => return format_err(line, format!("unknown key {key}")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<BackboneConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Canonical text form; `parse_config(&render_config(c)) == c`.
pub fn render_config(cfg: &BackboneConfig) -> String {
    let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    format!(
        "stages.blocks = {}\nstages.channels = {}\nin_channels = {}\npatchify = {}\ndownsample = {}\n\
         classes = {}\ntoken_width = {}\nstate_width = {}\ndelta_r = {:?}\npcf = {}\nseed = {}\nffn = {}\n",
        list(&cfg.blocks),
        list(&cfg.channels),
        cfg.in_channels,
        cfg.patchify,
        cfg.downsample,
        cfg.classes,
        cfg.token_width,
        cfg.state_width,
        cfg.delta_r,
        cfg.pcf,
        cfg.seed,
        if cfg.ffn { "on" } else { "off" },
    )
}

/// `"cx,cy"` with finite coordinates.
pub fn parse_center(text: &str) -> Result<GridCenter> {
    let bad = || PrismError::Format(format!("center must be cx,cy; got {text:?}"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    let cx: f64 = x.trim().parse().map_err(|_| bad())?;
    let cy: f64 = y.trim().parse().map_err(|_| bad())?;
    if !cx.is_finite() || !cy.is_finite() {
        return Err(bad());
    }
    Ok(GridCenter::new(cx, cy))
}
