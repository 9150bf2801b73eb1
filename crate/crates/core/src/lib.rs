//! Ring-based image serialization, selective state-space recurrences, partial
//! channel filtering and the PRISM block, with the oracles and stress
//! harnesses used to check them.
//!
//! Maps are `H × W × C`, row-major with channels innermost; `u` is the column
//! and `v` the row (growing downwards).

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod numerics;
pub mod pcf;
pub mod prism;
pub mod rings;
pub mod scans;
pub mod ssm;
pub mod synth;
pub mod verify;

pub use error::{PrismError, Result};
pub use grid::{FeatureMap, GridCenter};
pub use pcf::PcfMode;
pub use prism::{BackboneConfig, BlockConfig, PrismBlock};
pub use rings::RingPartition;
pub use scans::{ScanChoice, ScanId};
pub use ssm::SsmParams;
