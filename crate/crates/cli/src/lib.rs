//! Library side of the `tog` command-line tool: configuration resolution,
//! the end-to-end pipeline and PLY export.

pub mod config;
pub mod export;
pub mod pipeline;

/// Version stamped into every JSON document the tool writes.
pub const SCHEMA_VERSION: u32 = 1;
