//! File formats, OSM ingestion, evaluation, rendering and the command line
//! for the `lanetopo-core` algorithms.

// Negated comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod format;
pub mod osm;
pub mod render;

pub use config::Config;
pub use error::{Error, Result};
pub use lanetopo_core as core;
