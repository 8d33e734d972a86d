//! Lane-graph topology estimation primitives.
//!
//! The crate is `no_std` (with `alloc`) and free of IO. It covers the lane
//! model and its Chamfer distance, SD-map projection and reference-point
//! sampling, lane denoising with the hybrid query bundle and its attention
//! mask, topology scoring and fusion, Hungarian assignment and losses, BEV
//! warping and ConvGRU fusion, detection/topology metrics with OLUS, and a
//! synthetic scene generator.
//!
//! File formats, OSM parsing and the command line live in the `lanetopo`
//! companion crate.

#![no_std]
// Negated comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assign;
pub mod denoise;
pub mod embed;
pub mod error;
pub mod lane;
pub mod matrix;
pub mod metrics;
pub mod sdmap;
pub mod synth;
pub mod temporal;
pub mod topology;

pub use error::{Error, Result};
pub use lane::{
    BevExtent, BoundaryType, Frame, LaneGraph, LaneSegment, Point3, Polyline, Pose2, Scene, SdClass, SdElement, SdMap,
    SegClass, TeAssociation, TeClass, TrafficElement, ZRange,
};
pub use matrix::Matrix;
