//! Reconstruction of curvilinear tree morphology from centerline heatmaps,
//! with graph-attention pruning of false-positive branches.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dualgraph;
pub mod error;
pub mod gat;
pub mod geom;
pub mod heatmap;
pub mod pipeline;
pub mod pruneval;
pub mod swc;
pub mod synth;
pub mod tracer;
pub mod volume;

pub use error::{Error, Result};
