//! Branch segmentation, dual graph construction, node features and soft
//! targets.

mod features;
mod graph;
mod segment;
mod targets;

pub use features::{
    aggregate_features, build_feature_volumes, gaussian_kernel, gaussian_smooth, gradient_magnitude, neighborhood_mean,
    FEATURE_CHANNELS,
};
pub use graph::{build_dual, DualGraph, DualNode};
pub use segment::{segment_branches, Segment, SegmentSet};
pub use targets::label_targets;
