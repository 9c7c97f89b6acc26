//! Initial over-complete tracing of a centerline heatmap.
//!
//! The heatmap is binarized and dilated, split into 26-connected components,
//! and each component is traced separately by geodesic back-tracking on a
//! fast-marching time field.

mod fmm;
mod morph;
mod trace;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swc::{VesselNode, VesselTree};
use crate::volume::ScalarVolume;

pub use fmm::{fast_march, speed, TimeField, SPEED_EPS};
pub use morph::{ball_offsets, binarize_dilate, connected_components, neighbors26, Component};
pub use trace::{trace_component, ComponentTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracerParams {
    pub binarize_threshold: f64,
    /// Dilation ball radius in voxels.
    pub dilation_radius: f64,
    pub min_component_voxels: usize,
    pub coverage_stop: f64,
    /// Branches shorter than this (mm) are discarded.
    pub min_branch_len: f64,
    /// Node spacing along traced paths, in voxels.
    pub step_size: f64,
}

impl Default for TracerParams {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.3,
            dilation_radius: 1.0,
            min_component_voxels: 27,
            coverage_stop: 0.98,
            min_branch_len: 2.0,
            step_size: 0.5,
        }
    }
}

impl TracerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return bad(format!("binarize_threshold must lie in (0,1), got {}", self.binarize_threshold));
        }
        if !(self.coverage_stop > 0.0 && self.coverage_stop <= 1.0) {
            return bad(format!("coverage_stop must lie in (0,1], got {}", self.coverage_stop));
        }
        if !(self.dilation_radius >= 0.0) || !self.dilation_radius.is_finite() {
            return bad("dilation_radius must be >= 0".into());
        }
        if !(self.min_branch_len > 0.0) {
            return bad("min_branch_len must be > 0".into());
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be > 0".into());
        }
        Ok(())
    }
}

/// Summary of a whole-volume tracing run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub components: usize,
    pub component_sizes: Vec<usize>,
    pub coverage: Vec<f64>,
    pub abandoned_branches: usize,
    pub empty: bool,
}

/// Trace every component of the heatmap and merge the per-component trees
/// into one forest with ids renumbered from 1 in component order.
pub fn trace_all(heatmap: &ScalarVolume, params: &TracerParams) -> Result<(VesselTree, TraceReport)> {
    params.validate()?;
    let mask = binarize_dilate(heatmap, params.binarize_threshold, params.dilation_radius);
    let comps = connected_components(&mask, params.min_component_voxels);
    let traces: Vec<ComponentTrace> =
        comps.par_iter().map(|c| trace_component(heatmap, c, params)).collect::<Result<_>>()?;

    let mut nodes = Vec::new();
    let mut report = TraceReport {
        components: comps.len(),
        component_sizes: comps.iter().map(|c| c.len()).collect(),
        empty: comps.is_empty(),
        ..Default::default()
    };
    for tr in traces {
        let base = nodes.len() as u64;
        for (k, n) in tr.nodes.iter().enumerate() {
            nodes.push(VesselNode::new(
                base + k as u64 + 1,
                crate::synth::SWC_KIND,
                n.pos,
                n.radius,
                n.parent.map(|p| base + p as u64 + 1),
            ));
        }
        report.coverage.push(tr.coverage);
        report.abandoned_branches += tr.abandoned;
    }
    Ok((VesselTree::from_nodes(nodes)?, report))
}
