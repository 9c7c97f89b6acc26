use std::collections::{HashMap, HashSet};

use crate::dualgraph::SegmentSet;
use crate::error::{Error, Result};
use crate::swc::{VesselNode, VesselTree};

/// Keep every node that lies on a segment scoring at least `threshold`.
///
/// A kept node keeps its parent link only if the segment owning that edge
/// is kept; otherwise it becomes a root. Ids and positions are unchanged.
pub fn prune(forest: &VesselTree, segments: &SegmentSet, scores: &[f64], threshold: f64) -> Result<VesselTree> {
    if scores.len() != segments.len() {
        return Err(Error::DimensionMismatch(format!("{} scores for {} segments", scores.len(), segments.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {s}")));
    }
    let mut kept_nodes: HashSet<u64> = HashSet::new();
    // child id -> whether the segment owning the (parent, child) edge is kept
    let mut edge_kept: HashMap<u64, bool> = HashMap::new();
    for (seg, &score) in segments.segments.iter().zip(scores) {
        let keep = score >= threshold;
        if keep {
            kept_nodes.extend(seg.node_ids.iter().copied());
        }
        for &child in seg.node_ids.iter().skip(1) {
            edge_kept.insert(child, keep);
        }
    }
    let ids: HashSet<u64> = forest.nodes().iter().map(|n| n.id).collect();
    if let Some(id) = kept_nodes.iter().find(|id| !ids.contains(id)) {
        return Err(Error::Structure(format!("segment node {id} missing from forest")));
    }
    let nodes: Vec<VesselNode> = forest
        .nodes()
        .iter()
        .filter(|n| kept_nodes.contains(&n.id))
        .map(|n| {
            let parent = n.parent.filter(|p| kept_nodes.contains(p) && edge_kept.get(&n.id).copied().unwrap_or(false));
            VesselNode { parent, ..n.clone() }
        })
        .collect();
    VesselTree::from_nodes(nodes)
}
