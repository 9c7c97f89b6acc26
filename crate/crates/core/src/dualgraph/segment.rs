use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::swc::VesselTree;

/// A piece of a traced branch, at most `sampling_length` long unless a
/// single edge is already longer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    /// Tree node ids from the proximal to the distal end.
    pub node_ids: Vec<u64>,
    pub points: Vec<Vec3>,
    pub length: f64,
}

impl Segment {
    pub fn endpoints(&self) -> (u64, u64) {
        (self.node_ids[0], *self.node_ids.last().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    pub sampling_length: f64,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

const CUT_TOLERANCE: f64 = 1e-9;

/// Split a forest into branch paths between critical nodes (roots,
/// bifurcations, tips) and cut each path greedily from its proximal end
/// into pieces no longer than `sampling_length`. Cut and junction nodes are
/// shared by the adjacent segments.
pub fn segment_branches(forest: &VesselTree, sampling_length: f64) -> Result<SegmentSet> {
    if !(sampling_length > 0.0) || !sampling_length.is_finite() {
        return Err(Error::InvalidParam(format!("sampling_length must be positive, got {sampling_length}")));
    }
    let topo = forest.topology();
    let nodes = forest.nodes();
    let critical: Vec<bool> =
        (0..nodes.len()).map(|i| topo.parent[i].is_none() || topo.children[i].len() != 1).collect();

    let mut segments = Vec::new();
    let push = |path: &[usize], segments: &mut Vec<Segment>| {
        let points: Vec<Vec3> = path.iter().map(|&i| nodes[i].pos).collect();
        let length = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        segments.push(Segment {
            id: segments.len(),
            node_ids: path.iter().map(|&i| nodes[i].id).collect(),
            points,
            length,
        });
    };

    for start in 0..nodes.len() {
        if !critical[start] {
            continue;
        }
        if topo.parent[start].is_none() && topo.children[start].is_empty() {
            push(&[start], &mut segments);
            continue;
        }
        for &first in &topo.children[start] {
            let mut path = vec![start, first];
            let mut cur = first;
            while !critical[cur] {
                cur = topo.children[cur][0];
                path.push(cur);
            }
            let mut s = 0;
            let mut acc = 0.0;
            for i in 1..path.len() {
                let e = (nodes[path[i]].pos - nodes[path[i - 1]].pos).norm();
                if acc + e > sampling_length + CUT_TOLERANCE && i - 1 > s {
                    push(&path[s..i], &mut segments);
                    s = i - 1;
                    acc = 0.0;
                }
                acc += e;
            }
            push(&path[s..], &mut segments);
        }
    }
    Ok(SegmentSet { segments, sampling_length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swc::VesselNode;

    fn chain(n: usize) -> VesselTree {
        VesselTree::from_nodes(
            (0..n)
                .map(|i| {
                    VesselNode::new(i as u64 + 1, 3, Vec3::new(i as f64, 0.0, 0.0), 1.0, (i > 0).then_some(i as u64))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn eleven_mm_chain_cuts_five_five_one() {
        let segs = segment_branches(&chain(12), 5.0).unwrap();
        let lens: Vec<f64> = segs.segments.iter().map(|s| s.length).collect();
        assert_eq!(lens.len(), 3);
        for (l, e) in lens.iter().zip([5.0, 5.0, 1.0]) {
            assert!((l - e).abs() < 1e-12);
        }
        assert_eq!(segs.segments[0].endpoints(), (1, 6));
        assert_eq!(segs.segments[1].endpoints(), (6, 11));
        assert_eq!(segs.segments[2].endpoints(), (11, 12));
    }

    #[test]
    fn short_path_is_one_segment() {
        let segs = segment_branches(&chain(4), 5.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs.segments[0].node_ids, vec![1, 2, 3, 4]);
    }

    #[test]
    fn single_node_tree_is_one_segment() {
        let segs = segment_branches(&chain(1), 5.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs.segments[0].length, 0.0);
    }

    #[test]
    fn rejects_non_positive_length() {
        assert!(segment_branches(&chain(3), 0.0).is_err());
        assert!(segment_branches(&chain(3), -2.0).is_err());
    }
}
