use crate::error::{Error, Result};
use crate::geom::SegmentIndex;
use crate::swc::VesselTree;

use super::segment::SegmentSet;

/// Soft targets: the fraction of each segment's points lying within `nmd`
/// (mm) of the ground-truth centerline.
pub fn label_targets(segments: &SegmentSet, gt: &VesselTree, nmd: f64) -> Result<Vec<f64>> {
    if !(nmd > 0.0) || !nmd.is_finite() {
        return Err(Error::InvalidParam(format!("nmd must be positive, got {nmd}")));
    }
    let index = SegmentIndex::new(gt.centerline_segments(), nmd);
    segments
        .segments
        .iter()
        .map(|s| {
            if s.points.is_empty() {
                return Err(Error::InvalidParam(format!("segment {} has no points", s.id)));
            }
            let matched = s.points.iter().filter(|p| index.distance_within(p, nmd).is_some()).count();
            Ok(matched as f64 / s.points.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualgraph::Segment;
    use crate::geom::Vec3;
    use crate::swc::VesselNode;

    fn gt_line() -> VesselTree {
        VesselTree::from_nodes(vec![
            VesselNode::new(1, 3, Vec3::new(0.0, 0.0, 0.0), 1.0, None),
            VesselNode::new(2, 3, Vec3::new(20.0, 0.0, 0.0), 1.0, Some(1)),
        ])
        .unwrap()
    }

    fn segset(points: Vec<Vec3>) -> SegmentSet {
        SegmentSet {
            segments: vec![Segment { id: 0, node_ids: (1..=points.len() as u64).collect(), length: 0.0, points }],
            sampling_length: 5.0,
        }
    }

    #[test]
    fn on_and_off_ground_truth() {
        let on = segset((0..5).map(|i| Vec3::new(i as f64 + 2.0, 0.0, 0.0)).collect());
        assert_eq!(label_targets(&on, &gt_line(), 3.0).unwrap(), vec![1.0]);
        let off = segset((0..5).map(|i| Vec3::new(i as f64, 9.0, 0.0)).collect());
        assert_eq!(label_targets(&off, &gt_line(), 3.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn half_matched() {
        let pts = (0..10).map(|i| Vec3::new(5.0, if i < 5 { 1.0 } else { 8.0 }, 0.0)).collect();
        assert_eq!(label_targets(&segset(pts), &gt_line(), 3.0).unwrap(), vec![0.5]);
    }

    #[test]
    fn empty_ground_truth_gives_zero() {
        let on = segset(vec![Vec3::zeros()]);
        assert_eq!(label_targets(&on, &VesselTree::empty(), 3.0).unwrap(), vec![0.0]);
        assert!(label_targets(&on, &gt_line(), 0.0).is_err());
    }
}
