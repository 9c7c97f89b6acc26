//! Score-based pruning of traced forests and reconstruction metrics.

mod metrics;
mod prune;

pub use metrics::{
    catch_metrics, directed_distances, evaluate, f1_score, spatial_from_distances, spatial_metrics, CatchMetrics,
    EvalConfig, MetricAccumulator, MetricReport, SpatialMetrics,
};
pub use prune::prune;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualgraph::segment_branches;
    use crate::geom::Vec3;
    use crate::swc::{VesselNode, VesselTree};

    fn line(start_id: u64, n: usize, offset: Vec3) -> Vec<VesselNode> {
        (0..n)
            .map(|i| {
                let id = start_id + i as u64;
                VesselNode::new(id, 3, offset + Vec3::new(i as f64, 0.0, 0.0), 1.0, (i > 0).then_some(id - 1))
            })
            .collect()
    }

    fn tree(nodes: Vec<VesselNode>) -> VesselTree {
        VesselTree::from_nodes(nodes).unwrap()
    }

    #[test]
    fn prune_extremes() {
        let t = tree(line(1, 12, Vec3::zeros()));
        let segs = segment_branches(&t, 5.0).unwrap();
        assert_eq!(prune(&t, &segs, &[0.6, 0.7, 0.9], 0.5).unwrap(), t);
        assert!(prune(&t, &segs, &[0.1, 0.2, 0.3], 0.5).unwrap().is_empty());
        assert!(prune(&t, &segs, &[0.1, 0.2], 0.5).is_err());
    }

    #[test]
    fn pruning_middle_segment_rerooted_distal_piece() {
        let t = tree(line(1, 16, Vec3::zeros()));
        let segs = segment_branches(&t, 5.0).unwrap();
        assert_eq!(segs.len(), 3);
        let p = prune(&t, &segs, &[0.9, 0.1, 0.9], 0.5).unwrap();
        let ids: Vec<u64> = p.nodes().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5, 6, 11, 12, 13, 14, 15, 16]);
        assert_eq!(p.root_count(), 2);
        assert_eq!(p.nodes().iter().find(|n| n.id == 11).unwrap().parent, None);
        assert_eq!(p.nodes().iter().find(|n| n.id == 6).unwrap().parent, Some(5));
    }

    #[test]
    fn pruned_two_node_segment_between_kept_segments_drops_its_edge() {
        let t = tree(line(1, 12, Vec3::zeros()));
        let segs = segment_branches(&t, 5.0).unwrap();
        // segments: 1..6, 6..11, 11..12
        let p = prune(&t, &segs, &[0.9, 0.9, 0.1], 0.5).unwrap();
        assert_eq!(p.len(), 11);
        let p = prune(&t, &segs, &[0.9, 0.1, 0.9], 0.5).unwrap();
        assert_eq!(p.nodes().iter().find(|n| n.id == 12).unwrap().parent, Some(11));
        assert_eq!(p.nodes().iter().find(|n| n.id == 11).unwrap().parent, None);
    }

    #[test]
    fn identical_trees_are_perfect() {
        let t = tree(line(1, 10, Vec3::zeros()));
        let r = evaluate(&t, &t, &EvalConfig::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!((r.sd_mm, r.ssd_mm, r.pssd), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn far_single_nodes_are_not_caught() {
        let a = tree(vec![VesselNode::new(1, 3, Vec3::zeros(), 1.0, None)]);
        let b = tree(vec![VesselNode::new(1, 3, Vec3::new(5.0, 0.0, 0.0), 1.0, None)]);
        let c = catch_metrics(&a, &b, 4.0).unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spurious_far_branch_lowers_precision_only() {
        let gt = tree(line(1, 20, Vec3::zeros()));
        let mut nodes = line(1, 20, Vec3::zeros());
        nodes.extend(line(100, 10, Vec3::new(0.0, 30.0, 0.0)));
        let pred = tree(nodes);
        let c = catch_metrics(&pred, &gt, 4.0).unwrap();
        assert_eq!(c.precision, 20.0 / 30.0);
        assert_eq!(c.recall, 1.0);
    }

    #[test]
    fn parallel_lines_offsets() {
        let a = tree(line(1, 10, Vec3::zeros()));
        for (off, expect) in [(3.0, (3.0, 3.0, 1.0)), (1.0, (1.0, 0.0, 0.0))] {
            let b = tree(line(1, 10, Vec3::new(0.0, off, 0.0)));
            let s = spatial_metrics(&a, &b, 2.0).unwrap().unwrap();
            assert!((s.sd - expect.0).abs() < 1e-12);
            assert!((s.ssd - expect.1).abs() < 1e-12);
            assert_eq!(s.pssd, expect.2);
        }
    }

    #[test]
    fn empty_tree_conventions() {
        let t = tree(line(1, 5, Vec3::zeros()));
        let e = VesselTree::empty();
        let r = evaluate(&e, &t, &EvalConfig::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.spatial_valid), (1.0, 0.0, false));
        let r = evaluate(&t, &e, &EvalConfig::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.sd_mm), (0.0, 1.0, None));
    }

    #[test]
    fn report_json_round_trip() {
        let a = tree(line(1, 10, Vec3::zeros()));
        let b = tree(line(1, 7, Vec3::new(0.3, 2.7, 0.1)));
        let r = evaluate(&a, &b, &EvalConfig::default()).unwrap();
        let text = r.to_json().unwrap();
        assert_eq!(MetricReport::from_json(&text).unwrap(), r);
        for key in ["precision", "recall", "f1", "sd_mm", "ssd_mm", "pssd", "catch_dist_mm", "sig_dist_mm"] {
            assert!(text.contains(&format!("\"{key}\"")));
        }
    }
}
