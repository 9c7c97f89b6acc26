use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vesselprune::dualgraph::{
    aggregate_features, build_dual, build_feature_volumes, label_targets, segment_branches, Segment, SegmentSet,
};
use vesselprune::geom::{point_segment_distance, Vec3};
use vesselprune::heatmap::{compute_heatmap, HeatmapParams};
use vesselprune::swc::{resample_polyline, VesselNode, VesselTree};
use vesselprune::synth::{corrupt_heatmap, generate_forest, CorruptionParams, SynthParams};
use vesselprune::tracer::{trace_all, TracerParams};

/// Random forest with uneven edge lengths in (0.2, 1.0] mm.
fn random_forest(rng: &mut ChaCha8Rng) -> VesselTree {
    let n_trees = rng.random_range(1..=3);
    let mut nodes: Vec<VesselNode> = Vec::new();
    for _ in 0..n_trees {
        let n = rng.random_range(1..=80);
        let base = nodes.len();
        for k in 0..n {
            let id = (base + k + 1) as u64;
            if k == 0 {
                let p =
                    Vec3::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
                nodes.push(VesselNode::new(id, 3, p, 1.0, None));
                continue;
            }
            // bias toward extending the latest node so paths get long
            let parent_k = if rng.random_bool(0.8) { k - 1 } else { rng.random_range(0..k) };
            let parent = &nodes[base + parent_k];
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dir = if dir.norm() < 1e-3 { Vec3::x() } else { dir.normalize() };
            let pos = parent.pos + dir * rng.random_range(0.2..=1.0);
            let pid = parent.id;
            nodes.push(VesselNode::new(id, 3, pos, 1.0, Some(pid)));
        }
    }
    VesselTree::from_nodes(nodes).unwrap()
}

#[test]
fn segment_lengths_sum_to_forest_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let forest = random_forest(&mut rng);
        for l in [1.0, 3.3, 5.0, 12.0] {
            let segs = segment_branches(&forest, l).unwrap();
            let diff = (segs.total_length() - forest.total_length()).abs();
            assert!(diff <= 1e-6, "trial {trial} L {l}: diff {diff}");
        }
    }
}

#[test]
fn every_node_is_covered_and_interior_nodes_are_unique() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let forest = random_forest(&mut rng);
        let segs = segment_branches(&forest, 5.0).unwrap();
        let mut interior = std::collections::HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for s in &segs.segments {
            assert!(s.length <= 5.0 + 1.0 + 1e-9, "segment overshoots by more than one edge");
            for (k, id) in s.node_ids.iter().enumerate() {
                seen.insert(*id);
                if k > 0 && k + 1 < s.node_ids.len() {
                    *interior.entry(*id).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(seen.len(), forest.len());
        assert!(interior.values().all(|c| *c == 1));
    }
}

#[test]
fn dual_components_mirror_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let forest = random_forest(&mut rng);
        let dual = build_dual(&segment_branches(&forest, 4.0).unwrap());
        assert_eq!(dual.component_count(), forest.root_count());
    }
}

#[test]
fn removing_a_dual_node_keeps_other_adjacency() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let forest = random_forest(&mut rng);
    let segs = segment_branches(&forest, 3.0).unwrap();
    let full = build_dual(&segs).adjacency();
    for drop in 0..segs.len() {
        let kept: Vec<Segment> = segs.segments.iter().filter(|s| s.id != drop).cloned().collect();
        let remap: Vec<usize> = kept.iter().map(|s| s.id).collect();
        let sub = SegmentSet {
            segments: kept
                .into_iter()
                .enumerate()
                .map(|(k, mut s)| {
                    s.id = k;
                    s
                })
                .collect(),
            sampling_length: segs.sampling_length,
        };
        let adj = build_dual(&sub).adjacency();
        for (k, nb) in adj.iter().enumerate() {
            let expect: Vec<usize> = full[remap[k]].iter().copied().filter(|j| *j != drop).collect();
            let got: Vec<usize> = nb.iter().map(|j| remap[*j]).collect();
            assert_eq!(got, expect);
        }
    }
}

#[test]
fn segment_count_non_increasing_in_sampling_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..30 {
        let forest = random_forest(&mut rng);
        let counts: Vec<usize> =
            [5.0, 10.0, 15.0, 20.0].iter().map(|l| segment_branches(&forest, *l).unwrap().len()).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    }
}

fn traced_scene(seed: u64) -> (VesselTree, SegmentSet, vesselprune::volume::ScalarVolume) {
    let sp = SynthParams { rng_seed: seed, ..Default::default() };
    let gt = generate_forest(&sp).unwrap();
    let hp = HeatmapParams::default();
    let clean = compute_heatmap(&gt, sp.volume_dims, sp.spacing, &hp).unwrap();
    let cp = CorruptionParams { spurious_count: 3, noise_sigma: 0.05, ..Default::default() };
    let (hm, _) = corrupt_heatmap(&clean, &gt, &hp, &cp, seed.wrapping_mul(31)).unwrap();
    let (forest, _) = trace_all(&hm, &TracerParams::default()).unwrap();
    let forest = resample_polyline(&forest, 1.0).unwrap();
    (resample_polyline(&gt, 1.0).unwrap(), segment_branches(&forest, 5.0).unwrap(), hm)
}

#[test]
fn targets_match_exhaustive_search() {
    for seed in 0..3 {
        let (gt, segs, _) = traced_scene(seed);
        let gt_segs = gt.centerline_segments();
        let got = label_targets(&segs, &gt, 3.0).unwrap();
        for (s, g) in segs.segments.iter().zip(&got) {
            let hits = s
                .points
                .iter()
                .filter(|p| {
                    gt_segs.iter().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min) <= 3.0
                })
                .count();
            assert_eq!(*g, hits as f64 / s.points.len() as f64);
        }
    }
}

#[test]
fn targets_monotone_in_matching_distance() {
    for seed in 0..5 {
        let (gt, segs, _) = traced_scene(100 + seed);
        let by_nmd: Vec<Vec<f64>> =
            [3.0, 7.0, 11.0, 15.0].iter().map(|d| label_targets(&segs, &gt, *d).unwrap()).collect();
        for w in by_nmd.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
        }
    }
}

#[test]
fn features_are_finite_bounded_and_order_invariant() {
    let (_, segs, hm) = traced_scene(3);
    let stack = build_feature_volumes(&hm);
    let feats = aggregate_features(&segs, &stack).unwrap();
    for f in &feats {
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|v| v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(v)));
    }
    let reversed = SegmentSet {
        segments: segs
            .segments
            .iter()
            .map(|s| {
                let mut r = s.clone();
                r.points.reverse();
                r.node_ids.reverse();
                r
            })
            .collect(),
        sampling_length: segs.sampling_length,
    };
    let again = aggregate_features(&reversed, &stack).unwrap();
    for (a, b) in feats.iter().zip(&again) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_cut_segments_respect_bound(lens in proptest::collection::vec(0.05f64..1.0, 1..60), l in 0.5f64..8.0) {
        let mut nodes = vec![VesselNode::new(1, 3, Vec3::zeros(), 1.0, None)];
        let mut x = 0.0;
        for (k, e) in lens.iter().enumerate() {
            x += e;
            nodes.push(VesselNode::new(k as u64 + 2, 3, Vec3::new(x, 0.0, 0.0), 1.0, Some(k as u64 + 1)));
        }
        let t = VesselTree::from_nodes(nodes).unwrap();
        let segs = segment_branches(&t, l).unwrap();
        for s in &segs.segments {
            prop_assert!(s.length <= l + 1e-9 || s.node_ids.len() == 2);
        }
        prop_assert!((segs.total_length() - x).abs() < 1e-9);
        let dual = build_dual(&segs);
        prop_assert_eq!(dual.edges.len(), segs.len() - 1);
    }
}
