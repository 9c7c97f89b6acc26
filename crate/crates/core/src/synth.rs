//! Synthetic ground-truth vessel forests and heatmap corruption.
//!
//! Trees grow by recursive bifurcation from random roots. Corruption
//! emulates an imperfect centerline predictor: Gaussian noise, spherical
//! dropouts on the true centerline (gaps) and spurious tubes away from the
//! true tree (false positives).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SegmentIndex, Vec3};
use crate::heatmap::HeatmapParams;
use crate::swc::{VesselNode, VesselTree};
use crate::volume::ScalarVolume;

/// Node spacing of generated centerlines, mm.
pub const SYNTH_NODE_SPACING: f64 = 1.0;
pub const SWC_KIND: i32 = 3;

const DIRECTION_TRIES: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Set per scene from the global seed, never read from config files.
    #[serde(skip)]
    pub rng_seed: u64,
    pub n_trees: usize,
    /// Maximum bifurcation depth; depth 0 is a single unbranched segment.
    pub depth: usize,
    pub branch_len_range: (f64, f64),
    /// Angle between parent and child direction, degrees.
    pub branch_angle_range: (f64, f64),
    pub radius_root: f64,
    pub radius_decay: f64,
    pub volume_dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Minimum distance from any node to the volume boundary, mm.
    pub margin: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            n_trees: 1,
            depth: 3,
            branch_len_range: (8.0, 16.0),
            branch_angle_range: (25.0, 60.0),
            radius_root: 2.0,
            radius_decay: 0.8,
            volume_dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            margin: 5.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        let (l0, l1) = self.branch_len_range;
        if !(l0 > 0.0 && l0 <= l1) {
            return bad(format!("branch_len_range must satisfy 0 < min <= max, got {l0}..{l1}"));
        }
        let (a0, a1) = self.branch_angle_range;
        if !(0.0..=180.0).contains(&a0) || !(a0 <= a1 && a1 <= 180.0) {
            return bad(format!("branch_angle_range must be ordered within [0,180], got {a0}..{a1}"));
        }
        if !(self.radius_root > 0.0) {
            return bad("radius_root must be positive".into());
        }
        if !(self.radius_decay > 0.0 && self.radius_decay <= 1.0) {
            return bad(format!("radius_decay must lie in (0,1], got {}", self.radius_decay));
        }
        if self.volume_dims.contains(&0) {
            return bad("volume_dims must be positive".into());
        }
        if self.spacing.iter().any(|s| !(*s > 0.0)) {
            return bad("spacing must be positive".into());
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative".into());
        }
        Ok(())
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        let ext = Vec3::new(
            self.volume_dims[0] as f64 * self.spacing[0],
            self.volume_dims[1] as f64 * self.spacing[1],
            self.volume_dims[2] as f64 * self.spacing[2],
        );
        (Vec3::repeat(self.margin), ext - Vec3::repeat(self.margin))
    }
}

fn inside(p: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Unit vector perpendicular to `d`, uniformly distributed around it.
fn random_perpendicular<R: Rng>(rng: &mut R, d: &Vec3) -> Vec3 {
    loop {
        let v = random_unit(rng);
        let p = v - d * v.dot(d);
        let n = p.norm();
        if n > 1e-3 {
            return p / n;
        }
    }
}

fn rotate_towards(d: &Vec3, perp: &Vec3, angle_deg: f64) -> Vec3 {
    let a = angle_deg.to_radians();
    (d * a.cos() + perp * a.sin()).normalize()
}

struct Grower<'a> {
    params: &'a SynthParams,
    rng: ChaCha8Rng,
    lo: Vec3,
    hi: Vec3,
    nodes: Vec<VesselNode>,
}

impl Grower<'_> {
    fn push_chain(&mut self, from: usize, dir: &Vec3, len: f64, radius: f64) -> usize {
        let start = self.nodes[from].pos;
        let pieces = (len / SYNTH_NODE_SPACING).ceil().max(1.0) as usize;
        let mut parent = self.nodes[from].id;
        for k in 1..=pieces {
            let id = self.nodes.len() as u64 + 1;
            let pos = start + dir * (len * k as f64 / pieces as f64);
            self.nodes.push(VesselNode::new(id, SWC_KIND, pos, radius, Some(parent)));
            parent = id;
        }
        self.nodes.len() - 1
    }

    fn fits(&self, from: usize, dir: &Vec3, len: f64) -> bool {
        inside(&(self.nodes[from].pos + dir * len), &self.lo, &self.hi)
    }

    fn grow(&mut self, tip: usize, dir: Vec3, level: usize, radius: f64) {
        if level >= self.params.depth {
            return;
        }
        let child_radius = radius * self.params.radius_decay;
        let (a0, a1) = self.params.branch_angle_range;
        let (l0, l1) = self.params.branch_len_range;
        let perp = random_perpendicular(&mut self.rng, &dir);
        for side in [1.0, -1.0] {
            let mut chosen = None;
            let mut axis = perp * side;
            for _ in 0..DIRECTION_TRIES {
                let angle = self.rng.random_range(a0..=a1);
                let len = self.rng.random_range(l0..=l1);
                let d = rotate_towards(&dir, &axis, angle);
                if self.fits(tip, &d, len) {
                    chosen = Some((d, len));
                    break;
                }
                axis = random_perpendicular(&mut self.rng, &dir);
            }
            if let Some((d, len)) = chosen {
                let end = self.push_chain(tip, &d, len, child_radius);
                self.grow(end, d, level + 1, child_radius);
            }
        }
    }
}

/// Generate a forest of `n_trees` bifurcating trees.
pub fn generate_forest(params: &SynthParams) -> Result<VesselTree> {
    params.validate()?;
    let (lo, hi) = params.bounds();
    let (l0, _) = params.branch_len_range;
    if (0..3).any(|k| hi[k] - lo[k] < l0) {
        return Err(Error::InvalidParam(format!(
            "volume {:?} x {:?} mm too small for margin {} and branch length {}",
            params.volume_dims, params.spacing, params.margin, l0
        )));
    }
    let mut g = Grower { params, rng: ChaCha8Rng::seed_from_u64(params.rng_seed), lo, hi, nodes: Vec::new() };
    let (l0, l1) = params.branch_len_range;
    for _ in 0..params.n_trees {
        let mut placed = false;
        for _ in 0..DIRECTION_TRIES {
            let root = Vec3::new(
                g.rng.random_range(lo[0]..=hi[0]),
                g.rng.random_range(lo[1]..=hi[1]),
                g.rng.random_range(lo[2]..=hi[2]),
            );
            let root_idx = g.nodes.len();
            g.nodes.push(VesselNode::new(root_idx as u64 + 1, SWC_KIND, root, params.radius_root, None));
            let mut trunk = None;
            for _ in 0..DIRECTION_TRIES {
                let d = random_unit(&mut g.rng);
                let len = g.rng.random_range(l0..=l1);
                if g.fits(root_idx, &d, len) {
                    trunk = Some((d, len));
                    break;
                }
            }
            match trunk {
                Some((d, len)) => {
                    let end = g.push_chain(root_idx, &d, len, params.radius_root);
                    g.grow(end, d, 0, params.radius_root);
                    placed = true;
                    break;
                }
                None => {
                    g.nodes.truncate(root_idx);
                }
            }
        }
        if !placed {
            return Err(Error::InvalidParam("could not place a tree inside the volume".into()));
        }
    }
    VesselTree::from_nodes(g.nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionParams {
    pub noise_sigma: f64,
    pub dropout_count: usize,
    pub dropout_radius: f64,
    pub spurious_count: usize,
    /// Total length range of each spurious tube, mm.
    pub spurious_length: (f64, f64),
    pub spurious_intensity: f64,
    /// Minimum distance between a spurious tube and the true centerline, mm.
    pub spurious_clearance: f64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            dropout_count: 0,
            dropout_radius: 2.0,
            spurious_count: 0,
            spurious_length: (10.0, 20.0),
            spurious_intensity: 0.8,
            spurious_clearance: 3.0,
        }
    }
}

impl CorruptionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        if !(self.dropout_radius >= 0.0) {
            return bad("dropout_radius must be >= 0".into());
        }
        let (a, b) = self.spurious_length;
        if !(a > 0.0 && a <= b) {
            return bad(format!("spurious_length must satisfy 0 < min <= max, got {a}..{b}"));
        }
        if !(0.0..=1.0).contains(&self.spurious_intensity) {
            return bad("spurious_intensity must lie in [0,1]".into());
        }
        if !(self.spurious_clearance >= 0.0) {
            return bad("spurious_clearance must be >= 0".into());
        }
        Ok(())
    }
}

/// What a corruption pass injected, for tests and bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct CorruptionLog {
    pub dropout_centers: Vec<Vec3>,
    pub spurious_tubes: Vec<Vec<Vec3>>,
}

const TUBE_TRIES: usize = 200;
const TUBE_MAX_TURN_DEG: f64 = 30.0;

fn sample_tube<R: Rng>(
    rng: &mut R,
    gt: &[Vec3],
    gt_index: &SegmentIndex,
    params: &CorruptionParams,
    lo: &Vec3,
    hi: &Vec3,
) -> Option<Vec<Vec3>> {
    let (l0, l1) = params.spurious_length;
    for _ in 0..TUBE_TRIES {
        let len = rng.random_range(l0..=l1);
        // half the tubes start next to the true tree and become false branches
        let start = if !gt.is_empty() && rng.random_bool(0.5) {
            let anchor = gt[rng.random_range(0..gt.len())];
            anchor + random_unit(rng) * (params.spurious_clearance + 0.5)
        } else {
            Vec3::new(rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1]), rng.random_range(lo[2]..=hi[2]))
        };
        let d0 = random_unit(rng);
        let perp = random_perpendicular(rng, &d0);
        let d1 = rotate_towards(&d0, &perp, rng.random_range(0.0..=TUBE_MAX_TURN_DEG));
        let half = len / 2.0;
        let n = (half / SYNTH_NODE_SPACING).ceil().max(1.0) as usize;
        let mut pts = Vec::with_capacity(2 * n + 1);
        pts.push(start);
        for k in 1..=n {
            pts.push(start + d0 * (half * k as f64 / n as f64));
        }
        let mid = *pts.last().unwrap();
        for k in 1..=n {
            pts.push(mid + d1 * (half * k as f64 / n as f64));
        }
        let ok = pts.iter().all(|p| {
            inside(p, lo, hi)
                && gt_index.distance_within(p, params.spurious_clearance).is_none_or(|d| d >= params.spurious_clearance)
        });
        if ok {
            return Some(pts);
        }
    }
    None
}

/// Corrupt a clean heatmap. `gt` supplies centerline points for dropouts and
/// the exclusion zone for spurious tubes; `hp` gives the tube profile.
pub fn corrupt_heatmap(
    vol: &ScalarVolume,
    gt: &VesselTree,
    hp: &HeatmapParams,
    params: &CorruptionParams,
    rng_seed: u64,
) -> Result<(ScalarVolume, CorruptionLog)> {
    params.validate()?;
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = vol.clone();
    let mut log = CorruptionLog::default();
    let gt_points: Vec<Vec3> = gt.nodes().iter().map(|n| n.pos).collect();
    let gt_index = SegmentIndex::new(gt.centerline_segments(), hp.d_max);
    let ext = vol.extent();
    let lo = Vec3::repeat(hp.d_max.min(ext.min() / 2.0));
    let hi = ext - lo;

    for _ in 0..params.spurious_count {
        if let Some(tube) = sample_tube(&mut rng, &gt_points, &gt_index, params, &lo, &hi) {
            let segs: Vec<(Vec3, Vec3)> = tube.windows(2).map(|w| (w[0], w[1])).collect();
            add_tube(&mut out, &segs, hp, params.spurious_intensity);
            log.spurious_tubes.push(tube);
        }
    }

    if !gt_points.is_empty() {
        for _ in 0..params.dropout_count {
            let c = gt_points[rng.random_range(0..gt_points.len())];
            zero_ball(&mut out, &c, params.dropout_radius);
            log.dropout_centers.push(c);
        }
    }

    if params.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, params.noise_sigma).map_err(|e| Error::InvalidParam(format!("noise_sigma: {e}")))?;
        for v in out.data_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok((out, log))
}

fn voxel_box(vol: &ScalarVolume, lo: &Vec3, hi: &Vec3) -> [std::ops::Range<usize>; 3] {
    let dims = vol.dims();
    let sp = vol.spacing();
    let r = |k: usize| {
        let a = ((lo[k] / sp[k]) - 0.5).ceil().max(0.0) as usize;
        let b = (((hi[k] / sp[k]) - 0.5).floor() + 1.0).clamp(0.0, dims[k] as f64) as usize;
        a..b.max(a)
    };
    [r(0), r(1), r(2)]
}

fn add_tube(vol: &mut ScalarVolume, segs: &[(Vec3, Vec3)], hp: &HeatmapParams, intensity: f64) {
    let index = SegmentIndex::new(segs.to_vec(), hp.d_max);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for (a, b) in segs {
        lo = lo.inf(&a.inf(b));
        hi = hi.sup(&a.sup(b));
    }
    let pad = Vec3::repeat(hp.d_max);
    let [rx, ry, rz] = voxel_box(vol, &(lo - pad), &(hi + pad));
    for z in rz {
        for y in ry.clone() {
            for x in rx.clone() {
                let i = vol.index(x, y, z);
                let p = vol.voxel_center(i);
                if let Some(d) = index.distance_within(&p, hp.d_max) {
                    let v = &mut vol.data_mut()[i];
                    *v = (*v + intensity * hp.value(d)).min(1.0);
                }
            }
        }
    }
}

fn zero_ball(vol: &mut ScalarVolume, c: &Vec3, r: f64) {
    let rv = Vec3::repeat(r);
    let [rx, ry, rz] = voxel_box(vol, &(c - rv), &(c + rv));
    for z in rz {
        for y in ry.clone() {
            for x in rx.clone() {
                let i = vol.index(x, y, z);
                if (vol.voxel_center(i) - c).norm() <= r {
                    vol.data_mut()[i] = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::brute_force_distance;
    use crate::heatmap::compute_heatmap;

    fn leaf_count(t: &VesselTree) -> usize {
        t.topology().children.iter().filter(|c| c.is_empty()).count()
    }

    #[test]
    fn depth_zero_single_segment() {
        let p = SynthParams { depth: 0, n_trees: 1, rng_seed: 5, ..Default::default() };
        let t = generate_forest(&p).unwrap();
        assert_eq!(t.root_count(), 1);
        assert_eq!(leaf_count(&t), 1);
        let topo = t.topology();
        assert!(topo.children.iter().all(|c| c.len() <= 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = SynthParams { rng_seed: 42, n_trees: 2, ..Default::default() };
        assert_eq!(generate_forest(&p).unwrap(), generate_forest(&p).unwrap());
        let q = SynthParams { rng_seed: 43, ..p.clone() };
        assert_ne!(generate_forest(&p).unwrap(), generate_forest(&q).unwrap());
    }

    #[test]
    fn depth_three_leaf_bounds_and_margin() {
        for seed in 0..20 {
            let p = SynthParams { rng_seed: seed, n_trees: 2, depth: 3, ..Default::default() };
            let t = generate_forest(&p).unwrap();
            assert_eq!(t.root_count(), 2);
            let topo = t.topology();
            for &r in &topo.roots {
                let mut leaves = 0;
                let mut stack = vec![r];
                while let Some(i) = stack.pop() {
                    if topo.children[i].is_empty() {
                        leaves += 1;
                    }
                    stack.extend(&topo.children[i]);
                }
                assert!((1..=8).contains(&leaves), "seed {seed}: {leaves} leaves");
            }
            for n in t.nodes() {
                for k in 0..3 {
                    assert!(n.pos[k] >= p.margin - 1e-9 && n.pos[k] <= 64.0 - p.margin + 1e-9);
                }
            }
            // every bifurcation has exactly two children
            assert!(topo.children.iter().all(|c| c.len() <= 2));
        }
    }

    #[test]
    fn golden_node_count() {
        let p = SynthParams { rng_seed: 7, n_trees: 1, depth: 3, ..Default::default() };
        let t = generate_forest(&p).unwrap();
        let topo = t.topology();
        // one root plus ceil(len / spacing) nodes per straight branch
        let mut expected = 1;
        for (i, ch) in topo.children.iter().enumerate() {
            if i == topo.roots[0] || ch.len() == 2 {
                for &c in ch {
                    let mut k = c;
                    let mut count = 1;
                    while topo.children[k].len() == 1 {
                        k = topo.children[k][0];
                        count += 1;
                    }
                    expected += count;
                }
            }
        }
        assert_eq!(t.len(), expected);
        assert!(topo.children.iter().filter(|c| c.len() == 2).count() <= 7);
        assert_eq!(t.len(), 173);
    }

    #[test]
    fn too_small_volume_is_rejected() {
        let p = SynthParams { volume_dims: [12, 12, 12], margin: 5.0, ..Default::default() };
        assert!(generate_forest(&p).is_err());
    }

    fn scene() -> (VesselTree, ScalarVolume, HeatmapParams) {
        let p = SynthParams { rng_seed: 1, n_trees: 1, depth: 2, ..Default::default() };
        let t = generate_forest(&p).unwrap();
        let hp = HeatmapParams::default();
        let v = compute_heatmap(&t, p.volume_dims, p.spacing, &hp).unwrap();
        (t, v, hp)
    }

    #[test]
    fn zero_corruption_is_identity() {
        let (t, v, hp) = scene();
        let (out, log) = corrupt_heatmap(&v, &t, &hp, &CorruptionParams::default(), 9).unwrap();
        assert_eq!(out, v);
        assert!(log.spurious_tubes.is_empty());
    }

    #[test]
    fn spurious_tube_is_additive_and_local() {
        let (t, v, hp) = scene();
        let params = CorruptionParams { spurious_count: 1, ..Default::default() };
        let (out, log) = corrupt_heatmap(&v, &t, &hp, &params, 4).unwrap();
        assert_eq!(log.spurious_tubes.len(), 1);
        let tube: Vec<(Vec3, Vec3)> = log.spurious_tubes[0].windows(2).map(|w| (w[0], w[1])).collect();
        let gt = t.centerline_segments();
        let mut changed = 0;
        for i in 0..v.len() {
            let diff = out.data()[i] - v.data()[i];
            assert!(diff >= 0.0);
            if diff > 0.0 {
                changed += 1;
                assert!(brute_force_distance(&out.voxel_center(i), &tube) <= hp.d_max);
            }
        }
        assert!(changed > 0);
        for p in &log.spurious_tubes[0] {
            assert!(brute_force_distance(p, &gt) >= params.spurious_clearance);
        }
    }

    #[test]
    fn noise_mean_absolute_change_is_bounded() {
        let sigma = 0.05;
        let v = ScalarVolume::new([128, 128, 64], [1.0; 3], vec![0.5; 128 * 128 * 64]).unwrap();
        let params = CorruptionParams { noise_sigma: sigma, ..Default::default() };
        let (out, _) = corrupt_heatmap(&v, &VesselTree::empty(), &HeatmapParams::default(), &params, 2).unwrap();
        let mad: f64 = out.data().iter().zip(v.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len() as f64;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(v.len() >= 1_000_000);
        assert!((mad - expected).abs() < 1e-3, "mad {mad} expected {expected}");
        assert!(out.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn dropout_zeroes_centerline_balls() {
        let (t, v, hp) = scene();
        let params = CorruptionParams { dropout_count: 2, dropout_radius: 2.0, ..Default::default() };
        let (out, log) = corrupt_heatmap(&v, &t, &hp, &params, 8).unwrap();
        assert_eq!(log.dropout_centers.len(), 2);
        for c in &log.dropout_centers {
            for i in 0..out.len() {
                if (out.voxel_center(i) - c).norm() <= 2.0 {
                    assert_eq!(out.data()[i], 0.0);
                }
            }
        }
    }
}
