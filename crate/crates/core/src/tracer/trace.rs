use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::volume::ScalarVolume;

use super::fmm::fast_march;
use super::morph::{neighbors26, Component};
use super::TracerParams;

const NO_OWNER: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TracedNode {
    pub pos: Vec3,
    pub radius: f64,
    pub parent: Option<usize>,
}

/// A single rooted tree traced from one component. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct ComponentTrace {
    pub nodes: Vec<TracedNode>,
    pub coverage: f64,
    pub abandoned: usize,
    pub discarded_short: usize,
}

struct Tracer<'a> {
    heatmap: &'a ScalarVolume,
    params: &'a TracerParams,
    inside: Vec<bool>,
    times: Vec<f64>,
    visited: Vec<bool>,
    visited_count: usize,
    owner: Vec<u32>,
    nodes: Vec<TracedNode>,
    min_spacing: f64,
}

impl Tracer<'_> {
    /// Heatmap restricted to the component; zero elsewhere and outside.
    fn sample(&self, p: &Vec3) -> f64 {
        match self.heatmap.containing_voxel(p) {
            Some([x, y, z]) => {
                let i = self.heatmap.index(x, y, z);
                if self.inside[i] {
                    self.heatmap.data()[i]
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Mean distance along four normals at which the heatmap drops below the
    /// binarization threshold.
    fn probe_radius(&self, pos: &Vec3, tangent: &Vec3) -> f64 {
        let t = if tangent.norm() > 1e-12 { tangent.normalize() } else { Vec3::x() };
        let helper = if t.x.abs() <= t.y.abs() && t.x.abs() <= t.z.abs() {
            Vec3::x()
        } else if t.y.abs() <= t.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let n1 = t.cross(&helper).normalize();
        let n2 = t.cross(&n1).normalize();
        let step = 0.25 * self.min_spacing;
        let max_r = 10.0 * self.min_spacing;
        let mut total = 0.0;
        for dir in [n1, -n1, n2, -n2] {
            let mut r = 0.0;
            while r < max_r && self.sample(&(pos + dir * (r + step))) >= self.params.binarize_threshold {
                r += step;
            }
            total += r;
        }
        (total / 4.0).max(0.5 * self.min_spacing)
    }

    fn mark_ball(&mut self, center: &Vec3, radius: f64) {
        let dims = self.heatmap.dims();
        let sp = self.heatmap.spacing();
        let c = self.heatmap.clamped_voxel(center);
        let reach =
            [(radius / sp[0]).ceil() as isize, (radius / sp[1]).ceil() as isize, (radius / sp[2]).ceil() as isize];
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let (x, y, z) = (c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz);
                    if x < 0
                        || y < 0
                        || z < 0
                        || x >= dims[0] as isize
                        || y >= dims[1] as isize
                        || z >= dims[2] as isize
                    {
                        continue;
                    }
                    let i = self.heatmap.index(x as usize, y as usize, z as usize);
                    if self.inside[i] && !self.visited[i] && (self.heatmap.voxel_center(i) - center).norm() <= radius {
                        self.visited[i] = true;
                        self.visited_count += 1;
                    }
                }
            }
        }
    }

    fn mark_voxel(&mut self, i: usize) {
        if !self.visited[i] {
            self.visited[i] = true;
            self.visited_count += 1;
        }
    }

    fn claim(&mut self, voxel: usize, node: usize) {
        let dims = self.heatmap.dims();
        if self.owner[voxel] == NO_OWNER {
            self.owner[voxel] = node as u32;
        }
        for nb in neighbors26(dims, voxel) {
            if self.inside[nb] && self.owner[nb] == NO_OWNER {
                self.owner[nb] = node as u32;
            }
        }
    }

    /// Steepest descent over 26-neighbours until an owned voxel is entered.
    /// Returns the visited voxels (the last one owned) or `None` if trapped.
    fn descend(&self, seed: usize) -> Option<Vec<usize>> {
        let dims = self.heatmap.dims();
        let mut path = vec![seed];
        let mut cur = seed;
        while self.owner[cur] == NO_OWNER {
            let mut best: Option<usize> = None;
            for nb in neighbors26(dims, cur) {
                if !self.inside[nb] || !(self.times[nb] < self.times[cur]) {
                    continue;
                }
                if best.is_none_or(|b| self.times[nb] < self.times[b]) {
                    best = Some(nb);
                }
            }
            cur = best?;
            path.push(cur);
        }
        Some(path)
    }

    fn mark_radius(&self, node_radius: f64) -> f64 {
        node_radius + (self.params.dilation_radius + 1.0) * self.min_spacing
    }
}

/// Uniformly resample a polyline by arc length with spacing at most `step`;
/// the first and last points are kept.
fn resample_path(points: &[Vec3], step: f64) -> Vec<(Vec3, usize)> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let pieces = ((total / step) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(pieces + 1);
    let mut seg = 0;
    for k in 0..=pieces {
        let s = total * k as f64 / pieces as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let p = if k == pieces { points[points.len() - 1] } else { points[seg] + (points[seg + 1] - points[seg]) * t };
        let nearest = if t < 0.5 { seg } else { seg + 1 };
        out.push((p, nearest));
    }
    out
}

pub fn trace_component(heatmap: &ScalarVolume, component: &Component, params: &TracerParams) -> Result<ComponentTrace> {
    if component.is_empty() {
        return Err(Error::InvalidParam("cannot trace an empty component".into()));
    }
    let n = heatmap.len();
    let inside = component.membership(n);
    let mut source = component.voxels[0];
    for &v in &component.voxels {
        if heatmap.data()[v] > heatmap.data()[source] {
            source = v;
        }
    }
    let tf = fast_march(heatmap, &inside, source)?;
    let sp = heatmap.spacing();
    let min_spacing = sp[0].min(sp[1]).min(sp[2]);
    let mut tr = Tracer {
        heatmap,
        params,
        inside,
        times: tf.times.into_data(),
        visited: vec![false; n],
        visited_count: 0,
        owner: vec![NO_OWNER; n],
        nodes: Vec::new(),
        min_spacing,
    };

    let mut order: Vec<usize> = component.voxels.iter().copied().filter(|v| tr.times[*v].is_finite()).collect();
    for &v in &component.voxels {
        if !tr.times[v].is_finite() {
            tr.mark_voxel(v);
        }
    }
    order.sort_by(|a, b| tr.times[*b].total_cmp(&tr.times[*a]).then(a.cmp(b)));

    let root_pos = heatmap.voxel_center(source);
    let root_radius = tr.probe_radius(&root_pos, &Vec3::x());
    tr.nodes.push(TracedNode { pos: root_pos, radius: root_radius, parent: None });
    tr.claim(source, 0);
    tr.mark_voxel(source);
    tr.mark_ball(&root_pos, tr.mark_radius(root_radius));

    let step = params.step_size * min_spacing;
    let comp_len = component.len() as f64;
    let mut abandoned = 0;
    let mut discarded_short = 0;
    let mut cursor = 0;

    while (tr.visited_count as f64) / comp_len < params.coverage_stop {
        while cursor < order.len() && tr.visited[order[cursor]] {
            cursor += 1;
        }
        let Some(&seed) = order.get(cursor) else { break };

        let Some(path) = tr.descend(seed) else {
            abandoned += 1;
            tr.mark_voxel(seed);
            continue;
        };
        let attach = tr.owner[*path.last().unwrap()] as usize;
        // drop the dim tip that lies only in the dilation margin
        let bright = path[..path.len() - 1]
            .iter()
            .position(|v| heatmap.data()[*v] >= params.binarize_threshold)
            .unwrap_or(path.len() - 1);
        let free = &path[bright..path.len() - 1];
        // polyline from the attachment node out to the seed
        let mut pts: Vec<Vec3> = vec![tr.nodes[attach].pos];
        pts.extend(free.iter().rev().map(|v| heatmap.voxel_center(*v)));
        let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if free.is_empty() || length < params.min_branch_len {
            discarded_short += 1;
            tr.mark_voxel(seed);
            let r = tr.mark_radius(0.5 * min_spacing);
            for &v in &path {
                let c = heatmap.voxel_center(v);
                tr.mark_ball(&c, r);
            }
            continue;
        }

        let samples = resample_path(&pts, step);
        let first_new = tr.nodes.len();
        let mut parent = attach;
        for (k, (p, nearest)) in samples.iter().enumerate().skip(1) {
            let mut pos = *p;
            let in_mask = heatmap.containing_voxel(&pos).is_some_and(|[x, y, z]| tr.inside[heatmap.index(x, y, z)]);
            if !in_mask {
                pos = pts[*nearest];
            }
            let prev = samples[k - 1].0;
            let next = samples.get(k + 1).map_or(pos, |s| s.0);
            let radius = tr.probe_radius(&pos, &(next - prev));
            tr.nodes.push(TracedNode { pos, radius, parent: Some(parent) });
            parent = tr.nodes.len() - 1;
        }
        for &v in free {
            let c = heatmap.voxel_center(v);
            let nearest = (first_new..tr.nodes.len())
                .min_by(|a, b| (tr.nodes[*a].pos - c).norm().total_cmp(&(tr.nodes[*b].pos - c).norm()).then(a.cmp(b)))
                .unwrap();
            tr.claim(v, nearest);
        }
        for k in first_new..tr.nodes.len() {
            let (pos, r) = (tr.nodes[k].pos, tr.mark_radius(tr.nodes[k].radius));
            tr.mark_ball(&pos, r);
        }
        tr.mark_voxel(seed);
    }

    Ok(ComponentTrace { coverage: tr.visited_count as f64 / comp_len, nodes: tr.nodes, abandoned, discarded_short })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_keeps_endpoints_and_spacing() {
        let pts = vec![Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 1.0, 0.0)];
        let out = resample_path(&pts, 0.5);
        assert_eq!(out[0].0, pts[0]);
        assert_eq!(out.last().unwrap().0, pts[2]);
        for w in out.windows(2) {
            assert!((w[1].0 - w[0].0).norm() <= 0.5 + 1e-9);
        }
    }
}
