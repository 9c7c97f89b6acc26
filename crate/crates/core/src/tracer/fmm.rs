//! First-order fast marching on a voxel subset.
//!
//! Solves `|grad T| * F = 1` with `F = (heatmap + eps)^2`, using the
//! six-neighbour upwind stencil and honouring anisotropic spacing.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;

pub const SPEED_EPS: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct TimeField {
    pub times: ScalarVolume,
    pub source: usize,
}

impl TimeField {
    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.times.data()[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub fn speed(h: f64) -> f64 {
    let s = h.max(0.0) + SPEED_EPS;
    s * s
}

/// Solve the upwind quadratic from per-axis known neighbour times
/// `a[k]` (infinite when none) and spacings `h[k]`.
fn upwind_update(a: [f64; 3], h: [f64; 3], f: f64) -> f64 {
    let mut axes: Vec<(f64, f64)> = (0..3).filter(|k| a[*k].is_finite()).map(|k| (a[k], h[k])).collect();
    axes.sort_by(|x, y| x.0.total_cmp(&y.0));
    let rhs = 1.0 / (f * f);
    let mut best = axes[0].0 + axes[0].1 / f;
    for m in 2..=axes.len() {
        let used = &axes[..m];
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, -rhs);
        for &(t, hk) in used {
            let w = 1.0 / (hk * hk);
            qa += w;
            qb -= 2.0 * w * t;
            qc += w * t * t;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            break;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if t < used[m - 1].0 {
            break;
        }
        best = t;
        if m < axes.len() && t <= axes[m].0 {
            break;
        }
    }
    best
}

/// Arrival times from `source` restricted to voxels where `inside` is true.
/// Voxels outside the region, or not reachable through face neighbours,
/// keep an infinite time.
pub fn fast_march(heatmap: &ScalarVolume, inside: &[bool], source: usize) -> Result<TimeField> {
    if inside.len() != heatmap.len() {
        return Err(Error::DimensionMismatch("region mask does not match heatmap".into()));
    }
    if source >= inside.len() || !inside[source] {
        return Err(Error::InvalidParam(format!("source voxel {source} outside the component")));
    }
    let dims = heatmap.dims();
    let sp = heatmap.spacing();
    let n = heatmap.len();
    let mut t = vec![f64::INFINITY; n];
    let mut known = vec![false; n];
    let mut heap = BinaryHeap::new();
    t[source] = 0.0;
    heap.push(Reverse(Entry { time: 0.0, index: source }));
    let strides = [1usize, dims[0], dims[0] * dims[1]];

    while let Some(Reverse(Entry { time, index })) = heap.pop() {
        if known[index] || time > t[index] {
            continue;
        }
        known[index] = true;
        let c = heatmap.coords(index);
        for ax in 0..3 {
            for dir in [-1isize, 1] {
                let nc = c[ax] as isize + dir;
                if nc < 0 || nc >= dims[ax] as isize {
                    continue;
                }
                let ni = (index as isize + dir * strides[ax] as isize) as usize;
                if !inside[ni] || known[ni] {
                    continue;
                }
                let nco = heatmap.coords(ni);
                let mut a = [f64::INFINITY; 3];
                for bx in 0..3 {
                    for bdir in [-1isize, 1] {
                        let bc = nco[bx] as isize + bdir;
                        if bc < 0 || bc >= dims[bx] as isize {
                            continue;
                        }
                        let bi = (ni as isize + bdir * strides[bx] as isize) as usize;
                        if known[bi] && t[bi] < a[bx] {
                            a[bx] = t[bi];
                        }
                    }
                }
                let cand = upwind_update(a, sp, speed(heatmap.data()[ni]));
                if cand < t[ni] {
                    t[ni] = cand;
                    heap.push(Reverse(Entry { time: cand, index: ni }));
                }
            }
        }
    }
    let times = ScalarVolume::new(dims, sp, t)?;
    Ok(TimeField { times, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speed_line() {
        let n = 20;
        let h = ScalarVolume::new([1, 1, n], [1.0, 1.0, 0.5], vec![1.0; n]).unwrap();
        let tf = fast_march(&h, &vec![true; n], 0).unwrap();
        let f = (1.0 + SPEED_EPS).powi(2);
        assert_eq!(tf.at(0), 0.0);
        for k in 0..n {
            let expect = k as f64 * 0.5 / f;
            assert!((tf.at(k) - expect).abs() <= 0.5, "k={k}");
            assert!((tf.at(k) - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn source_outside_rejected() {
        let h = ScalarVolume::new([3, 1, 1], [1.0; 3], vec![1.0; 3]).unwrap();
        assert!(fast_march(&h, &[true, false, true], 1).is_err());
    }

    #[test]
    fn unreachable_voxels_stay_infinite() {
        let h = ScalarVolume::new([3, 1, 1], [1.0; 3], vec![1.0; 3]).unwrap();
        let tf = fast_march(&h, &[true, false, true], 0).unwrap();
        assert!(tf.at(2).is_infinite());
        assert!(tf.at(1).is_infinite());
    }

    #[test]
    fn approximates_euclidean_distance_in_cube() {
        let n = 16;
        let h = ScalarVolume::new([n, n, n], [1.0; 3], vec![1.0; n * n * n]).unwrap();
        let src = h.index(0, 0, 0);
        let tf = fast_march(&h, &vec![true; n * n * n], src).unwrap();
        let f = (1.0 + SPEED_EPS).powi(2);
        let mut worst: f64 = 0.0;
        for i in 0..h.len() {
            let d = (h.voxel_center(i) - h.voxel_center(src)).norm() / f;
            worst = worst.max((tf.at(i) - d).abs());
            assert!(tf.at(i) >= 0.0);
            if i != src {
                assert!(tf.at(i) > 0.0);
            }
        }
        assert!(worst <= 3f64.sqrt(), "max error {worst}");
    }

    #[test]
    fn slower_region_delays_arrival() {
        let n = 10;
        let mut data = vec![1.0; n];
        data[5] = 0.1;
        let h = ScalarVolume::new([n, 1, 1], [1.0; 3], data).unwrap();
        let tf = fast_march(&h, &vec![true; n], 0).unwrap();
        assert!(tf.at(5) - tf.at(4) > 10.0);
        for k in 1..n {
            assert!(tf.at(k) > tf.at(k - 1));
        }
    }
}
