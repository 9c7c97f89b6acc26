//! Point-to-polyline distance queries.
//!
//! All distance-based quantities in the crate (the heatmap distance field,
//! soft targets and reconstruction metrics) measure distances from a point
//! to a set of line segments. [`SegmentIndex`] buckets segments into a
//! uniform grid so that queries only touch nearby segments.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Euclidean distance from `p` to the closed segment `[a, b]`.
/// A degenerate segment (`a == b`) is treated as a point.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Exhaustive minimum distance over all segments. Used as a reference for
/// the accelerated queries.
pub fn brute_force_distance(p: &Vec3, segments: &[(Vec3, Vec3)]) -> f64 {
    segments.iter().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
}

const MAX_CELLS: usize = 1 << 22;

/// Uniform grid over line segments.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    segments: Vec<(Vec3, Vec3)>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(segments: Vec<(Vec3, Vec3)>, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        if segments.is_empty() {
            return Self { segments, origin: Vec3::zeros(), cell: cell_size, dims: [0; 3], cells: Vec::new() };
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for (a, b) in &segments {
            lo = lo.inf(&a.inf(b));
            hi = hi.sup(&a.sup(b));
        }
        let mut cell = cell_size;
        let mut dims;
        loop {
            dims = [0usize; 3];
            for ax in 0..3 {
                dims[ax] = ((hi[ax] - lo[ax]) / cell).floor() as usize + 1;
            }
            if dims.iter().product::<usize>() <= MAX_CELLS {
                break;
            }
            cell *= 2.0;
        }
        let mut index = Self { segments, origin: lo, cell, dims, cells: vec![Vec::new(); dims.iter().product()] };
        for (k, (a, b)) in index.segments.iter().enumerate() {
            let c0 = index.cell_of(&a.inf(b));
            let c1 = index.cell_of(&a.sup(b));
            for z in c0[2]..=c1[2] {
                for y in c0[1]..=c1[1] {
                    for x in c0[0]..=c1[0] {
                        let flat = x + dims[0] * (y + dims[1] * z);
                        index.cells[flat].push(k as u32);
                    }
                }
            }
        }
        index
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[(Vec3, Vec3)] {
        &self.segments
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for ax in 0..3 {
            let f = ((p[ax] - self.origin[ax]) / self.cell).floor();
            c[ax] = f.clamp(0.0, (self.dims[ax] - 1) as f64) as usize;
        }
        c
    }

    fn scan_cell(&self, p: &Vec3, flat: usize, best: &mut f64) {
        for &k in &self.cells[flat] {
            let (a, b) = &self.segments[k as usize];
            let d = point_segment_distance(p, a, b);
            if d < *best {
                *best = d;
            }
        }
    }

    /// Minimum distance to any segment if it is `<= radius`, else `None`.
    pub fn distance_within(&self, p: &Vec3, radius: f64) -> Option<f64> {
        if self.segments.is_empty() {
            return None;
        }
        let c0 = self.cell_of(&(p - Vec3::repeat(radius)));
        let c1 = self.cell_of(&(p + Vec3::repeat(radius)));
        let mut best = f64::INFINITY;
        for z in c0[2]..=c1[2] {
            for y in c0[1]..=c1[1] {
                for x in c0[0]..=c1[0] {
                    self.scan_cell(p, x + self.dims[0] * (y + self.dims[1] * z), &mut best);
                }
            }
        }
        (best <= radius).then_some(best)
    }

    /// Exact distance to the nearest segment (infinite for an empty index).
    ///
    /// Searches cubic shells of cells around the cell nearest to `p`; after
    /// shell `k` every unvisited cell is at least `k * cell` away.
    pub fn nearest_distance(&self, p: &Vec3) -> f64 {
        if self.segments.is_empty() {
            return f64::INFINITY;
        }
        let c = self.cell_of(p);
        let max_shell = *self.dims.iter().max().unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=max_shell {
            let lo: Vec<isize> = (0..3).map(|ax| c[ax] as isize - k as isize).collect();
            let hi: Vec<isize> = (0..3).map(|ax| c[ax] as isize + k as isize).collect();
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                        let on_shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] || z == lo[2] || z == hi[2];
                        if !on_shell {
                            continue;
                        }
                        let flat = x as usize + self.dims[0] * (y as usize + self.dims[1] * z as usize);
                        self.scan_cell(p, flat, &mut best);
                    }
                }
            }
            if best <= k as f64 * self.cell {
                break;
            }
        }
        best
    }
}
