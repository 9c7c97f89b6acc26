//! Binary mask construction and 26-connected component labelling.

use std::collections::VecDeque;

use crate::volume::ScalarVolume;

/// Integer offsets inside a Euclidean ball of `radius` voxels.
pub fn ball_offsets(radius: f64) -> Vec<[isize; 3]> {
    let r = radius.max(0.0).floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if ((dx * dx + dy * dy + dz * dz) as f64) <= r2 + 1e-12 {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Threshold the heatmap and dilate with a Euclidean ball. The returned
/// volume holds 1.0 on the mask and 0.0 elsewhere.
pub fn binarize_dilate(heatmap: &ScalarVolume, threshold: f64, dilation_radius: f64) -> ScalarVolume {
    let dims = heatmap.dims();
    let offsets = ball_offsets(dilation_radius);
    let mut mask = vec![0.0; heatmap.len()];
    for (i, &v) in heatmap.data().iter().enumerate() {
        if v < threshold {
            continue;
        }
        let c = heatmap.coords(i);
        for o in &offsets {
            let x = c[0] as isize + o[0];
            let y = c[1] as isize + o[1];
            let z = c[2] as isize + o[2];
            if x < 0 || y < 0 || z < 0 {
                continue;
            }
            let (x, y, z) = (x as usize, y as usize, z as usize);
            if x < dims[0] && y < dims[1] && z < dims[2] {
                mask[heatmap.index(x, y, z)] = 1.0;
            }
        }
    }
    ScalarVolume::new(dims, heatmap.spacing(), mask).expect("same grid as heatmap")
}

/// In-bounds 26-neighbours of voxel `index`.
pub fn neighbors26(dims: [usize; 3], index: usize) -> impl Iterator<Item = usize> {
    let x = (index % dims[0]) as isize;
    let y = ((index / dims[0]) % dims[1]) as isize;
    let z = (index / (dims[0] * dims[1])) as isize;
    (-1isize..=1).flat_map(move |dz| {
        (-1isize..=1).flat_map(move |dy| {
            (-1isize..=1).filter_map(move |dx| {
                if dx == 0 && dy == 0 && dz == 0 {
                    return None;
                }
                let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                if nx < 0 || ny < 0 || nz < 0 {
                    return None;
                }
                let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                (nx < dims[0] && ny < dims[1] && nz < dims[2]).then(|| nx + dims[0] * (ny + dims[1] * nz))
            })
        })
    })
}

/// A connected foreground region; voxel indices sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn membership(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.voxels {
            m[v] = true;
        }
        m
    }
}

/// Foreground (`> 0.5`) components under 26-connectivity, discarding those
/// smaller than `min_voxels`, ordered by decreasing size and then by lowest
/// voxel index.
pub fn connected_components(mask: &ScalarVolume, min_voxels: usize) -> Vec<Component> {
    let dims = mask.dims();
    let fg: Vec<bool> = mask.data().iter().map(|v| *v > 0.5).collect();
    let mut seen = vec![false; fg.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(v) = queue.pop_front() {
            voxels.push(v);
            for n in neighbors26(dims, v) {
                if fg[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if voxels.len() >= min_voxels.max(1) {
            voxels.sort_unstable();
            comps.push(Component { voxels });
        }
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a.voxels[0].cmp(&b.voxels[0])));
    comps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol_with(dims: [usize; 3], on: &[(usize, usize, usize, f64)]) -> ScalarVolume {
        let mut v = ScalarVolume::zeros(dims, [1.0; 3]).unwrap();
        for &(x, y, z, val) in on {
            let i = v.index(x, y, z);
            v.data_mut()[i] = val;
        }
        v
    }

    #[test]
    fn single_voxel_radius_zero() {
        let h = vol_with([5, 5, 5], &[(2, 2, 2, 0.6)]);
        let m = binarize_dilate(&h, 0.5, 0.0);
        assert_eq!(m.data().iter().filter(|v| **v > 0.5).count(), 1);
        assert_eq!(m.get(2, 2, 2), 1.0);
    }

    #[test]
    fn single_voxel_radius_one_is_seven_voxels() {
        let h = vol_with([5, 5, 5], &[(2, 2, 2, 0.6)]);
        let m = binarize_dilate(&h, 0.5, 1.0);
        // enumerate the unit ball independently
        let mut expect = 0;
        for z in 0..5i32 {
            for y in 0..5i32 {
                for x in 0..5i32 {
                    let d2 = (x - 2).pow(2) + (y - 2).pow(2) + (z - 2).pow(2);
                    let on = m.get(x as usize, y as usize, z as usize) > 0.5;
                    assert_eq!(on, d2 <= 1);
                    expect += (d2 <= 1) as usize;
                }
            }
        }
        assert_eq!(expect, 7);
    }

    #[test]
    fn empty_heatmap_gives_empty_mask() {
        let h = ScalarVolume::zeros([4, 4, 4], [1.0; 3]).unwrap();
        let m = binarize_dilate(&h, 0.3, 1.0);
        assert!(m.data().iter().all(|v| *v == 0.0));
        assert!(connected_components(&m, 1).is_empty());
    }

    #[test]
    fn corner_neighbors_are_connected() {
        let m = vol_with([4, 4, 4], &[(0, 0, 0, 1.0), (1, 1, 1, 1.0)]);
        assert_eq!(connected_components(&m, 1).len(), 1);
    }

    #[test]
    fn gap_separates_components() {
        let m = vol_with([5, 1, 1], &[(0, 0, 0, 1.0), (2, 0, 0, 1.0)]);
        let c = connected_components(&m, 1);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].voxels, vec![0]);
    }

    #[test]
    fn ordered_by_size_and_filtered() {
        let m = vol_with([8, 1, 1], &[(0, 0, 0, 1.0), (2, 0, 0, 1.0), (3, 0, 0, 1.0), (4, 0, 0, 1.0)]);
        let c = connected_components(&m, 1);
        assert_eq!(c[0].voxels, vec![2, 3, 4]);
        assert_eq!(connected_components(&m, 2).len(), 1);
    }
}
