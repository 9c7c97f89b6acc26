//! Filter-bank feature volumes and per-segment feature aggregation.
//!
//! Four layers stand in for convolutional feature maps: the heatmap itself,
//! two Gaussian smoothings and a normalised gradient magnitude. Any other
//! [`FeatureStack`] (for example loaded from disk) aggregates the same way.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{FeatureStack, ScalarVolume};

use super::segment::SegmentSet;

pub const FEATURE_CHANNELS: [&str; 4] = ["heatmap", "smooth_s1", "smooth_s2", "gradient"];

/// Normalised 1D Gaussian kernel truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable convolution along one axis with replicated borders.
fn convolve_axis(vol: &ScalarVolume, kernel: &[f64], axis: usize) -> ScalarVolume {
    let dims = vol.dims();
    let r = (kernel.len() / 2) as isize;
    let n = dims[axis] as isize;
    let src = vol.data();
    let out: Vec<f64> = (0..vol.len())
        .into_par_iter()
        .map(|i| {
            let c = vol.coords(i);
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let mut cc = c;
                cc[axis] = (c[axis] as isize + k as isize - r).clamp(0, n - 1) as usize;
                acc += w * src[vol.index(cc[0], cc[1], cc[2])];
            }
            acc
        })
        .collect();
    ScalarVolume::new(dims, vol.spacing(), out).expect("same grid")
}

pub fn gaussian_smooth(vol: &ScalarVolume, sigma_voxels: f64) -> ScalarVolume {
    let k = gaussian_kernel(sigma_voxels);
    let a = convolve_axis(vol, &k, 0);
    let b = convolve_axis(&a, &k, 1);
    convolve_axis(&b, &k, 2)
}

/// Central-difference gradient magnitude in units per mm.
pub fn gradient_magnitude(vol: &ScalarVolume) -> ScalarVolume {
    let dims = vol.dims();
    let sp = vol.spacing();
    let src = vol.data();
    let out: Vec<f64> = (0..vol.len())
        .into_par_iter()
        .map(|i| {
            let c = vol.coords(i);
            let mut g2 = 0.0;
            for ax in 0..3 {
                if dims[ax] < 2 {
                    continue;
                }
                let lo = c[ax].saturating_sub(1);
                let hi = (c[ax] + 1).min(dims[ax] - 1);
                let (mut a, mut b) = (c, c);
                a[ax] = lo;
                b[ax] = hi;
                let d =
                    (src[vol.index(b[0], b[1], b[2])] - src[vol.index(a[0], a[1], a[2])]) / ((hi - lo) as f64 * sp[ax]);
                g2 += d * d;
            }
            g2.sqrt()
        })
        .collect();
    ScalarVolume::new(dims, sp, out).expect("same grid")
}

pub fn build_feature_volumes(heatmap: &ScalarVolume) -> FeatureStack {
    let s1 = gaussian_smooth(heatmap, 1.0);
    let s2 = gaussian_smooth(heatmap, 2.0);
    let mut grad = gradient_magnitude(&s1);
    let max = grad.data().iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in grad.data_mut() {
            *v /= max;
        }
    }
    FeatureStack::new(vec![heatmap.clone(), s1, s2, grad], FEATURE_CHANNELS.iter().map(|s| s.to_string()).collect())
        .expect("layers share the heatmap grid")
}

/// Mean of the 3x3x3 neighbourhood around the voxel containing `p`, with
/// coordinates clamped to the grid.
pub fn neighborhood_mean(layer: &ScalarVolume, p: &crate::geom::Vec3) -> f64 {
    let dims = layer.dims();
    let c = layer.clamped_voxel(p);
    let mut acc = 0.0;
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let x = (c[0] as isize + dx).clamp(0, dims[0] as isize - 1) as usize;
                let y = (c[1] as isize + dy).clamp(0, dims[1] as isize - 1) as usize;
                let z = (c[2] as isize + dz).clamp(0, dims[2] as isize - 1) as usize;
                acc += layer.get(x, y, z);
            }
        }
    }
    acc / 27.0
}

/// Per-segment features: for each layer, the mean over segment points of
/// the 27-voxel neighbourhood mean; layers concatenated in stack order.
pub fn aggregate_features(segments: &SegmentSet, stack: &FeatureStack) -> Result<Vec<Vec<f64>>> {
    segments
        .segments
        .iter()
        .map(|s| {
            if s.points.is_empty() {
                return Err(Error::InvalidParam(format!("segment {} has no points", s.id)));
            }
            Ok(stack
                .layers()
                .iter()
                .map(|layer| s.points.iter().map(|p| neighborhood_mean(layer, p)).sum::<f64>() / s.points.len() as f64)
                .collect())
        })
        .collect()
}
