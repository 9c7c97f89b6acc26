//! Centerline heatmap: exponential decay of the distance to the nearest
//! centerline, normalised so the centerline itself has value 1 and
//! everything farther than the heatmap radius is 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::SegmentIndex;
use crate::swc::VesselTree;
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapParams {
    /// Decay rate.
    pub alpha: f64,
    /// Heatmap radius in mm.
    pub d_max: f64,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self { alpha: 6.0, d_max: 5.0 }
    }
}

impl HeatmapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParam(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(Error::InvalidParam(format!("d_max must be > 0, got {}", self.d_max)));
        }
        Ok(())
    }

    /// Normalised heatmap value at centerline distance `d` (mm).
    ///
    /// `exp(alpha * (1 - d / d_max)) / exp(alpha)` inside the radius, which
    /// simplifies to `exp(-alpha * d / d_max)`.
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        if d <= self.d_max {
            (-self.alpha * d / self.d_max).exp()
        } else {
            0.0
        }
    }
}

pub fn compute_heatmap(
    tree: &VesselTree,
    dims: [usize; 3],
    spacing: [f64; 3],
    hp: &HeatmapParams,
) -> Result<ScalarVolume> {
    hp.validate()?;
    if tree.is_empty() {
        return Err(Error::InvalidParam("cannot compute a heatmap for an empty tree".into()));
    }
    let mut vol = ScalarVolume::zeros(dims, spacing)?;
    let index = SegmentIndex::new(tree.centerline_segments(), hp.d_max);
    let slice = dims[0] * dims[1];
    let grid = vol.clone();
    vol.data_mut().par_chunks_mut(slice.max(1)).enumerate().for_each(|(z, plane)| {
        for (k, v) in plane.iter_mut().enumerate() {
            let p = grid.voxel_center(z * slice + k);
            if let Some(d) = index.distance_within(&p, hp.d_max) {
                *v = hp.value(d);
            }
        }
    });
    Ok(vol)
}
