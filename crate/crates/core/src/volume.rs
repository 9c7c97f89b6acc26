//! Scalar voxel volumes and the raw `CVOL` file format.
//!
//! Voxels are cell-centred: voxel `i` along an axis covers
//! `[i * spacing, (i + 1) * spacing)` in world millimetres and its centre sits
//! at `(i + 0.5) * spacing`. Data are stored x-fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const CVOL_MAGIC: &[u8; 4] = b"CVOL";
pub const CVOL_VERSION: u32 = 1;
pub const CVOL_HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "volume data has {} values, dims {:?} need {}",
                data.len(),
                dims,
                n
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParam(format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, vec![0.0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// World position (mm) of the centre of voxel `index`.
    pub fn voxel_center(&self, index: usize) -> Vec3 {
        let c = self.coords(index);
        Vec3::new(
            (c[0] as f64 + 0.5) * self.spacing[0],
            (c[1] as f64 + 0.5) * self.spacing[1],
            (c[2] as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Continuous voxel coordinates of a world position; the exact inverse
    /// of the centre mapping (`world / spacing - 0.5`).
    pub fn world_to_continuous(&self, p: &Vec3) -> Vec3 {
        Vec3::new(p[0] / self.spacing[0] - 0.5, p[1] / self.spacing[1] - 0.5, p[2] / self.spacing[2] - 0.5)
    }

    pub fn continuous_to_world(&self, c: &Vec3) -> Vec3 {
        Vec3::new((c[0] + 0.5) * self.spacing[0], (c[1] + 0.5) * self.spacing[1], (c[2] + 0.5) * self.spacing[2])
    }

    /// Integer coordinates of the voxel containing `p`, or `None` outside.
    pub fn containing_voxel(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for ax in 0..3 {
            let f = (p[ax] / self.spacing[ax]).floor();
            if !(f >= 0.0 && f < self.dims[ax] as f64) {
                return None;
            }
            c[ax] = f as usize;
        }
        Some(c)
    }

    /// Containing voxel with coordinates clamped into the grid.
    pub fn clamped_voxel(&self, p: &Vec3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for ax in 0..3 {
            let f = (p[ax] / self.spacing[ax]).floor();
            c[ax] = if f.is_nan() { 0.0 } else { f.clamp(0.0, (self.dims[ax] - 1) as f64) } as usize;
        }
        c
    }

    /// Physical extent of the grid in mm.
    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        )
    }

    pub fn same_grid(&self, other: &ScalarVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Round every value (and the spacing) to the nearest `f32`, so that the
    /// in-memory volume equals what a write/read cycle produces.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
        for s in &mut self.spacing {
            *s = *s as f32 as f64;
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())?;
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(CVOL_HEADER_LEN + 4 * self.data.len());
        buf.extend_from_slice(CVOL_MAGIC);
        buf.extend_from_slice(&CVOL_VERSION.to_le_bytes());
        for d in self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for s in self.spacing {
            buf.extend_from_slice(&(s as f32).to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::VolumeFormat(format!("read failed: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CVOL_HEADER_LEN {
            return Err(Error::VolumeFormat(format!(
                "truncated header: {} bytes, need {CVOL_HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != CVOL_MAGIC {
            return Err(Error::VolumeFormat("magic mismatch, expected CVOL".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != CVOL_VERSION {
            return Err(Error::VolumeFormat(format!("unsupported version {version}")));
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
        let spacing = [f32_at(20) as f64, f32_at(24) as f64, f32_at(28) as f64];
        let n = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::VolumeFormat(format!("dims {dims:?} overflow")))?;
        let payload = &bytes[CVOL_HEADER_LEN..];
        if payload.len() != 4 * n {
            return Err(Error::VolumeFormat(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                4 * n
            )));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        Self::new(dims, spacing, data).map_err(|e| Error::VolumeFormat(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Ordered stack of same-grid volumes used as per-voxel node features.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    layers: Vec<ScalarVolume>,
    channel_names: Vec<String>,
}

impl FeatureStack {
    pub fn new(layers: Vec<ScalarVolume>, channel_names: Vec<String>) -> Result<Self> {
        if layers.len() != channel_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} layers but {} channel names",
                layers.len(),
                channel_names.len()
            )));
        }
        if let Some(first) = layers.first() {
            if let Some(bad) = layers.iter().position(|l| !l.same_grid(first)) {
                return Err(Error::DimensionMismatch(format!("feature layer {bad} grid differs from layer 0")));
            }
        }
        Ok(Self { layers, channel_names })
    }

    /// Load externally computed feature layers (one `CVOL` file per layer).
    pub fn from_files(paths: &[&Path]) -> Result<Self> {
        let layers = paths.iter().map(|p| ScalarVolume::load(p)).collect::<Result<Vec<_>>>()?;
        let names =
            paths.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect();
        Self::new(layers, names)
    }

    pub fn layers(&self) -> &[ScalarVolume] {
        &self.layers
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_round_trip_with_header() {
        let v = ScalarVolume::zeros([2, 2, 2], [1.0, 1.0, 1.0]).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(bytes.len(), CVOL_HEADER_LEN + 8 * 4);
        assert_eq!(CVOL_HEADER_LEN, 4 + 4 + 3 * 4 + 3 * 4);
        assert_eq!(&bytes[..4], b"CVOL");
        assert_eq!(ScalarVolume::from_bytes(&bytes).unwrap(), v);
    }

    #[test]
    fn small_line_round_trip() {
        let v = ScalarVolume::new([3, 1, 1], [1.0, 2.0, 0.5], vec![0.0, 0.5, 1.0]).unwrap();
        let back = ScalarVolume::read_from(&v.to_bytes()[..]).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_bad_files() {
        let v = ScalarVolume::zeros([2, 2, 2], [1.0, 1.0, 1.0]).unwrap();
        let mut bytes = v.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(ScalarVolume::from_bytes(&bytes), Err(Error::VolumeFormat(_))));
        let bytes = v.to_bytes();
        assert!(ScalarVolume::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(ScalarVolume::from_bytes(&bytes[..10]).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0, 0, 0, 0]);
        assert!(ScalarVolume::from_bytes(&extra).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(ScalarVolume::new([2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(ScalarVolume::new([1, 1, 1], [1.0, 0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn random_64_cube_is_byte_stable() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data = (0..64 * 64 * 64).map(|_| rng.random::<f64>()).collect();
        let v = ScalarVolume::new([64, 64, 64], [1.0, 0.7, 1.3], data).unwrap();
        let first = v.to_bytes();
        let second = ScalarVolume::from_bytes(&first).unwrap().to_bytes();
        assert_eq!(first, second);
    }

    #[test]
    fn feature_stack_requires_common_grid() {
        let a = ScalarVolume::zeros([2, 2, 2], [1.0; 3]).unwrap();
        let b = ScalarVolume::zeros([2, 2, 3], [1.0; 3]).unwrap();
        assert!(FeatureStack::new(vec![a.clone(), b], vec!["a".into(), "b".into()]).is_err());
        assert!(FeatureStack::new(vec![a.clone(), a], vec!["a".into(), "b".into()]).is_ok());
    }

    proptest! {
        #[test]
        fn world_voxel_conversion_composes_to_identity(
            x in 0usize..50, y in 0usize..50, z in 0usize..50,
            sx in 0.1f64..3.0, sy in 0.1f64..3.0, sz in 0.1f64..3.0,
        ) {
            let v = ScalarVolume::zeros([50, 50, 50], [sx, sy, sz]).unwrap();
            let idx = v.index(x, y, z);
            let w = v.voxel_center(idx);
            let c = v.world_to_continuous(&w);
            prop_assert!((c[0] - x as f64).abs() < 1e-9);
            prop_assert!((c[1] - y as f64).abs() < 1e-9);
            prop_assert!((c[2] - z as f64).abs() < 1e-9);
            let back = v.continuous_to_world(&c);
            prop_assert!((back - w).norm() < 1e-9);
            prop_assert_eq!(v.containing_voxel(&w), Some([x, y, z]));
        }
    }
}
