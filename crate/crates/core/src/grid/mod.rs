//! Dense semantic occupancy grids and sequences of them.
//!
//! Voxels are stored z-fastest: the linear index of `(x, y, z)` is
//! `((x * dims_y) + y) * dims_z + z`, so a vertical column is one contiguous
//! slice. Label `0` is free space.

mod classes;
pub mod format;

pub use classes::{ClassTable, DEFAULT_NUM_CLASSES, FREE_CLASS, GENERAL_OBJECT_CLASS};
pub use format::{
    export_raw, import_raw, load_grid, load_grid_with_classes, load_sequence, read_grid,
    read_sequence, read_sidecar, save_grid, save_sequence, write_grid, write_sequence,
    write_sidecar, Sidecar,
};

use crate::error::{Error, Result};

/// Largest voxel count a grid may hold (the on-disk format counts in u32).
pub const MAX_VOXELS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct OccGrid {
    dims: [usize; 3],
    voxel_size_m: f32,
    origin_m: [f32; 3],
    labels: Vec<u8>,
}

pub(crate) fn checked_volume(dims: [usize; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::ZeroDims(dims));
    }
    let wide = dims.map(|d| d as u64);
    let volume = wide[0]
        .checked_mul(wide[1])
        .and_then(|v| v.checked_mul(wide[2]))
        .filter(|&v| v <= MAX_VOXELS)
        .ok_or(Error::DimsOverflow(wide))?;
    usize::try_from(volume).map_err(|_| Error::DimsOverflow(wide))
}

impl OccGrid {
    /// All-free grid with the default 0.4 m voxels at the origin.
    pub fn empty(dims: [usize; 3]) -> Result<Self> {
        let volume = checked_volume(dims)?;
        Ok(Self {
            dims,
            voxel_size_m: 0.4,
            origin_m: [0.0; 3],
            labels: vec![0; volume],
        })
    }

    /// Wraps an existing label buffer. Labels are not range-checked here;
    /// see [`OccGrid::validate_labels`].
    pub fn from_labels(dims: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        let volume = checked_volume(dims)?;
        if labels.len() != volume {
            return Err(Error::SizeMismatch {
                expected: volume as u64,
                found: labels.len() as u64,
            });
        }
        Ok(Self {
            dims,
            voxel_size_m: 0.4,
            origin_m: [0.0; 3],
            labels,
        })
    }

    pub fn with_voxel_size(mut self, voxel_size_m: f32) -> Result<Self> {
        if !(voxel_size_m.is_finite() && voxel_size_m > 0.0) {
            return Err(Error::InvalidMetadata(format!(
                "voxel size must be positive, got {voxel_size_m}"
            )));
        }
        self.voxel_size_m = voxel_size_m;
        Ok(self)
    }

    pub fn with_origin(mut self, origin_m: [f32; 3]) -> Self {
        self.origin_m = origin_m;
        self
    }

    /// Checks every label against `num_classes`, reporting the first offender.
    pub fn validate_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l as usize >= num_classes) {
            None => Ok(()),
            Some(i) => {
                let [x, y, z] = self.coords(i);
                Err(Error::LabelOutOfRange {
                    x,
                    y,
                    z,
                    value: self.labels[i],
                })
            }
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size_m(&self) -> f32 {
        self.voxel_size_m
    }

    pub fn origin_m(&self) -> [f32; 3] {
        self.origin_m
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let z = index % self.dims[2];
        let column = index / self.dims[2];
        [column / self.dims[1], column % self.dims[1], z]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        let i = self.index(x, y, z);
        self.labels[i] = label;
    }

    /// The vertical column at `(x, y)`, bottom first.
    #[inline]
    pub fn column_slice(&self, x: usize, y: usize) -> &[u8] {
        let start = self.index(x, y, 0);
        &self.labels[start..start + self.dims[2]]
    }

    #[inline]
    pub fn column_slice_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let start = self.index(x, y, 0);
        let dz = self.dims[2];
        &mut self.labels[start..start + dz]
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Same dims, voxel size and origin.
    pub fn same_layout(&self, other: &OccGrid) -> bool {
        self.dims == other.dims
            && self.voxel_size_m == other.voxel_size_m
            && self.origin_m == other.origin_m
    }

    /// Grid with identical layout and the given labels.
    pub(crate) fn with_same_layout(&self, labels: Vec<u8>) -> OccGrid {
        debug_assert_eq!(labels.len(), self.labels.len());
        OccGrid {
            dims: self.dims,
            voxel_size_m: self.voxel_size_m,
            origin_m: self.origin_m,
            labels,
        }
    }
}

/// Ordered frames sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OccSequence {
    frames: Vec<OccGrid>,
    frame_period_s: f32,
}

impl OccSequence {
    pub fn new(frames: Vec<OccGrid>, frame_period_s: f32) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        if !(frame_period_s.is_finite() && frame_period_s > 0.0) {
            return Err(Error::InvalidMetadata(format!(
                "frame period must be positive, got {frame_period_s}"
            )));
        }
        for (index, frame) in frames.iter().enumerate().skip(1) {
            if frame.dims() != first.dims() {
                return Err(Error::FrameDimMismatch {
                    index,
                    expected: first.dims(),
                    found: frame.dims(),
                });
            }
            if !frame.same_layout(first) {
                return Err(Error::InvalidMetadata(format!(
                    "frame {index} voxel size or origin differs from frame 0"
                )));
            }
        }
        Ok(Self {
            frames,
            frame_period_s,
        })
    }

    pub fn frames(&self) -> &[OccGrid] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<OccGrid> {
        self.frames
    }

    pub fn frame_period_s(&self) -> f32 {
        self.frame_period_s
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.frames[0].dims()
    }

    pub fn last(&self) -> &OccGrid {
        self.frames.last().expect("sequence is never empty")
    }

    /// Frames `range` as a new sequence with the same period.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let frames = self
            .frames
            .get(range.clone())
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "frame range {range:?} exceeds sequence of {}",
                    self.frames.len()
                ))
            })?
            .to_vec();
        Self::new(frames, self.frame_period_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_grid_is_all_free() {
        let g = OccGrid::empty([3, 4, 5]).unwrap();
        assert_eq!(g.len(), 60);
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(OccGrid::empty([0, 4, 5]), Err(Error::ZeroDims(_))));
    }

    #[test]
    fn overflowing_dims_rejected() {
        assert!(matches!(
            checked_volume([1 << 16, 1 << 16, 2]),
            Err(Error::DimsOverflow(_))
        ));
        assert_eq!(checked_volume([1 << 16, 1 << 16, 1]).unwrap(), 1 << 32);
    }

    #[test]
    fn label_validation_reports_coordinates() {
        let mut g = OccGrid::empty([2, 3, 4]).unwrap();
        g.set(1, 2, 3, 200);
        match g.validate_labels(18) {
            Err(Error::LabelOutOfRange { x, y, z, value }) => {
                assert_eq!((x, y, z, value), (1, 2, 3, 200))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn column_is_contiguous() {
        let mut g = OccGrid::empty([2, 2, 3]).unwrap();
        g.set(1, 0, 0, 4);
        g.set(1, 0, 2, 5);
        assert_eq!(g.column_slice(1, 0), &[4, 0, 5]);
    }

    #[test]
    fn sequence_rejects_mismatched_frames() {
        let a = OccGrid::empty([2, 2, 2]).unwrap();
        let b = OccGrid::empty([2, 2, 3]).unwrap();
        assert!(matches!(
            OccSequence::new(vec![a.clone(), b], 0.5),
            Err(Error::FrameDimMismatch { index: 1, .. })
        ));
        assert!(matches!(
            OccSequence::new(vec![], 0.5),
            Err(Error::EmptySequence)
        ));
        assert_eq!(OccSequence::new(vec![a], 0.5).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn index_is_a_bijection(dx in 1usize..7, dy in 1usize..7, dz in 1usize..7) {
            let g = OccGrid::empty([dx, dy, dz]).unwrap();
            let mut seen = vec![false; g.len()];
            for x in 0..dx {
                for y in 0..dy {
                    for z in 0..dz {
                        let i = g.index(x, y, z);
                        prop_assert!(i < g.len());
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                        prop_assert_eq!(g.coords(i), [x, y, z]);
                    }
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
