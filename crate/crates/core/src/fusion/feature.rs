//! Per-voxel class-score volumes and the FEAT dump format.
//!
//! FEAT layout (little-endian): magic `FEAT`, u32 dims x, y, z, u32 class
//! count C, then `x*y*z*C` f32 scores, voxel-major (grid order) and
//! channel-minor.

use std::path::Path;

use crate::binio::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::grid::{checked_volume, OccGrid};

pub const FEAT_MAGIC: &[u8; 4] = b"FEAT";

/// Tolerance on per-voxel sums for probability-mode grids.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    dims: [usize; 3],
    num_classes: usize,
    scores: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(dims: [usize; 3], num_classes: usize, scores: Vec<f64>) -> Result<Self> {
        let volume = checked_volume(dims)?;
        if num_classes == 0 {
            return Err(Error::InvalidParams(
                "feature grid needs at least one class".into(),
            ));
        }
        let expected = volume
            .checked_mul(num_classes)
            .ok_or(Error::DimsOverflow(dims.map(|d| d as u64)))?;
        if scores.len() != expected {
            return Err(Error::SizeMismatch {
                expected: expected as u64,
                found: scores.len() as u64,
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParams("feature scores must be finite".into()));
        }
        Ok(Self {
            dims,
            num_classes,
            scores,
        })
    }

    pub fn zeros(dims: [usize; 3], num_classes: usize) -> Result<Self> {
        let volume = checked_volume(dims)?;
        Self::new(dims, num_classes, vec![0.0; volume * num_classes])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn voxels(&self) -> usize {
        self.scores.len() / self.num_classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    /// Scores of voxel `v` (grid linear index).
    #[inline]
    pub fn voxel(&self, v: usize) -> &[f64] {
        &self.scores[v * self.num_classes..(v + 1) * self.num_classes]
    }

    pub fn same_shape(&self, other: &FeatureGrid) -> bool {
        self.dims == other.dims && self.num_classes == other.num_classes
    }

    pub(crate) fn require_same_shape(&self, other: &FeatureGrid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimMismatch(format!(
                "feature grids {:?}x{} and {:?}x{}",
                self.dims, self.num_classes, other.dims, other.num_classes
            )))
        }
    }

    pub(crate) fn require_matches(&self, grid: &OccGrid) -> Result<()> {
        if self.dims == grid.dims() {
            Ok(())
        } else {
            Err(Error::DimMismatch(format!(
                "feature grid {:?} vs label grid {:?}",
                self.dims,
                grid.dims()
            )))
        }
    }

    /// Whether every voxel is a distribution (non-negative, sums to 1).
    pub fn is_probability(&self, tol: f64) -> bool {
        self.scores
            .chunks(self.num_classes)
            .all(|p| p.iter().all(|&s| s >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    pub(crate) fn require_probability(&self) -> Result<()> {
        if self.is_probability(PROBABILITY_TOLERANCE) {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                "scores are not per-voxel probability distributions".into(),
            ))
        }
    }
}

pub fn write_feature(f: &FeatureGrid, out: &mut Vec<u8>) {
    out.reserve(20 + 4 * f.scores.len());
    out.extend_from_slice(FEAT_MAGIC);
    for d in f.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(f.num_classes as u32).to_le_bytes());
    for &s in &f.scores {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
}

pub fn read_feature(bytes: &[u8]) -> Result<FeatureGrid> {
    let mut r = Reader::new(bytes);
    r.magic(FEAT_MAGIC)?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let num_classes = r.u32()? as usize;
    let volume = checked_volume(dims)? as u64;
    let needed = volume * num_classes as u64 * 4;
    if (r.remaining() as u64) < needed {
        return Err(Error::TruncatedFile {
            needed: 20 + needed,
            available: bytes.len() as u64,
        });
    }
    let scores = r
        .take(needed as usize)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    r.finish()?;
    FeatureGrid::new(dims, num_classes, scores)
}

pub fn save_feature(f: &FeatureGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_feature(f, &mut bytes);
    write_file(path.as_ref(), &bytes)
}

pub fn load_feature(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    read_feature(&read_file(path.as_ref())?)
}
