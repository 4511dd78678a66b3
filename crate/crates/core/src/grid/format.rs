//! OCCV grid files, OCCS sequence containers, raw label dumps and the
//! TOML sidecar.
//!
//! OCCV layout (little-endian, 24-byte header):
//!
//! | offset | type   | field          |
//! |--------|--------|----------------|
//! | 0      | [u8;4] | magic `OCCV`   |
//! | 4      | u16    | version = 1    |
//! | 6      | u8     | label_bits = 8 |
//! | 7      | u8     | reserved = 0   |
//! | 8      | u32×3  | dims x, y, z   |
//! | 20     | f32    | voxel size (m) |
//! | 24     | u8…    | labels, z-fastest |
//!
//! OCCS: magic `OCCS`, u16 version = 1, u16 reserved, u32 frame count,
//! f32 frame period (s), then the OCCV blocks back to back.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{checked_volume, ClassTable, OccGrid, OccSequence, DEFAULT_NUM_CLASSES};
use crate::binio::{read_file, write_file, Reader};
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"OCCV";
pub const SEQUENCE_MAGIC: &[u8; 4] = b"OCCS";
pub const GRID_HEADER_LEN: usize = 24;
pub const SEQUENCE_HEADER_LEN: usize = 16;
const VERSION: u16 = 1;
const LABEL_BITS: u8 = 8;

/// Frame period assumed for directories of loose `.occv` files.
pub const DEFAULT_FRAME_PERIOD_S: f32 = 0.5;

pub fn write_grid(grid: &OccGrid, out: &mut Vec<u8>) {
    out.reserve(GRID_HEADER_LEN + grid.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(LABEL_BITS);
    out.push(0);
    for d in grid.dims() {
        // checked_volume bounds every dim by 2^32
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.voxel_size_m().to_le_bytes());
    out.extend_from_slice(grid.labels());
}

fn read_grid_block(r: &mut Reader<'_>, num_classes: usize) -> Result<OccGrid> {
    r.magic(GRID_MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            what: "OCCV",
            version,
        });
    }
    let label_bits = r.u8()?;
    if label_bits != LABEL_BITS {
        return Err(Error::UnsupportedHeader {
            field: "label_bits",
            value: label_bits.into(),
        });
    }
    let reserved = r.u8()?;
    if reserved != 0 {
        return Err(Error::UnsupportedHeader {
            field: "reserved",
            value: reserved.into(),
        });
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let voxel_size = r.f32()?;
    let volume = checked_volume(dims)?;
    let labels = r.take(volume)?.to_vec();
    let grid = OccGrid::from_labels(dims, labels)?.with_voxel_size(voxel_size)?;
    grid.validate_labels(num_classes)?;
    Ok(grid)
}

/// Parses one OCCV buffer; trailing bytes are an error.
pub fn read_grid(bytes: &[u8], num_classes: usize) -> Result<OccGrid> {
    let mut r = Reader::new(bytes);
    let grid = read_grid_block(&mut r, num_classes)?;
    r.finish()?;
    Ok(grid)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<OccGrid> {
    load_grid_with_classes(path, DEFAULT_NUM_CLASSES)
}

pub fn load_grid_with_classes(path: impl AsRef<Path>, num_classes: usize) -> Result<OccGrid> {
    read_grid(&read_file(path.as_ref())?, num_classes)
}

pub fn save_grid(grid: &OccGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_grid(grid, &mut bytes);
    write_file(path.as_ref(), &bytes)
}

pub fn write_sequence(seq: &OccSequence, out: &mut Vec<u8>) {
    out.extend_from_slice(SEQUENCE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_period_s().to_le_bytes());
    for frame in seq.frames() {
        write_grid(frame, out);
    }
}

pub fn read_sequence(bytes: &[u8], num_classes: usize) -> Result<OccSequence> {
    let mut r = Reader::new(bytes);
    r.magic(SEQUENCE_MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            what: "OCCS",
            version,
        });
    }
    let reserved = r.u16()?;
    if reserved != 0 {
        return Err(Error::UnsupportedHeader {
            field: "reserved",
            value: reserved.into(),
        });
    }
    let count = r.u32()? as usize;
    let period = r.f32()?;
    if count == 0 {
        return Err(Error::EmptySequence);
    }
    // no preallocation from the untrusted count
    let mut frames = Vec::new();
    for _ in 0..count {
        frames.push(read_grid_block(&mut r, num_classes)?);
    }
    r.finish()?;
    OccSequence::new(frames, period)
}

/// Loads an OCCS container, or a directory of `.occv` files taken in
/// file-name order.
pub fn load_sequence(path: impl AsRef<Path>, num_classes: usize) -> Result<OccSequence> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "occv"))
            .collect();
        files.sort();
        let frames = files
            .iter()
            .map(|f| load_grid_with_classes(f, num_classes))
            .collect::<Result<Vec<_>>>()?;
        OccSequence::new(frames, DEFAULT_FRAME_PERIOD_S)
    } else {
        read_sequence(&read_file(path)?, num_classes)
    }
}

pub fn save_sequence(seq: &OccSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_sequence(seq, &mut bytes);
    write_file(path.as_ref(), &bytes)
}

/// Reads a headerless label dump in OCCV axis order.
pub fn import_raw(path: impl AsRef<Path>, dims: [usize; 3], num_classes: usize) -> Result<OccGrid> {
    let bytes = read_file(path.as_ref())?;
    let volume = checked_volume(dims)?;
    if bytes.len() != volume {
        return Err(Error::SizeMismatch {
            expected: volume as u64,
            found: bytes.len() as u64,
        });
    }
    let grid = OccGrid::from_labels(dims, bytes)?;
    grid.validate_labels(num_classes)?;
    Ok(grid)
}

pub fn export_raw(grid: &OccGrid, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), grid.labels())
}

/// Metadata that the binary formats do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub origin_m: [f32; 3],
    pub classes: ClassTable,
}

impl Default for Sidecar {
    fn default() -> Self {
        Self {
            origin_m: [0.0; 3],
            classes: ClassTable::default(),
        }
    }
}

pub fn write_sidecar(sidecar: &Sidecar, path: impl AsRef<Path>) -> Result<()> {
    let text = toml::to_string(sidecar).map_err(|e| Error::InvalidMetadata(e.to_string()))?;
    write_file(path.as_ref(), text.as_bytes())
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar =
        toml::from_str(&text).map_err(|e| Error::InvalidMetadata(e.to_string()))?;
    // re-run the table's own checks
    ClassTable::new(
        sidecar.classes.names().to_vec(),
        (0..sidecar.classes.num_classes())
            .map(|i| sidecar.classes.is_evaluable(i as u8))
            .collect(),
    )?;
    Ok(sidecar)
}
