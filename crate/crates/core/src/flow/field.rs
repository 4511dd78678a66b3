//! Dense per-cell displacement fields and the FLOW raster format.
//!
//! FLOW layout (little-endian): magic `FLOW`, u32 width, u32 height, then
//! `width * height` pairs of f32 `(dx, dy)`, cells ordered x-major
//! (cell `(x, y)` at index `x * height + y`), matching the grid's columns.

use std::path::Path;

use super::{Correspondence, Homography};
use crate::binio::{read_file, write_file, Reader};
use crate::error::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"FLOW";

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: (width * height) as u64,
                found: vectors.len() as u64,
            });
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("flow vectors must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[x * self.height + y]
    }
}

/// Per-cell displacement `π(M·[x, y, 1]ᵀ) − (x, y)`.
pub fn flow_field(h: &Homography, width: usize, height: usize) -> Result<FlowField> {
    let mut vectors = Vec::with_capacity(width * height);
    for x in 0..width {
        for y in 0..height {
            let (px, py) = (x as f64, y as f64);
            let [qx, qy] = h.apply_or_err(px, py)?;
            vectors.push([qx - px, qy - py]);
        }
    }
    FlowField::new(width, height, vectors)
}

pub fn write_flow(field: &FlowField, out: &mut Vec<u8>) {
    out.reserve(12 + 8 * field.vectors.len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(field.width as u32).to_le_bytes());
    out.extend_from_slice(&(field.height as u32).to_le_bytes());
    for v in &field.vectors {
        out.extend_from_slice(&(v[0] as f32).to_le_bytes());
        out.extend_from_slice(&(v[1] as f32).to_le_bytes());
    }
}

pub fn read_flow(bytes: &[u8]) -> Result<FlowField> {
    let mut r = Reader::new(bytes);
    r.magic(FLOW_MAGIC)?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let cells = (width as u64) * (height as u64);
    let needed = cells * 8;
    if (r.remaining() as u64) < needed {
        return Err(Error::TruncatedFile {
            needed: 12 + needed,
            available: bytes.len() as u64,
        });
    }
    let mut vectors = Vec::with_capacity(cells as usize);
    for _ in 0..cells {
        vectors.push([r.f32()? as f64, r.f32()? as f64]);
    }
    r.finish()?;
    FlowField::new(width, height, vectors)
}

pub fn save_flow(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_flow(field, &mut bytes);
    write_file(path.as_ref(), &bytes)
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    read_flow(&read_file(path.as_ref())?)
}

/// CSV with header `src_x,src_y,dst_x,dst_y,score,inlier`.
pub fn correspondences_csv(corrs: &[Correspondence], inliers: Option<&[bool]>) -> String {
    let mut out = String::from("src_x,src_y,dst_x,dst_y,score,inlier\n");
    for (i, c) in corrs.iter().enumerate() {
        let inlier = inliers.map_or(String::new(), |m| (m[i] as u8).to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.src[0], c.src[1], c.dst[0], c.dst[1], c.score, inlier
        ));
    }
    out
}
