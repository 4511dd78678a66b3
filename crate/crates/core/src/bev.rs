//! Bird's-eye-view projections of an occupancy grid.
//!
//! Both maps are indexed like the grid's columns: cell `(x, y)` lives at
//! `x * height + y`, where `width = dims_x` and `height = dims_y`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::OccGrid;

/// Height value of a column with no occupied voxel.
pub const EMPTY_COLUMN: i32 = -1;

/// Topmost occupied z per column, [`EMPTY_COLUMN`] where the column is free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevMap {
    width: usize,
    height: usize,
    depth: usize,
    heights: Vec<i32>,
}

/// Label of the topmost occupied voxel per column, 0 where the column is free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevLabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl BevMap {
    /// Builds a map from raw heights; `depth` is the grid's `dims_z`.
    pub fn from_heights(
        width: usize,
        height: usize,
        depth: usize,
        heights: Vec<i32>,
    ) -> Result<Self> {
        if heights.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: (width * height) as u64,
                found: heights.len() as u64,
            });
        }
        if let Some(&bad) = heights
            .iter()
            .find(|&&h| h != EMPTY_COLUMN && !(0..depth as i64).contains(&(h as i64)))
        {
            return Err(Error::InvalidParams(format!(
                "height {bad} outside [0, {depth}) and not the empty sentinel"
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            heights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Vertical extent of the source grid; the block matcher's sentinel penalty.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn heights(&self) -> &[i32] {
        &self.heights
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.heights[x * self.height + y]
    }
}

impl BevLabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[x * self.height + y]
    }
}

#[inline]
fn top_of(column: &[u8]) -> Option<usize> {
    column.iter().rposition(|&l| l != 0)
}

pub fn project_height(grid: &OccGrid) -> BevMap {
    let [dx, dy, dz] = grid.dims();
    let heights = grid
        .labels()
        .par_chunks(dz)
        .map(|col| top_of(col).map_or(EMPTY_COLUMN, |z| z as i32))
        .collect();
    BevMap {
        width: dx,
        height: dy,
        depth: dz,
        heights,
    }
}

pub fn project_label(grid: &OccGrid) -> BevLabelMap {
    let [dx, dy, dz] = grid.dims();
    let labels = grid
        .labels()
        .par_chunks(dz)
        .map(|col| top_of(col).map_or(0, |z| col[z]))
        .collect();
    BevLabelMap {
        width: dx,
        height: dy,
        labels,
    }
}

/// Occupied voxels of column `(x, y)` as `(z, label)`, ascending z.
pub fn column(grid: &OccGrid, x: usize, y: usize) -> Result<Vec<(usize, u8)>> {
    let [dx, dy, _] = grid.dims();
    if x >= dx || y >= dy {
        return Err(Error::IndexOutOfRange {
            x,
            y,
            width: dx,
            height: dy,
        });
    }
    Ok(grid
        .column_slice(x, y)
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0)
        .map(|(z, &l)| (z, l))
        .collect())
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples) of the height
/// map. Image row `r` is `y = r`, column `c` is `x = c`; each sample is the
/// top voxel index plus one, so 0 marks an empty column.
pub fn height_pgm(map: &BevMap) -> Vec<u8> {
    let mut out = format!(
        "P5\n# occflow height map: sample = top z + 1, 0 = empty column\n{} {}\n65535\n",
        map.width, map.height
    )
    .into_bytes();
    out.reserve(2 * map.heights.len());
    for y in 0..map.height {
        for x in 0..map.width {
            out.extend_from_slice(&((map.get(x, y) + 1) as u16).to_be_bytes());
        }
    }
    out
}

/// Label map as CSV: one line per `y`, one comma-separated label per `x`.
pub fn labels_csv(map: &BevLabelMap) -> String {
    let mut out = String::with_capacity(map.labels.len() * 3);
    for y in 0..map.height {
        for x in 0..map.width {
            if x > 0 {
                out.push(',');
            }
            out.push_str(&map.get(x, y).to_string());
        }
        out.push('\n');
    }
    out
}
