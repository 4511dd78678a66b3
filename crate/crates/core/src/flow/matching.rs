use rayon::prelude::*;

use super::{Correspondence, FlowParams};
use crate::bev::{BevMap, EMPTY_COLUMN};
use crate::error::{Error, Result};

/// Population variance of a block's heights, empty columns counted as -1.
fn block_variance(map: &BevMap, cx: usize, cy: usize, half: usize) -> f64 {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for x in cx - half..=cx + half {
        for y in cy - half..=cy + half {
            let h = map.get(x, y) as f64;
            sum += h;
            sum_sq += h * h;
        }
    }
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

#[inline]
fn cell_cost(a: i32, b: i32, penalty: u64) -> u64 {
    match (a == EMPTY_COLUMN, b == EMPTY_COLUMN) {
        (true, true) => 0,
        (false, false) => {
            let d = (a - b).unsigned_abs() as u64;
            d * d
        }
        _ => penalty,
    }
}

fn ssd(
    b0: &BevMap,
    b1: &BevMap,
    c: (usize, usize),
    t: (usize, usize),
    half: usize,
    penalty: u64,
) -> u64 {
    let mut total = 0;
    for i in 0..=2 * half {
        for j in 0..=2 * half {
            total += cell_cost(
                b0.get(c.0 - half + i, c.1 - half + j),
                b1.get(t.0 - half + i, t.1 - half + j),
                penalty,
            );
        }
    }
    total
}

/// Block centers whose full window fits inside the map, spaced one block apart.
fn lattice(extent: usize, block: usize) -> impl Iterator<Item = usize> {
    let half = block / 2;
    (half..extent.saturating_sub(half)).step_by(block)
}

/// Integer block matching from `b0` into `b1`.
///
/// Every lattice block whose height variance reaches `min_texture` yields one
/// correspondence: the offset within `search_radius` minimizing the sum of
/// squared height differences, where a cell pairing an empty column with an
/// occupied one costs `dims_z`. Ties go to the shorter offset, then to the
/// first in (dy, dx) scan order. Candidate windows must lie inside `b1`.
pub fn match_blocks(b0: &BevMap, b1: &BevMap, params: &FlowParams) -> Result<Vec<Correspondence>> {
    params.validate()?;
    if (b0.width(), b0.height(), b0.depth()) != (b1.width(), b1.height(), b1.depth()) {
        return Err(Error::DimMismatch(format!(
            "BEV maps {}x{}x{} and {}x{}x{}",
            b0.width(),
            b0.height(),
            b0.depth(),
            b1.width(),
            b1.height(),
            b1.depth()
        )));
    }
    let half = params.block_size / 2;
    let radius = params.search_radius as isize;
    let penalty = b0.depth() as u64;
    let (w, h) = (b0.width() as isize, b0.height() as isize);

    let centers: Vec<(usize, usize)> = lattice(b0.width(), params.block_size)
        .flat_map(|x| lattice(b0.height(), params.block_size).map(move |y| (x, y)))
        .collect();

    let corrs = centers
        .par_iter()
        .filter(|&&(cx, cy)| block_variance(b0, cx, cy, half) >= params.min_texture)
        .filter_map(|&(cx, cy)| {
            let mut best: Option<(u64, isize, isize, isize)> = None;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (tx, ty) = (cx as isize + dx, cy as isize + dy);
                    let hi = half as isize;
                    if tx - hi < 0 || ty - hi < 0 || tx + hi >= w || ty + hi >= h {
                        continue;
                    }
                    let cost = ssd(b0, b1, (cx, cy), (tx as usize, ty as usize), half, penalty);
                    let dist = dx * dx + dy * dy;
                    let better = match best {
                        None => true,
                        Some((bc, bd, _, _)) => (cost, dist) < (bc, bd),
                    };
                    if better {
                        best = Some((cost, dist, dx, dy));
                    }
                }
            }
            best.map(|(cost, _, dx, dy)| Correspondence {
                src: [cx as f64, cy as f64],
                dst: [(cx as isize + dx) as f64, (cy as isize + dy) as f64],
                score: cost as f64,
            })
        })
        .collect();
    Ok(corrs)
}
