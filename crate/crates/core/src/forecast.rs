//! Coarse future frames from the latest frame and the BEV flow.
//!
//! Whole columns move together: every voxel above a BEV cell shares that
//! cell's planar displacement, and nothing moves along z.

use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev::project_height;
use crate::error::{Error, Result};
use crate::flow::{compose, estimate_flow, FlowParams, Homography};
use crate::grid::{OccGrid, OccSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpMode {
    /// Pull each target column from the nearest inverse-mapped source.
    #[default]
    BackwardNn,
    /// Push occupied source columns to their rounded targets, then fill
    /// untouched targets with one backward pass.
    ForwardSplat,
}

impl FromStr for WarpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward" | "backward_nn" => Ok(WarpMode::BackwardNn),
            "forward" | "forward_splat" => Ok(WarpMode::ForwardSplat),
            other => Err(Error::InvalidParams(format!("unknown warp mode {other:?}"))),
        }
    }
}

impl fmt::Display for WarpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarpMode::BackwardNn => "backward_nn",
            WarpMode::ForwardSplat => "forward_splat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastParams {
    pub horizon: usize,
    pub warp: WarpMode,
    pub flow: FlowParams,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            horizon: 4,
            warp: WarpMode::default(),
            flow: FlowParams::default(),
        }
    }
}

#[inline]
fn round_in_bounds(p: [f64; 2], width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (p[0].round(), p[1].round());
    (x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64)
        .then_some((x as usize, y as usize))
}

/// Source column feeding each target column under backward sampling;
/// `None` marks an out-of-bounds source.
fn backward_sources(
    h_inv: &Homography,
    width: usize,
    height: usize,
) -> Result<Vec<Option<(usize, usize)>>> {
    (0..width * height)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i / height) as f64, (i % height) as f64);
            let src = h_inv.apply_or_err(x, y)?;
            Ok(round_in_bounds(src, width, height))
        })
        .collect()
}

fn gather(grid: &OccGrid, sources: &[Option<(usize, usize)>]) -> OccGrid {
    let dz = grid.dims()[2];
    let mut labels = vec![0u8; grid.len()];
    labels
        .par_chunks_mut(dz)
        .zip(sources.par_iter())
        .for_each(|(dst, src)| {
            if let Some((sx, sy)) = *src {
                dst.copy_from_slice(grid.column_slice(sx, sy));
            }
        });
    grid.with_same_layout(labels)
}

/// Moves every column of `grid` by `h` (frame-0 to frame-1 coordinates).
pub fn warp_grid(grid: &OccGrid, h: &Homography, mode: WarpMode) -> Result<OccGrid> {
    let [dx, dy, _] = grid.dims();
    let mut sources = backward_sources(&h.inverse(), dx, dy)?;
    if mode == WarpMode::ForwardSplat {
        // (occupied voxels, source) of the current winner per target
        let mut winners: Vec<Option<(usize, (usize, usize))>> = vec![None; dx * dy];
        for x in 0..dx {
            for y in 0..dy {
                let count = grid.column_slice(x, y).iter().filter(|&&l| l != 0).count();
                if count == 0 {
                    continue;
                }
                let target = h.apply_or_err(x as f64, y as f64)?;
                if let Some((tx, ty)) = round_in_bounds(target, dx, dy) {
                    let slot = &mut winners[tx * dy + ty];
                    // strict comparison keeps the earlier (smaller x, then y) source on ties
                    if slot.is_none_or(|(c, _)| count > c) {
                        *slot = Some((count, (x, y)));
                    }
                }
            }
        }
        for (source, winner) in sources.iter_mut().zip(winners) {
            if let Some((_, src)) = winner {
                *source = Some(src);
            }
        }
    }
    Ok(gather(grid, &sources))
}

/// `horizon` copies of the last frame.
pub fn copy_paste(history: &OccSequence, horizon: usize) -> Result<OccSequence> {
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be >= 1".into()));
    }
    OccSequence::new(
        vec![history.last().clone(); horizon],
        history.frame_period_s(),
    )
}

/// Why a forecast degraded to Copy&Paste.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fallback {
    pub code: &'static str,
    pub message: String,
}

impl From<&Error> for Fallback {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub frames: OccSequence,
    /// Per-frame motion used for the warp; identity after a fallback.
    pub homography: Homography,
    pub correspondences: usize,
    pub inliers: usize,
    pub fallback: Option<Fallback>,
}

struct Motion {
    homography: Homography,
    correspondences: usize,
    inliers: usize,
    fallback: Option<Fallback>,
}

fn last_motion(history: &OccSequence, flow: &FlowParams) -> Result<Motion> {
    let n = history.len();
    if n < 2 {
        return Err(Error::HistoryTooShort {
            found: n,
            required: 2,
        });
    }
    let frames = history.frames();
    let b0 = project_height(&frames[n - 2]);
    let b1 = project_height(&frames[n - 1]);
    let est = estimate_flow(&b0, &b1, flow)?;
    let correspondences = est.correspondences.len();
    Ok(match &est.fit {
        Ok(fit) => Motion {
            homography: fit.homography,
            correspondences,
            inliers: fit.inlier_count(),
            fallback: None,
        },
        Err(e) => {
            info!("flow estimation fell back to identity: {e}");
            Motion {
                homography: Homography::identity(),
                correspondences,
                inliers: 0,
                fallback: Some(e.into()),
            }
        }
    })
}

fn run_forecast<F>(history: &OccSequence, params: &ForecastParams, step: F) -> Result<Forecast>
where
    F: Fn(&OccGrid, &Homography, usize) -> Result<OccGrid>,
{
    if params.horizon == 0 {
        return Err(Error::InvalidParams("horizon must be >= 1".into()));
    }
    let motion = last_motion(history, &params.flow)?;
    let mut frames = Vec::with_capacity(params.horizon);
    let mut prev = history.last().clone();
    for k in 1..=params.horizon {
        match step(&prev, &motion.homography, k) {
            Ok(next) => {
                frames.push(next.clone());
                prev = next;
            }
            Err(e @ Error::ProjectiveDivideByZero { .. }) => {
                info!("warp failed at step {k}, using copy-paste: {e}");
                return Ok(Forecast {
                    frames: copy_paste(history, params.horizon)?,
                    homography: Homography::identity(),
                    correspondences: motion.correspondences,
                    inliers: motion.inliers,
                    fallback: Some((&e).into()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Forecast {
        frames: OccSequence::new(frames, history.frame_period_s())?,
        homography: motion.homography,
        correspondences: motion.correspondences,
        inliers: motion.inliers,
        fallback: motion.fallback,
    })
}

/// Constant-velocity forecast: frame `k` is the last history frame warped
/// by the last inter-frame motion composed `k` times.
pub fn forecast(history: &OccSequence, params: &ForecastParams) -> Result<Forecast> {
    let last = history.last().clone();
    run_forecast(history, params, |_, h, k| {
        warp_grid(&last, &compose(h, k as u32), params.warp)
    })
}

/// Like [`forecast`], but frame `k` re-warps frame `k - 1` by the single-step motion.
pub fn forecast_iterated(history: &OccSequence, params: &ForecastParams) -> Result<Forecast> {
    run_forecast(history, params, |prev, h, _| {
        warp_grid(prev, h, params.warp)
    })
}
