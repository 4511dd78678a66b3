//! Occupancy-grid forecasting from BEV scene flow, quality-gated fusion of
//! two predictions, and IoU/mIoU evaluation.
//!
//! Grids are `u8` label volumes (0 = free). The forecaster projects the
//! last two history frames to height maps, block-matches them, fits a
//! homography with RANSAC and warps the last frame forward.

pub mod bev;
pub(crate) mod binio;
pub mod error;
pub mod flow;
pub mod forecast;
pub mod fusion;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod selftest;
pub mod synth;

pub use error::{Error, Result};
