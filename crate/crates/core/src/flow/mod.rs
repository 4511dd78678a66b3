//! BEV scene flow: a single homography between consecutive height maps,
//! found by block matching and robust normalized-DLT fitting.

mod field;
mod homography;
mod matching;

pub use field::{
    correspondences_csv, flow_field, load_flow, read_flow, save_flow, write_flow, FlowField,
    FLOW_MAGIC,
};
pub use homography::{
    compose, dlt, estimate_homography, mean_symmetric_transfer_error, transfer_distances,
    Homography, HomographyEstimate, MIN_DETERMINANT, MIN_PROJECTIVE_W,
};
pub use matching::match_blocks;

use serde::{Deserialize, Serialize};

use crate::bev::BevMap;
use crate::error::{Error, Result};

/// A matched point pair in cell coordinates, `src` in the earlier map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: [f64; 2],
    pub dst: [f64; 2],
    /// Matching cost (block SSD); lower is better.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub block_size: usize,
    pub search_radius: usize,
    pub min_texture: f64,
    pub ransac_iters: usize,
    pub inlier_thresh: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            block_size: 9,
            search_radius: 12,
            min_texture: 0.5,
            ransac_iters: 1000,
            inlier_thresh: 1.0,
            min_inliers: 12,
            seed: 42,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 3 || self.block_size.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "block_size must be odd and >= 3, got {}",
                self.block_size
            )));
        }
        if self.search_radius < 1 {
            return Err(Error::InvalidParams("search_radius must be >= 1".into()));
        }
        if !(self.min_texture >= 0.0) {
            return Err(Error::InvalidParams("min_texture must be >= 0".into()));
        }
        if self.ransac_iters < 1 {
            return Err(Error::InvalidParams("ransac_iters must be >= 1".into()));
        }
        if !(self.inlier_thresh > 0.0 && self.inlier_thresh.is_finite()) {
            return Err(Error::InvalidParams(
                "inlier_thresh must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Block matching plus robust fitting between two BEV maps.
#[derive(Debug)]
pub struct FlowEstimate {
    pub correspondences: Vec<Correspondence>,
    pub fit: Result<HomographyEstimate>,
}

impl FlowEstimate {
    /// The fitted homography, or identity when fitting failed.
    pub fn homography_or_identity(&self) -> Homography {
        self.fit
            .as_ref()
            .map(|e| e.homography)
            .unwrap_or_else(|_| Homography::identity())
    }
}

/// Runs [`match_blocks`] then [`estimate_homography`]. Only input errors
/// (mismatched maps, bad parameters) are returned as `Err`; fitting
/// failures are kept in [`FlowEstimate::fit`] for the caller's fallback.
pub fn estimate_flow(b0: &BevMap, b1: &BevMap, params: &FlowParams) -> Result<FlowEstimate> {
    let correspondences = match_blocks(b0, b1, params)?;
    let fit = estimate_homography(&correspondences, params);
    Ok(FlowEstimate {
        correspondences,
        fit,
    })
}
