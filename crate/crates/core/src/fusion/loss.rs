//! Evaluative training losses: softmax cross-entropy and Lovász-softmax.
//!
//! Reductions run in grid linear-index order so results are bit-stable.

use serde::{Deserialize, Serialize};

use super::FeatureGrid;
use crate::error::{Error, Result};
use crate::grid::OccGrid;

/// Probabilities are clamped below at this value before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Mean of `-ln p[v, gt(v)]` over counted voxels (all, or only occupied
/// ones when `ignore_free`). Zero when no voxel is counted.
pub fn softmax_ce(pred: &FeatureGrid, gt: &OccGrid, ignore_free: bool) -> Result<f64> {
    pred.require_matches(gt)?;
    pred.require_probability()?;
    gt.validate_labels(pred.num_classes())?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (v, &label) in gt.labels().iter().enumerate() {
        if ignore_free && label == 0 {
            continue;
        }
        total -= pred.voxel(v)[label as usize].max(PROBABILITY_FLOOR).ln();
        counted += 1;
    }
    Ok(if counted == 0 {
        0.0
    } else {
        total / counted as f64
    })
}

/// Lovász extension of the Jaccard loss for one class, given per-voxel
/// foreground indicators and class probabilities.
fn lovasz_class(fg: &[bool], prob: &[f64]) -> f64 {
    let mut order: Vec<(f64, bool)> = fg
        .iter()
        .zip(prob)
        .map(|(&f, &p)| (if f { 1.0 - p } else { p }, f))
        .collect();
    // stable, descending by error
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let gts = fg.iter().filter(|&&f| f).count() as f64;
    let mut cum_fg = 0.0;
    let mut cum_bg = 0.0;
    let mut prev_jaccard = 0.0;
    let mut loss = 0.0;
    for (err, f) in order {
        if f {
            cum_fg += 1.0;
        } else {
            cum_bg += 1.0;
        }
        let jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
        loss += err * (jaccard - prev_jaccard);
        prev_jaccard = jaccard;
    }
    loss
}

/// Per-class Lovász-softmax for every class of `class_set` present in `gt`.
pub fn lovasz_per_class(
    pred: &FeatureGrid,
    gt: &OccGrid,
    class_set: &[u8],
) -> Result<Vec<(u8, f64)>> {
    pred.require_matches(gt)?;
    pred.require_probability()?;
    let c = pred.num_classes();
    gt.validate_labels(c)?;
    let mut out = Vec::new();
    for &class in class_set {
        let ci = class as usize;
        if ci >= c {
            return Err(Error::InvalidParams(format!(
                "class {class} outside {c} channels"
            )));
        }
        let fg: Vec<bool> = gt.labels().iter().map(|&l| l == class).collect();
        if !fg.iter().any(|&f| f) {
            continue;
        }
        let prob: Vec<f64> = (0..gt.len()).map(|v| pred.voxel(v)[ci]).collect();
        out.push((class, lovasz_class(&fg, &prob)));
    }
    Ok(out)
}

/// Mean of [`lovasz_per_class`]; zero when no class of `class_set` occurs.
pub fn lovasz_softmax(pred: &FeatureGrid, gt: &OccGrid, class_set: &[u8]) -> Result<f64> {
    let per_class = lovasz_per_class(pred, gt, class_set)?;
    if per_class.is_empty() {
        return Ok(0.0);
    }
    Ok(per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub softmax: f64,
    pub lovasz: f64,
    pub lambda: f64,
    pub total: f64,
}

/// `softmax_ce + lambda * lovasz_softmax`.
pub fn combined_loss(
    pred: &FeatureGrid,
    gt: &OccGrid,
    class_set: &[u8],
    lambda: f64,
    ignore_free: bool,
) -> Result<LossReport> {
    let softmax = softmax_ce(pred, gt, ignore_free)?;
    let lovasz = lovasz_softmax(pred, gt, class_set)?;
    Ok(LossReport {
        softmax,
        lovasz,
        lambda,
        total: softmax + lambda * lovasz,
    })
}
