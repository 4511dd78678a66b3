//! Gated class-weighted fusion of two coarse predictions.
//!
//! Both predictions arrive as label grids already expressed in the target
//! frame. They are one-hot encoded, blended with a scalar gate, scaled per
//! class by frequency-rank weights taken from the second prediction, passed
//! through a [`Refiner`], and reduced by argmax.

mod feature;
mod loss;

pub use feature::{
    load_feature, read_feature, save_feature, write_feature, FeatureGrid, FEAT_MAGIC,
    PROBABILITY_TOLERANCE,
};
pub use loss::{
    combined_loss, lovasz_per_class, lovasz_softmax, softmax_ce, LossReport, DEFAULT_LAMBDA,
    PROBABILITY_FLOOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::OccGrid;

/// Blend factor toward the second prediction, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GateWeight(f64);

impl GateWeight {
    pub fn new(w: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&w) {
            Ok(Self(w))
        } else {
            Err(Error::InvalidParams(format!(
                "gate weight {w} outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GateWeight {
    type Error = Error;

    fn try_from(w: f64) -> Result<Self> {
        Self::new(w)
    }
}

impl From<GateWeight> for f64 {
    fn from(w: GateWeight) -> f64 {
        w.0
    }
}

/// Which end of the frequency ranking receives weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightOrder {
    /// Most frequent class gets 1, rarest gets 1/C.
    #[default]
    FrequentHigh,
    /// Rarest class gets 1, most frequent gets 1/C.
    RareHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    alpha: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            alpha: vec![1.0; num_classes],
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// Pluggable feature-to-feature stage run before the final argmax.
pub trait Refiner {
    fn refine(&self, features: FeatureGrid) -> Result<FeatureGrid>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn refine(&self, features: FeatureGrid) -> Result<FeatureGrid> {
        Ok(features)
    }
}

/// `score[c] * scale[c] + bias[c]`; diagnostic only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAffineRefiner {
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Refiner for ChannelAffineRefiner {
    fn refine(&self, mut features: FeatureGrid) -> Result<FeatureGrid> {
        let c = features.num_classes();
        if self.scale.len() != c || self.bias.len() != c {
            return Err(Error::DimMismatch(format!(
                "affine refiner has {} scales and {} biases for {c} classes",
                self.scale.len(),
                self.bias.len()
            )));
        }
        for voxel in features.scores_mut().chunks_mut(c) {
            for ((s, a), b) in voxel.iter_mut().zip(&self.scale).zip(&self.bias) {
                *s = *s * a + b;
            }
        }
        Ok(features)
    }
}

/// Ignores its input and returns features computed elsewhere, e.g. loaded
/// from a FEAT file written by an external model.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedRefiner(pub FeatureGrid);

impl Refiner for PrecomputedRefiner {
    fn refine(&self, features: FeatureGrid) -> Result<FeatureGrid> {
        features.require_same_shape(&self.0)?;
        Ok(self.0.clone())
    }
}

pub fn one_hot(grid: &OccGrid, num_classes: usize) -> Result<FeatureGrid> {
    grid.validate_labels(num_classes)?;
    let mut f = FeatureGrid::zeros(grid.dims(), num_classes)?;
    let scores = f.scores_mut();
    for (v, &label) in grid.labels().iter().enumerate() {
        scores[v * num_classes + label as usize] = 1.0;
    }
    Ok(f)
}

/// Per-class occurrence counts.
pub fn class_histogram(grid: &OccGrid, num_classes: usize) -> Result<Vec<u64>> {
    grid.validate_labels(num_classes)?;
    let mut counts = vec![0u64; num_classes];
    for &l in grid.labels() {
        counts[l as usize] += 1;
    }
    Ok(counts)
}

/// Frequency-rank weights: classes sorted by count (ties by class id), and
/// the class at rank `r` receives `(r + 1) / C`.
pub fn class_weights(
    coarse: &OccGrid,
    num_classes: usize,
    order: WeightOrder,
) -> Result<ClassWeights> {
    let counts = class_histogram(coarse, num_classes)?;
    let mut classes: Vec<usize> = (0..num_classes).collect();
    match order {
        WeightOrder::FrequentHigh => classes.sort_by_key(|&c| (counts[c], c)),
        WeightOrder::RareHigh => classes.sort_by_key(|&c| (std::cmp::Reverse(counts[c]), c)),
    }
    let mut alpha = vec![0.0; num_classes];
    for (rank, &c) in classes.iter().enumerate() {
        alpha[c] = (rank + 1) as f64 / num_classes as f64;
    }
    Ok(ClassWeights { alpha })
}

/// `(1 - w) * a + w * b`, voxel- and channel-wise.
pub fn gated_fuse(a: &FeatureGrid, b: &FeatureGrid, w: GateWeight) -> Result<FeatureGrid> {
    a.require_same_shape(b)?;
    let w = w.value();
    let scores = a
        .scores()
        .iter()
        .zip(b.scores())
        .map(|(x, y)| (1.0 - w) * x + w * y)
        .collect();
    FeatureGrid::new(a.dims(), a.num_classes(), scores)
}

pub fn apply_weights(f: &FeatureGrid, weights: &ClassWeights) -> Result<FeatureGrid> {
    let c = f.num_classes();
    if weights.alpha.len() != c {
        return Err(Error::DimMismatch(format!(
            "{} class weights for {c} channels",
            weights.alpha.len()
        )));
    }
    let mut out = f.clone();
    for voxel in out.scores_mut().chunks_mut(c) {
        for (s, a) in voxel.iter_mut().zip(&weights.alpha) {
            *s *= a;
        }
    }
    Ok(out)
}

/// Index of the largest score; the smallest index wins ties.
#[inline]
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn refine_argmax(f: FeatureGrid, refiner: &dyn Refiner) -> Result<OccGrid> {
    let dims = f.dims();
    let num_classes = f.num_classes();
    if num_classes > 256 {
        return Err(Error::InvalidParams(format!(
            "{num_classes} classes do not fit 8-bit labels"
        )));
    }
    let refined = refiner.refine(f)?;
    if refined.dims() != dims || refined.num_classes() != num_classes {
        return Err(Error::DimMismatch(format!(
            "refiner changed shape {:?}x{} to {:?}x{}",
            dims,
            num_classes,
            refined.dims(),
            refined.num_classes()
        )));
    }
    let labels = refined
        .scores()
        .chunks(num_classes)
        .map(|voxel| argmax(voxel) as u8)
        .collect();
    OccGrid::from_labels(dims, labels)
}

/// Settings for [`QualityFusion::fuse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFusion {
    pub gate: GateWeight,
    pub num_classes: usize,
    pub order: WeightOrder,
}

impl QualityFusion {
    pub fn new(gate: GateWeight, num_classes: usize) -> Self {
        Self {
            gate,
            num_classes,
            order: WeightOrder::default(),
        }
    }

    /// `pred_a` is the flow branch; `pred_b` is the second branch and the
    /// source of the class weights. The output keeps `pred_a`'s layout.
    pub fn fuse(
        &self,
        pred_a: &OccGrid,
        pred_b: &OccGrid,
        refiner: &dyn Refiner,
    ) -> Result<OccGrid> {
        if pred_a.dims() != pred_b.dims() {
            return Err(Error::DimMismatch(format!(
                "predictions {:?} and {:?}",
                pred_a.dims(),
                pred_b.dims()
            )));
        }
        let a = one_hot(pred_a, self.num_classes)?;
        let b = one_hot(pred_b, self.num_classes)?;
        let fused = gated_fuse(&a, &b, self.gate)?;
        let weights = class_weights(pred_b, self.num_classes, self.order)?;
        let weighted = apply_weights(&fused, &weights)?;
        let labels = refine_argmax(weighted, refiner)?.into_labels();
        Ok(pred_a.with_same_layout(labels))
    }
}

pub fn quality_fuse(
    pred_a: &OccGrid,
    pred_b: &OccGrid,
    w: GateWeight,
    refiner: &dyn Refiner,
    num_classes: usize,
) -> Result<OccGrid> {
    QualityFusion::new(w, num_classes).fuse(pred_a, pred_b, refiner)
}
