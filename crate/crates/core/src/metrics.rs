//! IoU and mIoU in 3D and BEV space.
//!
//! All metrics derive from an exact confusion matrix. Occupancy IoU treats
//! any non-zero label as occupied. Per-class IoU is `TP / (TP + FP + FN)`;
//! classes with an empty denominator are flagged absent and left out of
//! the mean.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev::project_label;
use crate::error::{Error, Result};
use crate::grid::{ClassTable, OccGrid, OccSequence};

/// Classes averaged into mIoU, plus the label range they live in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    num_classes: usize,
    classes: Vec<u8>,
}

impl ClassSet {
    pub fn new(num_classes: usize, mut classes: Vec<u8>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::EmptyClassSet);
        }
        if let Some(&bad) = classes.iter().find(|&&c| c as usize >= num_classes) {
            return Err(Error::InvalidParams(format!(
                "class {bad} outside {num_classes} classes"
            )));
        }
        classes.sort_unstable();
        classes.dedup();
        Ok(Self {
            num_classes,
            classes,
        })
    }

    pub fn from_table(table: &ClassTable) -> Result<Self> {
        Self::new(table.num_classes(), table.evaluable_classes())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        Self::from_table(&ClassTable::default()).expect("default table is valid")
    }
}

/// Entry `(g, p)` counts voxels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Ground-truth histogram.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.num_classes)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Prediction histogram.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|p| (0..self.num_classes).map(|g| self.get(g, p)).sum())
            .collect()
    }

    /// IoU of `class`, or `None` when it appears in neither input.
    pub fn class_iou(&self, class: usize) -> Option<f64> {
        let tp = self.get(class, class);
        let gt: u64 = (0..self.num_classes).map(|p| self.get(class, p)).sum();
        let pred: u64 = (0..self.num_classes).map(|g| self.get(g, class)).sum();
        let union = gt + pred - tp;
        (union > 0).then(|| tp as f64 / union as f64)
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }
}

const CHUNK: usize = 1 << 16;

fn tally(pred: &[u8], gt: &[u8], num_classes: usize) -> Result<ConfusionMatrix> {
    if let Some(&bad) = pred.iter().chain(gt).find(|&&l| l as usize >= num_classes) {
        return Err(Error::InvalidParams(format!(
            "label {bad} outside {num_classes} classes"
        )));
    }
    Ok(pred
        .par_chunks(CHUNK)
        .zip(gt.par_chunks(CHUNK))
        .map(|(p, g)| {
            let mut m = ConfusionMatrix::zeros(num_classes);
            for (&pl, &gl) in p.iter().zip(g) {
                m.counts[gl as usize * num_classes + pl as usize] += 1;
            }
            m
        })
        .reduce(
            || ConfusionMatrix::zeros(num_classes),
            ConfusionMatrix::merge,
        ))
}

fn require_same_dims(pred: &OccGrid, gt: &OccGrid) -> Result<()> {
    if pred.dims() == gt.dims() {
        Ok(())
    } else {
        Err(Error::DimMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )))
    }
}

pub fn confusion(pred: &OccGrid, gt: &OccGrid, num_classes: usize) -> Result<ConfusionMatrix> {
    require_same_dims(pred, gt)?;
    tally(pred.labels(), gt.labels(), num_classes)
}

fn occupancy_iou(pred: &[u8], gt: &[u8]) -> f64 {
    let (inter, union) = pred.iter().zip(gt).fold((0u64, 0u64), |(i, u), (&p, &g)| {
        let (p, g) = (p != 0, g != 0);
        (i + (p && g) as u64, u + (p || g) as u64)
    });
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Binary occupied-vs-free IoU; 1.0 when both grids are empty.
pub fn iou_occupancy(pred: &OccGrid, gt: &OccGrid) -> Result<f64> {
    require_same_dims(pred, gt)?;
    Ok(occupancy_iou(pred.labels(), gt.labels()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou_occupancy: f64,
    /// Mean IoU over evaluated classes that are present; 1.0 if none are.
    pub miou: f64,
    /// IoU per class id; 0.0 where `present` is false.
    pub per_class_iou: Vec<f64>,
    /// Whether the class occurs in the prediction or the ground truth.
    pub present: Vec<bool>,
    pub evaluated_classes: Vec<u8>,
}

fn report(pred: &[u8], gt: &[u8], classes: &ClassSet) -> Result<MetricReport> {
    let m = tally(pred, gt, classes.num_classes())?;
    let ious: Vec<Option<f64>> = (0..classes.num_classes()).map(|c| m.class_iou(c)).collect();
    let averaged: Vec<f64> = classes
        .classes()
        .iter()
        .filter_map(|&c| ious[c as usize])
        .collect();
    let miou = if averaged.is_empty() {
        1.0
    } else {
        averaged.iter().sum::<f64>() / averaged.len() as f64
    };
    Ok(MetricReport {
        iou_occupancy: occupancy_iou(pred, gt),
        miou,
        per_class_iou: ious.iter().map(|v| v.unwrap_or(0.0)).collect(),
        present: ious.iter().map(Option::is_some).collect(),
        evaluated_classes: classes.classes().to_vec(),
    })
}

pub fn miou(pred: &OccGrid, gt: &OccGrid, classes: &ClassSet) -> Result<MetricReport> {
    require_same_dims(pred, gt)?;
    report(pred.labels(), gt.labels(), classes)
}

/// The same report computed on top-down label maps.
pub fn bev_metrics(pred: &OccGrid, gt: &OccGrid, classes: &ClassSet) -> Result<MetricReport> {
    require_same_dims(pred, gt)?;
    let p = project_label(pred);
    let g = project_label(gt);
    report(p.labels(), g.labels(), classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "bev")]
    Bev,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::ThreeD => "3d",
            Space::Bev => "bev",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    /// 1-based frame offset into the future.
    pub horizon: usize,
    pub space: Space,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTable {
    pub num_classes: usize,
    pub rows: Vec<HorizonRow>,
}

impl HorizonTable {
    pub fn row(&self, horizon: usize, space: Space) -> Option<&MetricReport> {
        self.rows
            .iter()
            .find(|r| r.horizon == horizon && r.space == space)
            .map(|r| &r.report)
    }

    /// Columns `horizon,space,iou,miou,class_0..class_{C-1}`; absent classes
    /// leave their cell empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,space,iou,miou");
        for c in 0..self.num_classes {
            out.push_str(&format!(",class_{c}"));
        }
        out.push('\n');
        for row in &self.rows {
            let r = &row.report;
            out.push_str(&format!(
                "{},{},{:.6},{:.6}",
                row.horizon, row.space, r.iou_occupancy, r.miou
            ));
            for (iou, present) in r.per_class_iou.iter().zip(&r.present) {
                if *present {
                    out.push_str(&format!(",{iou:.6}"));
                } else {
                    out.push(',');
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One 3D and one BEV report per future frame.
pub fn evaluate_horizons(
    pred: &OccSequence,
    gt: &OccSequence,
    classes: &ClassSet,
) -> Result<HorizonTable> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut rows = Vec::with_capacity(2 * pred.len());
    for (i, (p, g)) in pred.frames().iter().zip(gt.frames()).enumerate() {
        rows.push(HorizonRow {
            horizon: i + 1,
            space: Space::ThreeD,
            report: miou(p, g, classes)?,
        });
        rows.push(HorizonRow {
            horizon: i + 1,
            space: Space::Bev,
            report: bev_metrics(p, g, classes)?,
        });
    }
    Ok(HorizonTable {
        num_classes: classes.num_classes(),
        rows,
    })
}
