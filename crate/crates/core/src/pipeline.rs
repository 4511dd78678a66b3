//! End-to-end run driven by a TOML config: forecast, fuse, evaluate, write.
//!
//! ```toml
//! history_path = "history.occs"
//! gt_path = "future.occs"      # optional
//! second_path = "other.occs"   # optional second-branch prediction
//! output_dir = "out"
//! horizon = 4
//! warp = "backward_nn"
//! gate_weight = 0.5
//! seed = 42
//!
//! [flow]
//! block_size = 9
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_field, save_flow, FlowParams, Homography};
use crate::forecast::{copy_paste, forecast, Fallback, ForecastParams, WarpMode};
use crate::fusion::{GateWeight, IdentityRefiner, QualityFusion};
use crate::grid::{load_sequence, save_sequence, OccSequence, DEFAULT_NUM_CLASSES};
use crate::metrics::{evaluate_horizons, ClassSet, HorizonTable};

pub const DEFAULT_SEED: u64 = 42;

fn default_horizon() -> usize {
    4
}

fn default_num_classes() -> usize {
    DEFAULT_NUM_CLASSES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub history_path: PathBuf,
    #[serde(default)]
    pub gt_path: Option<PathBuf>,
    /// Second coarse prediction to fuse with the flow forecast.
    #[serde(default)]
    pub second_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub warp: WarpMode,
    #[serde(default)]
    pub gate_weight: f64,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Evaluated classes; the Occ3D default when absent.
    #[serde(default)]
    pub class_set: Option<Vec<u8>>,
    /// Overrides `flow.seed`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub flow: FlowParams,
}

impl RunConfig {
    pub fn new(history_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            history_path: history_path.into(),
            gt_path: None,
            second_path: None,
            output_dir: output_dir.into(),
            horizon: default_horizon(),
            warp: WarpMode::default(),
            gate_weight: 0.0,
            num_classes: DEFAULT_NUM_CLASSES,
            class_set: None,
            seed: DEFAULT_SEED,
            flow: FlowParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_against(base);
        }
        Ok(cfg)
    }

    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.history_path);
        fix(&mut self.output_dir);
        if let Some(p) = self.gt_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.second_path.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.history_path.as_os_str().is_empty() {
            return bad("history_path is empty");
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty");
        }
        if matches!(&self.gt_path, Some(p) if p.as_os_str().is_empty()) {
            return bad("gt_path is empty");
        }
        if matches!(&self.second_path, Some(p) if p.as_os_str().is_empty()) {
            return bad("second_path is empty");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.gate_weight) {
            return bad("gate_weight must lie in [0, 1]");
        }
        if self.num_classes == 0 || self.num_classes > 256 {
            return bad("num_classes must lie in 1..=256");
        }
        self.flow
            .validate()
            .map_err(|e| Error::ConfigInvalid(format!("flow: {e}")))?;
        self.class_set()
            .map_err(|e| Error::ConfigInvalid(format!("class_set: {e}")))?;
        Ok(())
    }

    pub fn class_set(&self) -> Result<ClassSet> {
        match &self.class_set {
            None if self.num_classes == DEFAULT_NUM_CLASSES => Ok(ClassSet::default()),
            None => ClassSet::new(self.num_classes, (1..self.num_classes as u8).collect()),
            Some(c) => ClassSet::new(self.num_classes, c.clone()),
        }
    }

    fn forecast_params(&self) -> ForecastParams {
        ForecastParams {
            horizon: self.horizon,
            warp: self.warp,
            flow: FlowParams {
                seed: self.seed,
                ..self.flow.clone()
            },
        }
    }
}

/// What [`run`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub homography: Homography,
    pub correspondences: usize,
    pub inliers: usize,
    pub fallback: Option<Fallback>,
    /// Gate weight actually applied (0 without a second prediction).
    pub gate_weight: f64,
    pub prediction: OccSequence,
    pub metrics: Option<HorizonTable>,
    pub baseline_metrics: Option<HorizonTable>,
    pub artifacts: Vec<PathBuf>,
}

/// The first `n` frames; fewer is a length mismatch against the horizon.
fn first_frames(seq: OccSequence, n: usize) -> Result<OccSequence> {
    if seq.len() < n {
        return Err(Error::LengthMismatch {
            pred: n,
            gt: seq.len(),
        });
    }
    seq.slice(0..n)
}

/// Formats a homography as three lines of three numbers.
pub fn homography_text(h: &Homography) -> String {
    h.rows()
        .iter()
        .map(|r| format!("{:.17e} {:.17e} {:.17e}\n", r[0], r[1], r[2]))
        .collect()
}

/// Runs the whole pipeline and writes into `output_dir`:
///
/// | file | content |
/// |---|---|
/// | `forecast.occs` | BEV-Flow forecast |
/// | `prediction.occs` | fused prediction |
/// | `homography.txt` | per-frame motion M |
/// | `flow.flo` | dense flow field of M |
/// | `metrics.csv`, `metrics.json` | prediction vs gt (with gt) |
/// | `baseline_metrics.csv` | Copy&Paste vs gt (with gt) |
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let c = config.num_classes;
    let history = load_sequence(&config.history_path, c)?;
    let params = config.forecast_params();
    let fc = forecast(&history, &params)?;
    if let Some(fb) = &fc.fallback {
        info!(
            "forecast fell back to copy-paste: {} ({})",
            fb.code, fb.message
        );
    }

    let (second, gate) = match &config.second_path {
        Some(p) => (
            Some(first_frames(load_sequence(p, c)?, config.horizon)?),
            config.gate_weight,
        ),
        None => {
            if config.gate_weight != 0.0 {
                info!("no second prediction given; gate weight forced to 0");
            }
            (None, 0.0)
        }
    };
    let fusion = QualityFusion::new(GateWeight::new(gate)?, c);
    let fused = fc
        .frames
        .frames()
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let b = second.as_ref().map_or(a, |s| &s.frames()[k]);
            fusion.fuse(a, b, &IdentityRefiner)
        })
        .collect::<Result<Vec<_>>>()?;
    let prediction = OccSequence::new(fused, history.frame_period_s())?;

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = out.join(name);
        write(&path)?;
        artifacts.push(path);
        Ok(())
    };
    let write_text =
        |text: String| move |p: &Path| fs::write(p, &text).map_err(|e| Error::io(p, e));

    emit("forecast.occs", &|p| save_sequence(&fc.frames, p))?;
    emit("prediction.occs", &|p| save_sequence(&prediction, p))?;
    emit(
        "homography.txt",
        &write_text(homography_text(&fc.homography)),
    )?;
    let [w, h, _] = history.dims();
    // a motion that sends some cell to infinity has no finite field
    if let Ok(field) = flow_field(&fc.homography, w, h) {
        emit("flow.flo", &|p| save_flow(&field, p))?;
    }

    let (mut metrics, mut baseline_metrics) = (None, None);
    if let Some(gt_path) = &config.gt_path {
        let gt = first_frames(load_sequence(gt_path, c)?, config.horizon)?;
        let classes = config.class_set()?;
        let table = evaluate_horizons(&prediction, &gt, &classes)?;
        let baseline = evaluate_horizons(&copy_paste(&history, config.horizon)?, &gt, &classes)?;
        emit("metrics.csv", &write_text(table.to_csv()))?;
        emit("metrics.json", &write_text(table.to_json()))?;
        emit("baseline_metrics.csv", &write_text(baseline.to_csv()))?;
        metrics = Some(table);
        baseline_metrics = Some(baseline);
    }

    Ok(RunSummary {
        homography: fc.homography,
        correspondences: fc.correspondences,
        inliers: fc.inliers,
        fallback: fc.fallback,
        gate_weight: gate,
        prediction,
        metrics,
        baseline_metrics,
        artifacts,
    })
}
