use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use occflow::bev;
use occflow::flow::{estimate_flow, FlowParams};
use occflow::forecast::{self as fc, ForecastParams, WarpMode};
use occflow::fusion::{quality_fuse as fuse, GateWeight, IdentityRefiner};
use occflow::grid::{self, DEFAULT_NUM_CLASSES};
use occflow::metrics::{self, ClassSet};
use occflow::synth;

create_exception!(occflow, OccflowError, PyValueError);

fn err(e: occflow::Error) -> PyErr {
    OccflowError::new_err(format!("{}: {}", e.code(), e))
}

type Rows = [[f64; 3]; 3];

/// Dense semantic voxel grid, z fastest then y then x.
#[pyclass(name = "OccGrid", module = "occflow", from_py_object)]
#[derive(Clone)]
struct PyOccGrid {
    inner: grid::OccGrid,
}

#[pymethods]
impl PyOccGrid {
    #[new]
    #[pyo3(signature = (dims, labels=None))]
    fn new(dims: [usize; 3], labels: Option<Vec<u8>>) -> PyResult<Self> {
        let inner = match labels {
            Some(l) => grid::OccGrid::from_labels(dims, l),
            None => grid::OccGrid::empty(dims),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.labels())
    }

    fn get(&self, x: usize, y: usize, z: usize) -> PyResult<u8> {
        self.check(x, y, z)?;
        Ok(self.inner.get(x, y, z))
    }

    fn set(&mut self, x: usize, y: usize, z: usize, label: u8) -> PyResult<()> {
        self.check(x, y, z)?;
        self.inner.set(x, y, z, label);
        Ok(())
    }

    fn occupied_count(&self) -> usize {
        self.inner.occupied_count()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "OccGrid(dims={:?}, occupied={})",
            self.inner.dims(),
            self.inner.occupied_count()
        )
    }
}

impl PyOccGrid {
    fn check(&self, x: usize, y: usize, z: usize) -> PyResult<()> {
        let [w, h, d] = self.inner.dims();
        if x < w && y < h && z < d {
            Ok(())
        } else {
            Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "({x}, {y}, {z}) outside {:?}",
                self.inner.dims()
            )))
        }
    }
}

fn wrap(g: grid::OccGrid) -> PyOccGrid {
    PyOccGrid { inner: g }
}

fn sequence(frames: &[PyOccGrid], period: f32) -> PyResult<grid::OccSequence> {
    grid::OccSequence::new(frames.iter().map(|f| f.inner.clone()).collect(), period).map_err(err)
}

fn unwrap_seq(s: grid::OccSequence) -> Vec<PyOccGrid> {
    s.into_frames().into_iter().map(wrap).collect()
}

#[pyfunction]
#[pyo3(signature = (path, num_classes=DEFAULT_NUM_CLASSES))]
fn load_grid(path: &str, num_classes: usize) -> PyResult<PyOccGrid> {
    grid::load_grid_with_classes(path, num_classes)
        .map(wrap)
        .map_err(err)
}

#[pyfunction]
fn save_grid(g: &PyOccGrid, path: &str) -> PyResult<()> {
    grid::save_grid(&g.inner, path).map_err(err)
}

/// Returns `(frames, frame_period_s)`.
#[pyfunction]
#[pyo3(signature = (path, num_classes=DEFAULT_NUM_CLASSES))]
fn load_sequence(path: &str, num_classes: usize) -> PyResult<(Vec<PyOccGrid>, f32)> {
    let s = grid::load_sequence(path, num_classes).map_err(err)?;
    let period = s.frame_period_s();
    Ok((unwrap_seq(s), period))
}

#[pyfunction]
#[pyo3(signature = (frames, path, frame_period_s=grid::format::DEFAULT_FRAME_PERIOD_S))]
fn save_sequence(frames: Vec<PyOccGrid>, path: &str, frame_period_s: f32) -> PyResult<()> {
    grid::save_sequence(&sequence(&frames, frame_period_s)?, path).map_err(err)
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    synth::scenario_presets()
        .into_iter()
        .map(|(name, _)| name.to_string())
        .collect()
}

/// Returns `(frames, pair_homographies)` for a named preset.
#[pyfunction]
#[pyo3(signature = (name, seed=None, dims=None, frames=None))]
fn synth_preset(
    name: &str,
    seed: Option<u64>,
    dims: Option<[usize; 3]>,
    frames: Option<usize>,
) -> PyResult<(Vec<PyOccGrid>, Vec<Rows>)> {
    let mut sc = synth::preset(name).map_err(err)?;
    if let Some(s) = seed {
        sc = sc.with_seed(s);
    }
    if let Some(d) = dims {
        sc = sc.with_dims(d);
    }
    if let Some(f) = frames {
        sc.frames = f;
    }
    let (seq, motion) = synth::generate(&sc).map_err(err)?;
    Ok((unwrap_seq(seq), motion.pair_homographies))
}

/// Top occupied z per column indexed `x * H + y`, -1 for empty columns.
#[pyfunction]
fn project_height(g: &PyOccGrid) -> Vec<i32> {
    bev::project_height(&g.inner).heights().to_vec()
}

#[pyfunction]
fn project_label<'py>(py: Python<'py>, g: &PyOccGrid) -> Bound<'py, PyBytes> {
    PyBytes::new(py, bev::project_label(&g.inner).labels())
}

fn flow_params(block_size: usize, search_radius: usize, seed: u64) -> FlowParams {
    FlowParams {
        block_size,
        search_radius,
        seed,
        ..FlowParams::default()
    }
}

/// Fits the dominant homography mapping `g0` cells to `g1` cells.
/// Returns `(rows, correspondences, inliers)`.
#[pyfunction]
#[pyo3(signature = (g0, g1, block_size=9, search_radius=12, seed=42))]
fn estimate_homography(
    py: Python<'_>,
    g0: &PyOccGrid,
    g1: &PyOccGrid,
    block_size: usize,
    search_radius: usize,
    seed: u64,
) -> PyResult<(Rows, usize, usize)> {
    let params = flow_params(block_size, search_radius, seed);
    let (b0, b1) = (
        bev::project_height(&g0.inner),
        bev::project_height(&g1.inner),
    );
    let est = py
        .detach(|| estimate_flow(&b0, &b1, &params))
        .map_err(err)?;
    let n = est.correspondences.len();
    let fit = est.fit.map_err(err)?;
    Ok((fit.homography.rows(), n, fit.inlier_count()))
}

/// Returns `(frames, rows, fallback_code)`; `fallback_code` is None unless
/// the forecast degraded to Copy&Paste.
#[pyfunction]
#[pyo3(signature = (history, horizon=4, mode="backward_nn", seed=42, frame_period_s=grid::format::DEFAULT_FRAME_PERIOD_S))]
fn forecast(
    py: Python<'_>,
    history: Vec<PyOccGrid>,
    horizon: usize,
    mode: &str,
    seed: u64,
    frame_period_s: f32,
) -> PyResult<(Vec<PyOccGrid>, Rows, Option<String>)> {
    let warp = match mode {
        "backward_nn" => WarpMode::BackwardNn,
        "forward_splat" => WarpMode::ForwardSplat,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode {other:?}: expected backward_nn or forward_splat"
            )))
        }
    };
    let hist = sequence(&history, frame_period_s)?;
    let params = ForecastParams {
        horizon,
        warp,
        flow: FlowParams {
            seed,
            ..FlowParams::default()
        },
    };
    let out = py.detach(|| fc::forecast(&hist, &params)).map_err(err)?;
    Ok((
        unwrap_seq(out.frames),
        out.homography.rows(),
        out.fallback.map(|f| f.code.to_string()),
    ))
}

#[pyfunction]
#[pyo3(signature = (history, horizon=4))]
fn copy_paste(history: Vec<PyOccGrid>, horizon: usize) -> PyResult<Vec<PyOccGrid>> {
    let hist = sequence(&history, grid::format::DEFAULT_FRAME_PERIOD_S)?;
    fc::copy_paste(&hist, horizon).map(unwrap_seq).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, b, w, num_classes=DEFAULT_NUM_CLASSES))]
fn quality_fuse(a: &PyOccGrid, b: &PyOccGrid, w: f64, num_classes: usize) -> PyResult<PyOccGrid> {
    let gate = GateWeight::new(w).map_err(err)?;
    fuse(&a.inner, &b.inner, gate, &IdentityRefiner, num_classes)
        .map(wrap)
        .map_err(err)
}

#[pyfunction]
fn iou_occupancy(pred: &PyOccGrid, gt: &PyOccGrid) -> PyResult<f64> {
    metrics::iou_occupancy(&pred.inner, &gt.inner).map_err(err)
}

/// Mean IoU over `classes` (default: the Occ3D evaluable set 1..=16).
#[pyfunction]
#[pyo3(signature = (pred, gt, classes=None, num_classes=DEFAULT_NUM_CLASSES))]
fn miou(
    pred: &PyOccGrid,
    gt: &PyOccGrid,
    classes: Option<Vec<u8>>,
    num_classes: usize,
) -> PyResult<f64> {
    let set = match classes {
        Some(c) => ClassSet::new(num_classes, c).map_err(err)?,
        None => ClassSet::default(),
    };
    metrics::miou(&pred.inner, &gt.inner, &set)
        .map(|r| r.miou)
        .map_err(err)
}

/// Runs the built-in property checks; returns `[(name, passed, detail)]`.
#[pyfunction]
#[pyo3(signature = (seed=42))]
fn self_test(py: Python<'_>, seed: u64) -> Vec<(String, bool, String)> {
    py.detach(|| occflow::selftest::run_self_test(seed))
        .results
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule(name = "occflow")]
fn occflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OccflowError", m.py().get_type::<OccflowError>())?;
    m.add_class::<PyOccGrid>()?;
    m.add_function(wrap_pyfunction!(load_grid, m)?)?;
    m.add_function(wrap_pyfunction!(save_grid, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(save_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(synth_preset, m)?)?;
    m.add_function(wrap_pyfunction!(project_height, m)?)?;
    m.add_function(wrap_pyfunction!(project_label, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_homography, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(copy_paste, m)?)?;
    m.add_function(wrap_pyfunction!(quality_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(iou_occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(miou, m)?)?;
    m.add_function(wrap_pyfunction!(self_test, m)?)?;
    Ok(())
}
