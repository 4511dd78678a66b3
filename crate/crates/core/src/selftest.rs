//! Invariant suite over the synthetic presets, runnable from the CLI.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bev::{project_height, EMPTY_COLUMN};
use crate::flow::{
    compose, dlt, estimate_flow, flow_field, mean_symmetric_transfer_error, read_flow, write_flow,
    FlowParams, Homography,
};
use crate::forecast::{copy_paste, forecast, warp_grid, ForecastParams, WarpMode};
use crate::fusion::{
    lovasz_per_class, one_hot, quality_fuse, read_feature, write_feature, GateWeight,
    IdentityRefiner,
};
use crate::grid::{
    read_grid, read_sequence, write_grid, write_sequence, OccGrid, DEFAULT_NUM_CLASSES,
};
use crate::metrics::{confusion, iou_occupancy, miou, ClassSet};
use crate::synth::{generate, preset, scenario_presets};

/// Largest acceptable mean symmetric transfer error on ego-only presets, cells.
pub const MOTION_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestReport {
    pub results: Vec<PropertyResult>,
    pub elapsed: Duration,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

type Check = fn(u64) -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_grid(rng: &mut ChaCha8Rng, dims: [usize; 3], classes: u8) -> OccGrid {
    let n = dims.iter().product();
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                0
            } else {
                rng.random_range(1..classes)
            }
        })
        .collect();
    OccGrid::from_labels(dims, labels).expect("valid dims")
}

fn formats_round_trip(_seed: u64) -> Result<String, String> {
    let mut checked = 0;
    for (name, sc) in scenario_presets() {
        let (seq, _) = generate(&sc).map_err(|e| e.to_string())?;
        let mut a = Vec::new();
        write_sequence(&seq, &mut a);
        let back = read_sequence(&a, DEFAULT_NUM_CLASSES).map_err(|e| e.to_string())?;
        let mut b = Vec::new();
        write_sequence(&back, &mut b);
        ensure(a == b, || {
            format!("{name}: OCCS bytes differ after round trip")
        })?;

        let mut g = Vec::new();
        write_grid(seq.last(), &mut g);
        let mut g2 = Vec::new();
        write_grid(
            &read_grid(&g, DEFAULT_NUM_CLASSES).map_err(|e| e.to_string())?,
            &mut g2,
        );
        ensure(g == g2, || {
            format!("{name}: OCCV bytes differ after round trip")
        })?;

        let field = flow_field(&Homography::rigid(3.0, 10.0, 10.0, 1.0, -2.0), 16, 12)
            .map_err(|e| e.to_string())?;
        let mut f = Vec::new();
        write_flow(&field, &mut f);
        let mut f2 = Vec::new();
        write_flow(&read_flow(&f).map_err(|e| e.to_string())?, &mut f2);
        ensure(f == f2, || "FLOW bytes differ after round trip".into())?;

        let feat = one_hot(seq.last(), DEFAULT_NUM_CLASSES).map_err(|e| e.to_string())?;
        let mut h = Vec::new();
        write_feature(&feat, &mut h);
        let mut h2 = Vec::new();
        write_feature(&read_feature(&h).map_err(|e| e.to_string())?, &mut h2);
        ensure(h == h2, || {
            format!("{name}: FEAT bytes differ after round trip")
        })?;
        checked += 1;
    }
    Ok(format!("{checked} presets, 4 formats"))
}

fn synth_determinism(seed: u64) -> Result<String, String> {
    for (name, sc) in scenario_presets() {
        let sc = sc.with_seed(seed);
        let a = generate(&sc).map_err(|e| e.to_string())?;
        let b = generate(&sc).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name}: two generations differ"))?;
    }
    Ok("presets regenerate identically".into())
}

fn bev_columns(_seed: u64) -> Result<String, String> {
    for (name, sc) in scenario_presets() {
        let (seq, _) = generate(&sc).map_err(|e| e.to_string())?;
        for grid in seq.frames() {
            let b = project_height(grid);
            let [w, h, _] = grid.dims();
            for x in 0..w {
                for y in 0..h {
                    let col = grid.column_slice(x, y);
                    let top = col
                        .iter()
                        .rposition(|&l| l != 0)
                        .map_or(EMPTY_COLUMN, |z| z as i32);
                    ensure(b.get(x, y) == top, || {
                        format!("{name}: column ({x},{y}) top mismatch")
                    })?;
                }
            }
        }
    }
    Ok("height = topmost occupied voxel, -1 iff column free".into())
}

fn dlt_exact_recovery(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let rows = [
            [
                rng.random_range(0.5..1.5),
                rng.random_range(-0.3..0.3),
                rng.random_range(-5.0..5.0),
            ],
            [
                rng.random_range(-0.3..0.3),
                rng.random_range(0.5..1.5),
                rng.random_range(-5.0..5.0),
            ],
            [
                rng.random_range(-1e-3..1e-3),
                rng.random_range(-1e-3..1e-3),
                1.0,
            ],
        ];
        let m = Homography::new(rows).map_err(|e| e.to_string())?;
        let src: Vec<[f64; 2]> = (0..6)
            .map(|_| [rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)])
            .collect();
        let dst: Vec<[f64; 2]> = src
            .iter()
            .map(|p| m.apply(p[0], p[1]).expect("finite"))
            .collect();
        let est = dlt(&src, &dst).map_err(|e| e.to_string())?;
        worst = worst.max(est.max_abs_diff(&m));
    }
    ensure(worst <= 1e-6, || format!("max entry error {worst:.3e}"))?;
    Ok(format!("50 draws, max entry error {worst:.1e}"))
}

fn compose_is_power(_seed: u64) -> Result<String, String> {
    let h = Homography::rigid(7.0, 31.5, 31.5, 1.0, 0.5);
    let mut acc = Homography::identity();
    for k in 1..=6u32 {
        acc = acc.then(&h).map_err(|e| e.to_string())?;
        let d = compose(&h, k).max_abs_diff(&acc);
        ensure(d < 1e-9, || format!("compose(h, {k}) off by {d:.3e}"))?;
    }
    let zero = flow_field(&Homography::identity(), 20, 10).map_err(|e| e.to_string())?;
    ensure(zero.vectors().iter().all(|v| *v == [0.0, 0.0]), || {
        "identity flow not zero".into()
    })?;
    Ok("compose(h,k) = h^k; identity flow is zero".into())
}

fn motion_fidelity(seed: u64) -> Result<String, String> {
    let params = FlowParams {
        seed,
        ..FlowParams::default()
    };
    let mut report = Vec::new();
    for (name, dims) in [
        ("ego_translation", [64, 64, 8]),
        ("ego_rotation", [200, 200, 8]),
    ] {
        let sc = preset(name).map_err(|e| e.to_string())?.with_dims(dims);
        let (seq, gt) = generate(&sc).map_err(|e| e.to_string())?;
        let frames = seq.frames();
        let mut worst = 0.0f64;
        for k in 0..frames.len() - 1 {
            let est = estimate_flow(
                &project_height(&frames[k]),
                &project_height(&frames[k + 1]),
                &params,
            )
            .map_err(|e| e.to_string())?;
            let h = est
                .fit
                .map_err(|e| format!("{name} pair {k}: {e}"))?
                .homography;
            let truth = gt.pair_homography(k).expect("pair exists");
            worst = worst.max(mean_symmetric_transfer_error(&h, &truth, dims[0], dims[1]));
        }
        ensure(worst <= MOTION_TOLERANCE, || {
            format!("{name}: worst transfer error {worst:.4}")
        })?;
        report.push(format!("{name} {worst:.3}"));
    }
    Ok(report.join(", "))
}

fn ransac_determinism(seed: u64) -> Result<String, String> {
    let (seq, _) = generate(&preset("crossing_pair").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let f = seq.frames();
    let params = FlowParams {
        seed,
        ..FlowParams::default()
    };
    let (b0, b1) = (project_height(&f[0]), project_height(&f[1]));
    let a = estimate_flow(&b0, &b1, &params).map_err(|e| e.to_string())?;
    let b = estimate_flow(&b0, &b1, &params).map_err(|e| e.to_string())?;
    ensure(a.correspondences == b.correspondences, || {
        "correspondences differ".into()
    })?;
    match (&a.fit, &b.fit) {
        (Ok(x), Ok(y)) => ensure(x == y, || "fits differ".into())?,
        (Err(x), Err(y)) => ensure(x.code() == y.code(), || "errors differ".into())?,
        _ => return Err("one run failed, the other did not".into()),
    }
    Ok("two runs bit-identical".into())
}

fn static_fixed_point(_seed: u64) -> Result<String, String> {
    let (seq, _) =
        generate(&preset("static").map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let history = seq.slice(0..4).map_err(|e| e.to_string())?;
    let gt = seq.slice(4..8).map_err(|e| e.to_string())?;
    let fc = forecast(&history, &ForecastParams::default()).map_err(|e| e.to_string())?;
    let cp = copy_paste(&history, 4).map_err(|e| e.to_string())?;
    let classes = ClassSet::default();
    for k in 0..4 {
        let (a, b, g) = (&fc.frames.frames()[k], &cp.frames()[k], &gt.frames()[k]);
        let fused = quality_fuse(
            a,
            b,
            GateWeight::new(0.5).expect("valid"),
            &IdentityRefiner,
            DEFAULT_NUM_CLASSES,
        )
        .map_err(|e| e.to_string())?;
        for (what, p) in [("bev-flow", a), ("copy-paste", b), ("fused", &fused)] {
            let r = miou(p, g, &classes).map_err(|e| e.to_string())?;
            ensure(r.iou_occupancy == 1.0 && r.miou == 1.0, || {
                format!(
                    "{what} horizon {}: iou {} miou {}",
                    k + 1,
                    r.iou_occupancy,
                    r.miou
                )
            })?;
        }
    }
    Ok("IoU = mIoU = 1 at horizons 1-4".into())
}

fn dynamic_dominance(_seed: u64) -> Result<String, String> {
    let (seq, _) = generate(&preset("translating_car").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let history = seq.slice(0..4).map_err(|e| e.to_string())?;
    let gt = seq.slice(4..8).map_err(|e| e.to_string())?;
    let fc = forecast(&history, &ForecastParams::default()).map_err(|e| e.to_string())?;
    let cp = copy_paste(&history, 4).map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for k in 0..4 {
        let g = &gt.frames()[k];
        let a = iou_occupancy(&fc.frames.frames()[k], g).map_err(|e| e.to_string())?;
        let b = iou_occupancy(&cp.frames()[k], g).map_err(|e| e.to_string())?;
        ensure(a > b, || {
            format!("horizon {}: bev-flow {a:.4} <= copy-paste {b:.4}", k + 1)
        })?;
        pairs.push(format!("{a:.3}>{b:.3}"));
    }
    Ok(pairs.join(" "))
}

fn warp_identity(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_grid(&mut rng, [12, 9, 4], 18);
    for mode in [WarpMode::BackwardNn, WarpMode::ForwardSplat] {
        let w = warp_grid(&g, &Homography::identity(), mode).map_err(|e| e.to_string())?;
        ensure(w == g, || format!("{mode} identity warp changed the grid"))?;
    }
    Ok("both warp modes".into())
}

fn fusion_gate_extremes(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let a = random_grid(&mut rng, [8, 8, 4], 18);
        let b = random_grid(&mut rng, [8, 8, 4], 18);
        let at = |w: f64| {
            quality_fuse(
                &a,
                &b,
                GateWeight::new(w).expect("valid"),
                &IdentityRefiner,
                18,
            )
        };
        ensure(at(0.0).map_err(|e| e.to_string())? == a, || {
            "w = 0 does not return pred_a".into()
        })?;
        ensure(at(1.0).map_err(|e| e.to_string())? == b, || {
            "w = 1 does not return pred_b".into()
        })?;
    }
    Ok("w=0 gives pred_a, w=1 gives pred_b".into())
}

fn lovasz_vertex(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<u8> = (0..6).collect();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let pred = random_grid(&mut rng, [6, 6, 3], 6);
        let gt = random_grid(&mut rng, [6, 6, 3], 6);
        let m = confusion(&pred, &gt, 6).map_err(|e| e.to_string())?;
        let per = lovasz_per_class(
            &one_hot(&pred, 6).map_err(|e| e.to_string())?,
            &gt,
            &classes,
        )
        .map_err(|e| e.to_string())?;
        for (c, l) in per {
            let iou = m.class_iou(c as usize).unwrap_or(1.0);
            worst = worst.max((l - (1.0 - iou)).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn metric_bounds(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = ClassSet::default();
    for _ in 0..20 {
        let p = random_grid(&mut rng, [10, 10, 4], 18);
        let g = random_grid(&mut rng, [10, 10, 4], 18);
        let r = miou(&p, &g, &classes).map_err(|e| e.to_string())?;
        ensure(
            (0.0..=1.0).contains(&r.miou) && (0.0..=1.0).contains(&r.iou_occupancy),
            || "metric outside [0, 1]".into(),
        )?;
        let s = miou(&p, &p, &classes).map_err(|e| e.to_string())?;
        ensure(s.miou == 1.0 && s.iou_occupancy == 1.0, || {
            "self-comparison below 1".into()
        })?;
        let total = confusion(&p, &g, 18).map_err(|e| e.to_string())?.total();
        ensure(total == p.len() as u64, || {
            "confusion total != voxel count".into()
        })?;
    }
    Ok("bounded, self = 1, totals match".into())
}

const CHECKS: &[(&str, Check)] = &[
    ("format_round_trip", formats_round_trip),
    ("synth_determinism", synth_determinism),
    ("bev_column_top", bev_columns),
    ("dlt_exact_recovery", dlt_exact_recovery),
    ("compose_is_matrix_power", compose_is_power),
    ("motion_fidelity", motion_fidelity),
    ("ransac_determinism", ransac_determinism),
    ("warp_identity", warp_identity),
    ("static_fixed_point", static_fixed_point),
    ("dynamic_dominance", dynamic_dominance),
    ("fusion_gate_extremes", fusion_gate_extremes),
    ("lovasz_vertex_identity", lovasz_vertex),
    ("metric_bounds", metric_bounds),
];

pub fn property_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every property; a failing property never stops the rest.
pub fn run_self_test(seed: u64) -> SelfTestReport {
    let start = Instant::now();
    let results = CHECKS
        .iter()
        .map(|&(name, check)| {
            let t = Instant::now();
            let outcome = check(seed);
            let elapsed = t.elapsed();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyResult {
                name,
                passed,
                detail,
                elapsed,
            }
        })
        .collect();
    SelfTestReport {
        results,
        elapsed: start.elapsed(),
    }
}
