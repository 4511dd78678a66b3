//! Naive reference implementations shared by the integration tests.
//!
//! Everything here is written as plainly as possible and avoids calling the
//! library routine it is meant to check.

#![allow(dead_code)]

use std::collections::HashSet;

use occflow::grid::OccGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, dims: [usize; 3], num_classes: u8) -> OccGrid {
    let n = dims[0] * dims[1] * dims[2];
    let labels = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    OccGrid::from_labels(dims, labels).unwrap()
}

/// Label at (x, y, z) computed from the documented layout, z fastest.
pub fn at(g: &OccGrid, x: usize, y: usize, z: usize) -> u8 {
    let [_, h, d] = g.dims();
    g.labels()[(x * h + y) * d + z]
}

/// `m[gt][pred]` by a triple loop over the grid.
pub fn confusion(pred: &OccGrid, gt: &OccGrid, c: usize) -> Vec<Vec<u64>> {
    let [w, h, d] = gt.dims();
    let mut m = vec![vec![0u64; c]; c];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                m[at(gt, x, y, z) as usize][at(pred, x, y, z) as usize] += 1;
            }
        }
    }
    m
}

/// Per-class IoU from a confusion matrix; `None` for classes absent from both.
pub fn class_ious(m: &[Vec<u64>]) -> Vec<Option<f64>> {
    let c = m.len();
    (0..c)
        .map(|k| {
            let tp = m[k][k];
            let mut fp = 0;
            let mut fn_ = 0;
            for j in 0..c {
                if j != k {
                    fn_ += m[k][j];
                    fp += m[j][k];
                }
            }
            let union = tp + fp + fn_;
            if union == 0 {
                None
            } else {
                Some(tp as f64 / union as f64)
            }
        })
        .collect()
}

pub fn miou(ious: &[Option<f64>], classes: &[u8]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for &c in classes {
        if let Some(v) = ious[c as usize] {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

pub fn occupied_iou(pred: &OccGrid, gt: &OccGrid) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if p != 0 && g != 0 {
            inter += 1;
        }
        if p != 0 || g != 0 {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Top-down label map: label of the highest occupied voxel, 0 for empty
/// columns. Returned as a `W x H x 1` grid.
pub fn bev_labels(g: &OccGrid) -> OccGrid {
    let [w, h, d] = g.dims();
    let mut out = Vec::with_capacity(w * h);
    for x in 0..w {
        for y in 0..h {
            let mut top = 0;
            for z in (0..d).rev() {
                let l = at(g, x, y, z);
                if l != 0 {
                    top = l;
                    break;
                }
            }
            out.push(top);
        }
    }
    OccGrid::from_labels([w, h, 1], out).unwrap()
}

/// Top occupied z per column, -1 when empty, indexed `x * H + y`.
pub fn bev_heights(g: &OccGrid) -> Vec<i32> {
    let [w, h, d] = g.dims();
    let mut out = Vec::with_capacity(w * h);
    for x in 0..w {
        for y in 0..h {
            let top = (0..d).rev().find(|&z| at(g, x, y, z) != 0);
            out.push(top.map_or(-1, |z| z as i32));
        }
    }
    out
}

/// Per-voxel evaluation of the fusion chain: one-hot, gate, frequency-rank
/// weights from `b`, identity refiner, argmax with smallest-id ties.
pub fn fuse(a: &OccGrid, b: &OccGrid, w: f64, c: usize) -> Vec<u8> {
    let mut count = vec![0u64; c];
    for &l in b.labels() {
        count[l as usize] += 1;
    }
    // Rank = number of classes strictly before this one in (count, id) order.
    let alpha: Vec<f64> = (0..c)
        .map(|k| {
            let rank = (0..c).filter(|&j| (count[j], j) < (count[k], k)).count();
            (rank + 1) as f64 / c as f64
        })
        .collect();
    a.labels()
        .iter()
        .zip(b.labels())
        .map(|(&la, &lb)| {
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for k in 0..c {
                let ia = if la as usize == k { 1.0 } else { 0.0 };
                let ib = if lb as usize == k { 1.0 } else { 0.0 };
                let s = ((1.0 - w) * ia + w * ib) * alpha[k];
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best as u8
        })
        .collect()
}

/// Lovasz hinge for one class straight from the definition: sort errors
/// descending, then sum `e_i * (J(i) - J(i-1))` where `J(i)` is the Jaccard
/// loss of the ground-truth indicator truncated to the first `i` errors.
pub fn lovasz_class(fg: &[bool], prob: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..fg.len()).collect();
    let err = |v: usize| if fg[v] { 1.0 - prob[v] } else { prob[v] };
    order.sort_by(|&i, &j| err(j).partial_cmp(&err(i)).unwrap());
    let total_fg = fg.iter().filter(|&&f| f).count() as f64;
    let jaccard = |i: usize| -> f64 {
        if i == 0 {
            return 0.0;
        }
        let prefix = &order[..i];
        let fg_in = prefix.iter().filter(|&&v| fg[v]).count() as f64;
        let bg_in = i as f64 - fg_in;
        let inter = total_fg - fg_in;
        let union = total_fg + bg_in;
        1.0 - inter / union
    };
    (1..=order.len())
        .map(|i| err(order[i - 1]) * (jaccard(i) - jaccard(i - 1)))
        .sum()
}

type M3 = [[f64; 3]; 3];

pub fn apply(m: &M3, p: [f64; 2]) -> [f64; 2] {
    let x = m[0][0] * p[0] + m[0][1] * p[1] + m[0][2];
    let y = m[1][0] * p[0] + m[1][1] * p[1] + m[1][2];
    let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
    [x / w, y / w]
}

/// Inverse by the adjugate.
pub fn inverse(m: &M3) -> M3 {
    let c =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}

/// Mean over all cell centers of half the forward plus backward point
/// distance between two motion models.
pub fn transfer_error(h: &M3, g: &M3, width: usize, height: usize) -> f64 {
    let (hi, gi) = (inverse(h), inverse(g));
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut sum = 0.0;
    for y in 0..height {
        for x in 0..width {
            let p = [x as f64, y as f64];
            sum += 0.5 * (dist(apply(h, p), apply(g, p)) + dist(apply(&hi, p), apply(&gi, p)));
        }
    }
    sum / (width * height) as f64
}

pub fn normalized(m: &M3) -> M3 {
    m.map(|row| row.map(|v| v / m[2][2]))
}

/// Occupied voxel coordinates.
pub fn voxel_set(g: &OccGrid) -> HashSet<(i64, i64, i64)> {
    let [w, h, d] = g.dims();
    let mut s = HashSet::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if at(g, x, y, z) != 0 {
                    s.insert((x as i64, y as i64, z as i64));
                }
            }
        }
    }
    s
}

pub fn set_iou(a: &HashSet<(i64, i64, i64)>, b: &HashSet<(i64, i64, i64)>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

pub fn shifted(s: &HashSet<(i64, i64, i64)>, dx: i64, dy: i64) -> HashSet<(i64, i64, i64)> {
    s.iter().map(|&(x, y, z)| (x + dx, y + dy, z)).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub mod golden {
    //! Small fixtures built from integer arithmetic only, so their bytes do
    //! not depend on the platform's floating-point library.

    use std::path::PathBuf;

    use occflow::flow::FlowField;
    use occflow::fusion::FeatureGrid;
    use occflow::grid::{OccGrid, OccSequence};

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
    }

    pub fn grid(phase: usize) -> OccGrid {
        let dims = [5, 4, 3];
        let labels = (0..60)
            .map(|i| {
                let (x, y, z) = (i / 12, (i / 3) % 4, i % 3);
                ((x + 2 * y + 3 * z + phase) % 18) as u8
            })
            .collect();
        OccGrid::from_labels(dims, labels)
            .unwrap()
            .with_voxel_size(0.4)
            .unwrap()
    }

    pub fn sequence() -> OccSequence {
        OccSequence::new((0..3).map(grid).collect(), 0.5).unwrap()
    }

    pub fn flow() -> FlowField {
        let (w, h) = (6, 5);
        let mut v = Vec::new();
        for x in 0..w {
            for y in 0..h {
                v.push([1.5 + 0.125 * x as f64, -0.25 * y as f64]);
            }
        }
        FlowField::new(w, h, v).unwrap()
    }

    /// Probability grid: channel weights 1..=C shifted per voxel, divided by
    /// their power-of-two-free sum so every voxel sums to 1.
    pub fn feature() -> FeatureGrid {
        let (dims, c) = ([3, 2, 2], 4usize);
        let mut scores = Vec::new();
        for v in 0..12 {
            for k in 0..c {
                scores.push(((k + v) % c + 1) as f64 / 10.0);
            }
        }
        FeatureGrid::new(dims, c, scores).unwrap()
    }
}

/// Deterministic per-cell hash for hand-built textures.
pub fn hash_cell(x: i64, y: i64) -> u64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 32)
}
