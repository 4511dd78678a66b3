use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Correspondence, FlowParams};
use crate::error::{Error, Result};

/// Smallest determinant magnitude accepted as invertible.
pub const MIN_DETERMINANT: f64 = 1e-12;
/// Homogeneous `w` below this magnitude counts as the plane at infinity.
pub const MIN_PROJECTIVE_W: f64 = 1e-12;

/// Planar projective transform acting on `(x, y)` cell coordinates.
///
/// Maps frame-0 coordinates to frame-1 coordinates. Stored with
/// `m[2][2] = 1` whenever that entry is non-zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularHomography);
        }
        let m = normalize(m);
        if !(m.determinant().abs() > MIN_DETERMINANT) {
            return Err(Error::SingularHomography);
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `degrees` (counter-clockwise in x-right, y-up axes) about
    /// `(cx, cy)`, followed by a translation of `(tx, ty)`.
    pub fn rigid(degrees: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let m = Matrix3::new(
            c,
            -s,
            cx - c * cx + s * cy + tx,
            s,
            c,
            cy - s * cx - c * cy + ty,
            0.0,
            0.0,
            1.0,
        );
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.m[(r, c)]))
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        std::array::from_fn(|i| self.m[(i / 3, i % 3)])
    }

    pub fn inverse(&self) -> Self {
        // the constructor guarantees |det| > MIN_DETERMINANT
        let inv = self.m.try_inverse().expect("homography is invertible");
        Self { m: normalize(inv) }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Homography) -> Result<Self> {
        Self::from_matrix(next.m * self.m)
    }

    /// Maps a point, or `None` when it lands at infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let p = self.m * Vector3::new(x, y, 1.0);
        if p.z.abs() < MIN_PROJECTIVE_W {
            None
        } else {
            Some([p.x / p.z, p.y / p.z])
        }
    }

    pub(crate) fn apply_or_err(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        self.apply(x, y)
            .ok_or(Error::ProjectiveDivideByZero { x, y })
    }

    /// Largest absolute entry-wise difference after normalization.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.m - other.m).abs().max()
    }
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

fn normalize(m: Matrix3<f64>) -> Matrix3<f64> {
    let s = m[(2, 2)];
    if s.abs() > f64::EPSILON {
        m / s
    } else {
        m
    }
}

/// `k`-fold application of `h`, renormalized.
pub fn compose(h: &Homography, k: u32) -> Homography {
    let mut acc = Matrix3::identity();
    for _ in 0..k {
        acc = normalize(h.m * acc);
    }
    Homography { m: acc }
}

/// Similarity transform taking the points to zero mean and mean distance √2.
fn hartley(points: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0 && mean_dist.is_finite()) {
        return Err(Error::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    // t is affine here, so w stays 1
    [
        t[(0, 0)] * p[0] + t[(0, 1)] * p[1] + t[(0, 2)],
        t[(1, 0)] * p[0] + t[(1, 1)] * p[1] + t[(1, 2)],
    ]
}

/// Normalized direct linear transform: the homography minimizing the
/// algebraic error over all given pairs.
pub fn dlt(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::DimMismatch(format!(
            "{} source points vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 4 {
        return Err(Error::TooFewCorrespondences(src.len()));
    }
    let t_src = hartley(src)?;
    let t_dst = hartley(dst)?;

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (&s, &d) in src.iter().zip(dst) {
        let [x, y] = transform(&t_src, s);
        let [u, v] = transform(&t_dst, d);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for row in [r0, r1] {
            for i in 0..9 {
                for j in i..9 {
                    ata[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(ata);
    let smallest = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nine eigenvalues");
    let h = eig.eigenvectors.column(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    Homography::from_matrix(t_dst_inv * hn * t_src)
}

/// Forward and backward transfer distances of one pair.
pub fn transfer_distances(
    h: &Homography,
    h_inv: &Homography,
    src: [f64; 2],
    dst: [f64; 2],
) -> Option<(f64, f64)> {
    let f = h.apply(src[0], src[1])?;
    let b = h_inv.apply(dst[0], dst[1])?;
    Some((
        (f[0] - dst[0]).hypot(f[1] - dst[1]),
        (b[0] - src[0]).hypot(b[1] - src[1]),
    ))
}

/// Mean over all cell centers of `½(|H p − G p| + |H⁻¹ p − G⁻¹ p|)`.
///
/// Measures how far an estimated model `h` is from a reference `g` across
/// a `width × height` map. Cells mapped to infinity by either model count
/// as infinite error.
pub fn mean_symmetric_transfer_error(
    h: &Homography,
    g: &Homography,
    width: usize,
    height: usize,
) -> f64 {
    let (hi, gi) = (h.inverse(), g.inverse());
    let mut total = 0.0;
    for x in 0..width {
        for y in 0..height {
            let (px, py) = (x as f64, y as f64);
            let err = match (
                h.apply(px, py),
                g.apply(px, py),
                hi.apply(px, py),
                gi.apply(px, py),
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => {
                    0.5 * ((a[0] - b[0]).hypot(a[1] - b[1]) + (c[0] - d[0]).hypot(c[1] - d[1]))
                }
                _ => f64::INFINITY,
            };
            total += err;
        }
    }
    total / (width * height) as f64
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (vx, vy) = (c[0] - a[0], c[1] - a[1]);
    let cross = ux * vy - uy * vx;
    cross.abs() <= 1e-10 * (ux * ux + uy * uy + vx * vx + vy * vy)
}

fn any_three_collinear(p: &[[f64; 2]; 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| collinear(p[i], p[j], p[k]))
}

/// Robustly fitted homography and which correspondences support it.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographyEstimate {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl HomographyEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

struct Consensus {
    model: Homography,
    count: usize,
    error: f64,
    iteration: usize,
}

fn score(h: &Homography, corrs: &[Correspondence], thresh: f64) -> (Vec<bool>, usize, f64) {
    let h_inv = h.inverse();
    let mut count = 0;
    let mut error = 0.0;
    let mask = corrs
        .iter()
        .map(|c| match transfer_distances(h, &h_inv, c.src, c.dst) {
            Some((f, b)) if f <= thresh && b <= thresh => {
                count += 1;
                error += f + b;
                true
            }
            _ => false,
        })
        .collect();
    (mask, count, error)
}

/// RANSAC over 4-point samples, each solved by [`dlt`], followed by a
/// refit on every inlier of the best sample.
///
/// Iteration `i` draws from its own ChaCha stream `i` under `params.seed`,
/// so the result does not depend on the worker count.
pub fn estimate_homography(
    corrs: &[Correspondence],
    params: &FlowParams,
) -> Result<HomographyEstimate> {
    params.validate()?;
    let n = corrs.len();
    if n < 4 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let thresh = params.inlier_thresh;

    let best = (0..params.ransac_iters)
        .into_par_iter()
        .filter_map(|iteration| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(iteration as u64);
            let idx = sample(&mut rng, n, 4);
            let src: [[f64; 2]; 4] = std::array::from_fn(|k| corrs[idx.index(k)].src);
            let dst: [[f64; 2]; 4] = std::array::from_fn(|k| corrs[idx.index(k)].dst);
            if any_three_collinear(&src) || any_three_collinear(&dst) {
                return None;
            }
            let model = dlt(&src, &dst).ok()?;
            let (_, count, error) = score(&model, corrs, thresh);
            Some(Consensus {
                model,
                count,
                error,
                iteration,
            })
        })
        .reduce_with(|a, b| {
            let a_wins = (a.count, b.error, b.iteration) > (b.count, a.error, a.iteration);
            if a_wins {
                a
            } else {
                b
            }
        })
        .ok_or(Error::DegenerateConfiguration)?;

    let (mask, _, _) = score(&best.model, corrs, thresh);
    let (src, dst): (Vec<_>, Vec<_>) = corrs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| (c.src, c.dst))
        .unzip();
    let refit = dlt(&src, &dst).unwrap_or(best.model);
    let (refit_mask, refit_count, _) = score(&refit, corrs, thresh);
    // keep the refit only if it does not lose support
    let (homography, inliers, count) = if refit_count >= best.count {
        (refit, refit_mask, refit_count)
    } else {
        (best.model, mask, best.count)
    };
    if count < params.min_inliers {
        return Err(Error::TooFewInliers {
            found: count,
            required: params.min_inliers,
        });
    }
    Ok(HomographyEstimate {
        homography,
        inliers,
    })
}
