mod common;

use occflow::bev::BevMap;
use occflow::flow::{
    compose, dlt, estimate_homography, flow_field, match_blocks, Correspondence, FlowParams,
    Homography,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn corr(src: [f64; 2], dst: [f64; 2]) -> Correspondence {
    Correspondence {
        src,
        dst,
        score: 0.0,
    }
}

fn max_diff(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let (a, b) = (common::normalized(a), common::normalized(b));
    (0..9)
        .map(|i| (a[i / 3][i % 3] - b[i / 3][i % 3]).abs())
        .fold(0.0, f64::max)
}

fn grid_points(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            [
                (i % 5) as f64 * 11.0 + (i / 5) as f64 * 1.5,
                (i / 5) as f64 * 13.0 + (i % 5) as f64,
            ]
        })
        .collect()
}

#[test]
fn shifted_map_reports_constant_offsets() {
    let (w, h, d) = (48, 40, 8);
    let height_at = |x: i64, y: i64| -> i32 {
        // textured hash field, -1 sprinkled in
        let v = common::hash_cell(x, y) % 9;
        if v == 8 {
            -1
        } else {
            (v % d as u64) as i32
        }
    };
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for x in 0..w as i64 {
        for y in 0..h as i64 {
            h0.push(height_at(x, y));
            h1.push(height_at(x - 3, y - 2));
        }
    }
    let b0 = BevMap::from_heights(w, h, d, h0).unwrap();
    let b1 = BevMap::from_heights(w, h, d, h1).unwrap();
    let params = FlowParams {
        search_radius: 5,
        ..FlowParams::default()
    };
    let corrs = match_blocks(&b0, &b1, &params).unwrap();
    assert!(!corrs.is_empty());
    for c in &corrs {
        assert_eq!(
            [c.dst[0] - c.src[0], c.dst[1] - c.src[1]],
            [3.0, 2.0],
            "{c:?}"
        );
        assert_eq!(c.score, 0.0);
    }
}

#[test]
fn translation_survives_thirty_percent_outliers() {
    let truth = [[1.0, 0.0, 3.0], [0.0, 1.0, 2.0], [0.0, 0.0, 1.0]];
    let src = grid_points(20);
    let mut rng = common::rng(11);
    let mut order: Vec<usize> = (0..20).collect();
    order.shuffle(&mut rng);
    let mut outlier = vec![false; 20];
    for &i in &order[..6] {
        outlier[i] = true;
    }
    let corrs: Vec<_> = src
        .iter()
        .zip(&outlier)
        .map(|(&p, &bad)| {
            let q = common::apply(&truth, p);
            if bad {
                corr(
                    p,
                    [
                        q[0] + rng.random_range(8.0..30.0),
                        q[1] - rng.random_range(8.0..30.0),
                    ],
                )
            } else {
                corr(p, q)
            }
        })
        .collect();
    let params = FlowParams {
        min_inliers: 8,
        ..FlowParams::default()
    };
    let est = estimate_homography(&corrs, &params).unwrap();
    assert!(max_diff(&est.homography.rows(), &truth) < 1e-6);
    let expect: Vec<bool> = outlier.iter().map(|&b| !b).collect();
    assert_eq!(est.inliers, expect);
}

#[test]
fn projective_model_recovered_up_to_scale() {
    let truth = [[1.02, -0.05, 4.0], [0.03, 0.97, -2.5], [8e-4, -6e-4, 1.0]];
    let src = grid_points(20);
    let corrs: Vec<_> = src
        .iter()
        .map(|&p| corr(p, common::apply(&truth, p)))
        .collect();
    let params = FlowParams {
        min_inliers: 8,
        ..FlowParams::default()
    };
    let est = estimate_homography(&corrs, &params).unwrap();
    assert!(max_diff(&est.homography.rows(), &truth) < 1e-6);
    assert!(est.inliers.iter().all(|&b| b));
}

#[test]
fn quarter_turn_field_matches_hand_rotation() {
    // 90 degrees about (2, 2): (x, y) -> (4 - y, x)
    let h = Homography::rigid(90.0, 2.0, 2.0, 0.0, 0.0);
    let f = flow_field(&h, 5, 5).unwrap();
    for x in 0..5 {
        for y in 0..5 {
            let want = [(4 - y) as f64 - x as f64, x as f64 - y as f64];
            let got = f.get(x, y);
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }
}

#[test]
fn compose_matches_direct_product() {
    let (c, s) = (10f64.to_radians().cos(), 10f64.to_radians().sin());
    let m = [[c, -s, 1.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
    let mut want = [[0.0; 3]; 3];
    for (i, row) in want.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| m[i][k] * m[k][j]).sum();
        }
    }
    let got = compose(&Homography::new(m).unwrap(), 2).rows();
    assert!(max_diff(&got, &want) < 1e-12);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let truth = [[0.99, 0.02, 1.0], [-0.02, 0.99, 0.5], [0.0, 0.0, 1.0]];
    let mut rng = common::rng(3);
    let corrs: Vec<_> = (0..60)
        .map(|i| {
            let p = [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)];
            let q = common::apply(&truth, p);
            let noise = if i % 4 == 0 { 15.0 } else { 0.2 };
            corr(
                p,
                [
                    q[0] + rng.random_range(-noise..noise),
                    q[1] + rng.random_range(-noise..noise),
                ],
            )
        })
        .collect();
    let params = FlowParams::default();
    let a = estimate_homography(&corrs, &params).unwrap();
    let b = estimate_homography(&corrs, &params).unwrap();
    assert_eq!(a.inliers, b.inliers);
    assert_eq!(a.homography.to_row_major(), b.homography.to_row_major());
}

fn arb_model() -> impl Strategy<Value = [[f64; 3]; 3]> {
    (
        0.7..1.3f64,
        -0.3..0.3f64,
        -0.3..0.3f64,
        0.7..1.3f64,
        -15.0..15.0f64,
        -15.0..15.0f64,
        -1e-3..1e-3f64,
        -1e-3..1e-3f64,
    )
        .prop_map(|(a, b, c, d, tx, ty, g, h)| [[a, b, tx], [c, d, ty], [g, h, 1.0]])
        .prop_filter("invertible", |m| {
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs() > 0.2
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_points_recover_model(m in arb_model(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let src: Vec<[f64; 2]> = (0..12)
            .map(|_| [rng.random_range(0.0..80.0), rng.random_range(0.0..80.0)])
            .collect();
        let dst: Vec<[f64; 2]> = src.iter().map(|&p| common::apply(&m, p)).collect();
        let h = dlt(&src, &dst).unwrap();
        prop_assert!(max_diff(&h.rows(), &m) < 1e-6);
    }

    /// Scaling every coordinate by `s` conjugates the fitted model by
    /// `S = diag(s, s, 1)`.
    #[test]
    fn scaling_coordinates_conjugates_the_model(m in arb_model(), s in 0.05..20.0f64) {
        let src = grid_points(20);
        let corrs: Vec<_> = src.iter().map(|&p| corr(p, common::apply(&m, p))).collect();
        let scaled: Vec<_> = corrs
            .iter()
            .map(|c| corr([c.src[0] * s, c.src[1] * s], [c.dst[0] * s, c.dst[1] * s]))
            .collect();
        let params = FlowParams { inlier_thresh: 1e-3, min_inliers: 8, ..FlowParams::default() };
        let a = estimate_homography(&corrs, &params).unwrap().homography.rows();
        let b = estimate_homography(&scaled, &params).unwrap().homography.rows();
        // S^-1 B S
        let mut back = b;
        for (i, row) in back.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let si = if i < 2 { s } else { 1.0 };
                let sj = if j < 2 { s } else { 1.0 };
                *v = *v * sj / si;
            }
        }
        prop_assert!(max_diff(&back, &a) < 1e-9, "{:?} vs {:?}", back, a);
    }

    #[test]
    fn identity_field_is_zero(w in 1usize..12, h in 1usize..12) {
        let f = flow_field(&Homography::identity(), w, h).unwrap();
        prop_assert!(f.vectors().iter().all(|v| *v == [0.0, 0.0]));
    }
}
