"""Smoke test for the occflow extension module.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml
"""
import os
import tempfile

import occflow


def main():
    assert "translating_car" in occflow.preset_names()
    frames, gt = occflow.synth_preset("translating_car")
    assert len(frames) == 8 and len(gt) == 7
    history, future = frames[:4], frames[4:]

    g = frames[0]
    w, h, d = g.dims
    heights = occflow.project_height(g)
    assert len(heights) == w * h and max(heights) < d

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "h.occs")
        occflow.save_sequence(history, path)
        loaded, period = occflow.load_sequence(path)
        assert loaded == history and period == 0.5

    rows, n, inliers = occflow.estimate_homography(history[-2], history[-1])
    assert inliers >= 12 and inliers <= n
    assert abs(rows[0][2] - 2.0) < 1e-6, rows

    pred, m, fallback = occflow.forecast(history, horizon=4)
    base = occflow.copy_paste(history, horizon=4)
    assert fallback is None
    for k in range(4):
        flow_iou = occflow.iou_occupancy(pred[k], future[k])
        base_iou = occflow.iou_occupancy(base[k], future[k])
        assert flow_iou > base_iou, (k, flow_iou, base_iou)
        assert 0.0 <= occflow.miou(pred[k], future[k]) <= 1.0

    assert occflow.quality_fuse(pred[0], base[0], 0.0) == pred[0]
    try:
        occflow.quality_fuse(pred[0], base[0], 2.0)
    except occflow.OccflowError as e:
        assert str(e).startswith("INVALID_PARAMS")
    else:
        raise AssertionError("gate weight 2.0 accepted")

    failed = [name for name, ok, _ in occflow.self_test() if not ok]
    assert not failed, failed
    print("occflow smoke test OK")


if __name__ == "__main__":
    main()
