import math

import numpy as np
import pytest

from vesseltrace.metrics import (
    LandmarkSet,
    evaluate,
    load_landmarks,
    point_to_polyline,
    save_landmarks,
)


def brute_force_point_to_polyline(p, pts):
    """Oracle: dense sampling of every segment."""
    p = np.asarray(p, float)
    pts = np.asarray(pts, float)
    if len(pts) == 1:
        return float(np.linalg.norm(p - pts[0]))
    best = math.inf
    for a, b in zip(pts[:-1], pts[1:]):
        for t in np.linspace(0.0, 1.0, 2001):
            q = a + t * (b - a)
            best = min(best, float(np.linalg.norm(p - q)))
    return best


class TestPointToPolyline:
    def test_vertex_hit(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.0]])
        assert point_to_polyline((1, 0, 0), pts) == 0.0

    def test_perpendicular_foot(self):
        seg = np.array([[-1, 0, 0], [1, 0, 0.0]])
        assert point_to_polyline((0, 0, 1), seg) == pytest.approx(1.0)

    def test_foot_outside_segment(self):
        seg = np.array([[-1, 0, 0], [1, 0, 0.0]])
        d = point_to_polyline((3, 0, 4), seg)
        assert d == pytest.approx(4.47213595499958, rel=1e-12)

    def test_single_vertex(self):
        assert point_to_polyline((0, 3, 4), np.array([[0, 0, 0.0]])) == pytest.approx(5.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pts = rng.uniform(-5, 5, size=(6, 3))
            p = rng.uniform(-6, 6, size=3)
            exact = point_to_polyline(p, pts)
            dense = brute_force_point_to_polyline(p, pts)
            assert exact <= dense + 1e-9
            assert exact == pytest.approx(dense, abs=1e-4)


class TestEvaluate:
    def test_landmarks_on_path(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
        gt = LandmarkSet("gt", np.array([[0.5, 0, 0], [1.5, 0, 0.0]]))
        m = evaluate(gt, pts)
        assert m.mean_distance_mm == 0.0
        assert m.hausdorff_mm == 0.0

    def test_mean_and_max(self):
        pts = np.array([[-10, 0, 0], [10, 0, 0.0]])
        gt = LandmarkSet("gt", np.array([[0, 1, 0], [0, 3, 0.0]]))
        m = evaluate(gt, pts)
        assert m.mean_distance_mm == pytest.approx(2.0)
        assert m.hausdorff_mm == pytest.approx(3.0)

    def test_hausdorff_ge_mean(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            pts = rng.uniform(-5, 5, size=(8, 3))
            gt = LandmarkSet("gt", rng.uniform(-5, 5, size=(5, 3)))
            m = evaluate(gt, pts)
            assert m.hausdorff_mm >= m.mean_distance_mm

    def test_directedness(self):
        path = np.array([[0, 0, 0], [10, 0, 0.0]])
        gt_pts = np.array([[5, 1, 0.0]])
        forward = evaluate(LandmarkSet("gt", gt_pts), path)
        backward = evaluate(LandmarkSet("gt", path), gt_pts)
        assert forward.hausdorff_mm != backward.hausdorff_mm

    def test_rigid_motion_invariance(self):
        from scipy.spatial.transform import Rotation

        rng = np.random.default_rng(2)
        pts = rng.uniform(-5, 5, size=(7, 3))
        gt = rng.uniform(-5, 5, size=(4, 3))
        base = evaluate(LandmarkSet("gt", gt), pts)
        r = Rotation.random(random_state=rng).as_matrix()
        t = rng.uniform(-10, 10, size=3)
        moved = evaluate(LandmarkSet("gt", gt @ r.T + t), pts @ r.T + t)
        assert moved.mean_distance_mm == pytest.approx(base.mean_distance_mm, abs=1e-9)
        assert moved.hausdorff_mm == pytest.approx(base.hausdorff_mm, abs=1e-9)


def test_landmark_json_roundtrip(tmp_path):
    lm = LandmarkSet("perforator-3", np.array([[1.5, 2.5, 3.5], [4, 5, 6.0]]),
                     "intramuscular")
    save_landmarks(lm, tmp_path / "lm.json")
    back = load_landmarks(tmp_path / "lm.json")
    assert back.name == lm.name
    assert back.kind == lm.kind
    assert np.array_equal(back.points, lm.points)
