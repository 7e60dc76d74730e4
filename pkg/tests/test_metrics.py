import json

import numpy as np
import pytest
from PIL import Image

from movos.errors import DataLayoutError
from movos.metrics import (boundary_f, boundary_tolerance, evaluate_dataset,
                           jaccard, mask_boundary)


def _square(size, top, left, side):
    m = np.zeros((size, size), np.uint8)
    m[top:top + side, left:left + side] = 1
    return m


class TestJaccard:
    def test_identical(self):
        m = _square(16, 4, 4, 6)
        assert jaccard(m, m) == 1.0

    def test_disjoint(self):
        assert jaccard(_square(16, 0, 0, 4), _square(16, 8, 8, 4)) == 0.0

    def test_both_empty(self):
        z = np.zeros((8, 8), np.uint8)
        assert jaccard(z, z) == 1.0

    def test_one_empty(self):
        z = np.zeros((8, 8), np.uint8)
        assert jaccard(z, _square(8, 2, 2, 2)) == 0.0

    def test_one_third_fixture(self):
        gt = np.zeros((8, 8), np.uint8)
        pred = np.zeros((8, 8), np.uint8)
        gt[0, 0:2] = 1
        pred[0, 1:3] = 1
        assert jaccard(gt, pred) == 1.0 / 3.0

    def test_matches_brute_force_counting(self, rng):
        for _ in range(300):
            gt = (rng.random((16, 16)) < 0.4).astype(np.uint8)
            pred = (rng.random((16, 16)) < 0.4).astype(np.uint8)
            inter = sum(int(gt[y, x] and pred[y, x]) for y in range(16) for x in range(16))
            union = sum(int(gt[y, x] or pred[y, x]) for y in range(16) for x in range(16))
            expect = 1.0 if union == 0 else inter / union
            assert jaccard(gt, pred) == expect

    def test_symmetric(self, rng):
        gt = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        pred = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        assert jaccard(gt, pred) == jaccard(pred, gt)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            jaccard(np.zeros((4, 4), np.uint8), np.zeros((4, 5), np.uint8))

    def test_non_binary(self):
        bad = np.full((4, 4), 2, np.uint8)
        with pytest.raises(ValueError, match="binary"):
            jaccard(bad, np.zeros((4, 4), np.uint8))


class TestBoundary:
    def test_single_pixel_is_its_own_boundary(self):
        m = np.zeros((5, 5), np.uint8)
        m[2, 2] = 1
        assert np.array_equal(mask_boundary(m), m.astype(bool))

    def test_interior_excluded(self):
        m = _square(7, 1, 1, 5)
        b = mask_boundary(m)
        assert not b[3, 3]
        assert b[1, 1] and b[1, 3] and b[5, 5]
        assert b.sum() == 16

    def test_border_counts_as_background(self):
        m = np.ones((2, 2), np.uint8)
        assert mask_boundary(m).all()
        m = np.ones((5, 5), np.uint8)
        b = mask_boundary(m)
        assert not b[1:-1, 1:-1].any()
        assert b[0].all() and b[-1].all() and b[:, 0].all() and b[:, -1].all()

    def test_default_tolerance_scales_with_diagonal(self):
        assert boundary_tolerance((480, 854)) == int(np.ceil(0.008 * np.hypot(480, 854)))
        assert boundary_tolerance((64, 64)) == 1


def _boundary_f_oracle(gt, pred, tol):
    """Direct pairwise-distance matching of boundary pixels."""
    gt_b = [(y, x) for y, x in zip(*np.nonzero(mask_boundary(gt)))]
    pred_b = [(y, x) for y, x in zip(*np.nonzero(mask_boundary(pred)))]
    if not gt_b and not pred_b:
        return 1.0
    if not gt_b or not pred_b:
        return 0.0

    def matched(points, others):
        hits = 0
        for y, x in points:
            if any((y - oy) ** 2 + (x - ox) ** 2 <= tol * tol for oy, ox in others):
                hits += 1
        return hits

    precision = float(matched(pred_b, gt_b)) / len(pred_b)
    recall = float(matched(gt_b, pred_b)) / len(gt_b)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


class TestBoundaryF:
    def test_identical(self):
        m = _square(24, 8, 8, 4)
        assert boundary_f(m, m) == 1.0

    def test_both_empty(self):
        z = np.zeros((16, 16), np.uint8)
        assert boundary_f(z, z) == 1.0

    def test_one_empty(self):
        z = np.zeros((16, 16), np.uint8)
        assert boundary_f(z, _square(16, 4, 4, 4)) == 0.0
        assert boundary_f(_square(16, 4, 4, 4), z) == 0.0

    def test_translation_within_tolerance(self):
        gt = _square(24, 10, 8, 4)
        pred = _square(24, 10, 10, 4)
        assert boundary_f(gt, pred, tol_px=2) == 1.0

    def test_translation_beyond_tolerance(self):
        gt = _square(24, 10, 4, 4)
        pred = _square(24, 10, 11, 4)
        assert boundary_f(gt, pred, tol_px=2) == 0.0

    def test_partial_overlap_scores_between(self):
        gt = _square(24, 10, 8, 4)
        pred = _square(24, 10, 12, 4)
        f = boundary_f(gt, pred, tol_px=2)
        assert 0.0 < f < 1.0

    def test_matches_pairwise_oracle(self, rng):
        for tol in (1, 2):
            for _ in range(60):
                gt = (rng.random((16, 16)) < 0.3).astype(np.uint8)
                pred = (rng.random((16, 16)) < 0.3).astype(np.uint8)
                assert boundary_f(gt, pred, tol_px=tol) == _boundary_f_oracle(gt, pred, tol)

    def test_translation_invariance(self):
        gt = _square(32, 6, 6, 5)
        pred = _square(32, 7, 6, 5)
        f1 = boundary_f(gt, pred, tol_px=1)
        f2 = boundary_f(np.roll(gt, (9, 4), (0, 1)), np.roll(pred, (9, 4), (0, 1)), tol_px=1)
        assert f1 == f2
        f3 = boundary_f(gt[::-1].copy(), pred[::-1].copy(), tol_px=1)
        assert f1 == f3


def _write_mask(path, mask):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def _make_eval_tree(tmp_path, seqs):
    """seqs: {name: [(gt, pred), ...]}; returns (pred_root, gt_root)."""
    pred_root = tmp_path / "pred"
    gt_root = tmp_path / "gt"
    for name, frames in seqs.items():
        for i, (gt, pred) in enumerate(frames):
            _write_mask(gt_root / name / f"{i:05d}.png", gt)
            if pred is not None:
                _write_mask(pred_root / name / f"{i:05d}.png", pred)
    return pred_root, gt_root


class TestEvaluateDataset:
    def test_perfect_predictions(self, tmp_path):
        m = _square(16, 4, 4, 6)
        pred_root, gt_root = _make_eval_tree(tmp_path, {
            "a": [(m, m), (m, m)],
            "b": [(m, m)],
        })
        report = evaluate_dataset(pred_root, gt_root)
        d = report.dataset_means()
        assert d["J"] == 1.0 and d["F"] == 1.0 and d["G"] == 1.0
        assert d["sequences"] == 2 and d["frames"] == 3

    def test_sequences_weigh_equally(self, tmp_path):
        # one sequence at J=0.4, one at J=0.8, regardless of length
        gt_a = np.zeros((8, 8), np.uint8)
        gt_a[0, :3] = 1
        pred_a = np.zeros((8, 8), np.uint8)
        pred_a[0, :2] = 1
        pred_a[1, :2] = 1  # inter 2, union 5
        gt_b = np.zeros((8, 8), np.uint8)
        gt_b[2, :5] = 1
        pred_b = np.zeros((8, 8), np.uint8)
        pred_b[2, :4] = 1  # inter 4, union 5
        pred_root, gt_root = _make_eval_tree(tmp_path, {
            "a": [(gt_a, pred_a)] * 3,
            "b": [(gt_b, pred_b)],
        })
        report = evaluate_dataset(pred_root, gt_root)
        per = report.sequence_means()
        assert per["a"]["J"] == pytest.approx(0.4)
        assert per["b"]["J"] == pytest.approx(0.8)
        assert report.dataset_means()["J"] == pytest.approx(0.6)

    def test_g_is_mean_of_j_and_f(self, tmp_path, rng):
        gt = (rng.random((16, 16)) < 0.3).astype(np.uint8)
        pred = (rng.random((16, 16)) < 0.3).astype(np.uint8)
        pred_root, gt_root = _make_eval_tree(tmp_path, {"a": [(gt, pred)]})
        report = evaluate_dataset(pred_root, gt_root)
        fs = report.frames[0]
        assert fs.g == 0.5 * (fs.j + fs.f)
        d = report.dataset_means()
        assert d["G"] == pytest.approx(0.5 * (d["J"] + d["F"]))

    def test_missing_prediction_is_an_error(self, tmp_path):
        m = _square(16, 4, 4, 6)
        pred_root, gt_root = _make_eval_tree(tmp_path, {"a": [(m, m), (m, None)]})
        with pytest.raises(DataLayoutError, match="frame '00001'"):
            evaluate_dataset(pred_root, gt_root)

    def test_unannotated_frames_skipped(self, tmp_path):
        m = _square(16, 4, 4, 6)
        pred_root, gt_root = _make_eval_tree(tmp_path, {"a": [(m, m), (m, m)]})
        _write_mask(pred_root / "a" / "00002.png", m)  # extra prediction, no gt
        report = evaluate_dataset(pred_root, gt_root)
        assert report.dataset_means()["frames"] == 2

    def test_empty_gt_root(self, tmp_path):
        (tmp_path / "gt").mkdir()
        with pytest.raises(DataLayoutError, match="sequence"):
            evaluate_dataset(tmp_path / "pred", tmp_path / "gt")

    def test_jobs_match_serial(self, tmp_path, rng):
        seqs = {}
        for name in ("a", "b"):
            frames = []
            for _ in range(3):
                gt = (rng.random((16, 16)) < 0.3).astype(np.uint8)
                pred = (rng.random((16, 16)) < 0.3).astype(np.uint8)
                frames.append((gt, pred))
            seqs[name] = frames
        pred_root, gt_root = _make_eval_tree(tmp_path, seqs)
        serial = evaluate_dataset(pred_root, gt_root, jobs=1)
        parallel = evaluate_dataset(pred_root, gt_root, jobs=4)
        assert serial.dataset_means() == parallel.dataset_means()

    def test_group_means(self, tmp_path):
        m = _square(16, 4, 4, 6)
        half = _square(16, 4, 4, 6)
        half[:, 7:] = 0
        pred_root, gt_root = _make_eval_tree(tmp_path, {
            "car_01": [(m, m)],
            "car_02": [(m, half)],
            "dog_01": [(m, m)],
        })
        report = evaluate_dataset(pred_root, gt_root)
        groups = report.group_means(lambda s: s.split("_")[0])
        assert groups["dog"]["J"] == 1.0
        assert groups["car"]["sequences"] == 2
        expected = 0.5 * (1.0 + report.sequence_means()["car_02"]["J"])
        assert groups["car"]["J"] == pytest.approx(expected)

    def test_report_files(self, tmp_path):
        m = _square(16, 4, 4, 6)
        pred_root, gt_root = _make_eval_tree(tmp_path, {"a": [(m, m)]})
        report = evaluate_dataset(pred_root, gt_root)
        report.write_json(tmp_path / "report.json")
        report.write_csv(tmp_path / "report.csv")
        blob = json.loads((tmp_path / "report.json").read_text())
        assert blob["dataset"]["J"] == 1.0
        assert "a" in blob["per_sequence"]
        lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert lines[0] == "sequence,frame,J,F,G"
        assert len(lines) == 2
