import itertools

import numpy as np
import pytest

from memtrack.boxes import iou_matrix_tlwh
from memtrack.metrics import (
    HOTA_ALPHAS,
    AnnotationRow,
    ClearCounts,
    FrameAnnotations,
    FrameRangeError,
    check_frame_range,
    evaluate,
    hota,
    idf1,
    identity_overlap,
    match_frames,
    mota,
)
from memtrack.reference import brute_force_identity_tp


def seq(tracks, n_frames):
    """tracks: {id: {frame: box}} -> list of FrameAnnotations."""
    return [FrameAnnotations(t, [AnnotationRow(i, b[t]) for i, b in sorted(tracks.items()) if t in b])
            for t in range(1, n_frames + 1)]


def moving(x0, n, dx=5.0, w=20.0, h=40.0):
    return {t: (x0 + dx * t, 50.0, w, h) for t in range(1, n + 1)}


def random_scene(rng, n_ids, n_frames=6):
    gt = {i: {t: (rng.uniform(0, 200), rng.uniform(0, 200), 30.0, 30.0)
              for t in range(1, n_frames + 1) if rng.random() < 0.8} for i in range(1, n_ids + 1)}
    pred = {}
    for i, boxes in gt.items():
        for t, (x, y, w, h) in boxes.items():
            if rng.random() < 0.85:
                pid = 100 + (i if rng.random() < 0.8 else int(rng.integers(1, n_ids + 1)))
                while t in pred.get(pid, {}):
                    pid += 50
                pred.setdefault(pid, {})[t] = (x + rng.normal(0, 4), y + rng.normal(0, 4), w, h)
    return seq(gt, n_frames), seq(pred, n_frames)


class TestClear:
    def test_identical(self):
        gt = seq({1: moving(0, 10), 2: moving(100, 10)}, 10)
        c = match_frames(gt, gt)
        assert (c.fp, c.fn, c.idsw, c.n_gt) == (0, 0, 0, 20)

    def test_single_flip(self):
        gt = seq({1: moving(0, 10)}, 10)
        track = moving(0, 10)
        pred = seq({7: {t: b for t, b in track.items() if t <= 5}, 8: {t: b for t, b in track.items() if t > 5}}, 10)
        c = match_frames(gt, pred)
        assert (c.fp, c.fn, c.idsw) == (0, 0, 1)

    def test_persistence_beats_better_iou(self):
        # frame 2: the previous partner still overlaps enough, so it keeps the match
        gt = seq({1: {1: (0, 0, 10, 10), 2: (0, 0, 10, 10)}}, 2)
        pred = seq({5: {1: (0, 0, 10, 10), 2: (2, 0, 10, 10)}, 6: {2: (0, 0, 10, 10)}}, 2)
        c = match_frames(gt, pred)
        assert c.idsw == 0 and c.frames[1].pairs == [(1, 5)] and c.fp == 1

    def test_brute_force_per_frame(self, rng):
        for _ in range(60):
            gt_boxes = rng.uniform(0, 40, (3, 2))
            pr_boxes = gt_boxes[rng.permutation(3)] + rng.normal(0, 4, (3, 2))
            gt = [FrameAnnotations(1, [AnnotationRow(i, (*gt_boxes[i], 20.0, 20.0)) for i in range(3)])]
            pred = [FrameAnnotations(1, [AnnotationRow(10 + j, (*pr_boxes[j], 20.0, 20.0)) for j in range(3)])]
            iou = iou_matrix_tlwh(gt[0].boxes, pred[0].boxes)
            best = (0, 0.0)
            for perm in itertools.permutations(range(3)):
                pairs = [(i, j) for i, j in enumerate(perm) if iou[i, j] >= 0.5]
                key = (len(pairs), -sum(1 - iou[i, j] for i, j in pairs))
                best = max(best, key)
            c = match_frames(gt, pred)
            got = [(i, j - 10) for i, j in c.frames[0].pairs]
            assert len(got) == best[0]
            assert -sum(1 - iou[i, j] for i, j in got) == pytest.approx(best[1], abs=1e-12)


class TestMota:
    def test_perfect(self):
        assert mota(ClearCounts(n_gt=5)) == 1.0

    def test_worked_example(self):
        assert mota(ClearCounts(n_gt=10, fp=1, fn=2, idsw=1)) == 0.6

    def test_empty_predictions(self):
        gt = seq({i: {1: (10.0 * i, 0, 5, 5)} for i in range(1, 11)}, 1)
        c = match_frames(gt, [])
        assert c.fn == 10 and mota(c) == 0.0

    def test_no_gt(self):
        with pytest.raises(ValueError):
            mota(ClearCounts())


class TestIdf1:
    def test_perfect(self):
        gt = seq({1: moving(0, 5), 2: moving(100, 5)}, 5)
        assert idf1(gt, gt).idf1 == 1.0

    def test_no_predictions(self):
        assert idf1(seq({1: moving(0, 5)}, 5), []).idf1 == 0.0

    def test_partial_coverage(self):
        a, b = moving(0, 5), moving(100, 5)
        gt = seq({1: a, 2: b}, 5)
        pred = seq({11: a, 12: {t: b[t] for t in (1, 2, 3)}}, 5)
        r = idf1(gt, pred)
        assert (r.idtp, r.idfn, r.idfp) == (8, 2, 0)
        assert r.idf1 == pytest.approx(16 / 18, abs=1e-15)

    def test_brute_force_mapping(self, rng):
        for _ in range(30):
            gt, pred = random_scene(rng, int(rng.integers(1, 6)))
            overlap, gl, pl = identity_overlap(gt, pred)
            tp = np.array([[overlap.get((g, p), 0) for p in sorted(pl)] for g in sorted(gl)], dtype=float)
            assert idf1(gt, pred).idtp == brute_force_identity_tp(tp.reshape(len(gl), len(pl)))


class TestHota:
    def test_perfect(self):
        gt = seq({1: moving(0, 5), 2: moving(100, 5)}, 5)
        h = hota(gt, gt)
        assert h.hota == pytest.approx(1.0, abs=1e-12) and h.deta == pytest.approx(1.0) and h.assa == pytest.approx(1.0)

    def test_no_predictions(self):
        h = hota(seq({1: moving(0, 5)}, 5), [])
        assert (h.hota, h.deta, h.assa) == (0.0, 0.0, 0.0)

    def test_split_track(self):
        box = (10.0, 10.0, 20.0, 40.0)
        gt = seq({1: {1: box, 2: box}}, 2)
        pred = seq({7: {1: box}, 8: {2: box}}, 2)
        h = hota(gt, pred)
        assert h.deta == pytest.approx(1.0, abs=1e-12)
        assert h.assa == pytest.approx(0.5, abs=1e-12)
        assert h.hota == pytest.approx(np.sqrt(0.5), abs=1e-9)

    def test_constant_iou(self):
        # IoU 0.6 everywhere: true positives for the 12 thresholds 0.05..0.60 only
        gt = seq({1: {t: (0.0, 0.0, 10.0, 10.0) for t in range(1, 5)}}, 4)
        pred = seq({3: {t: (0.0, 0.0, 6.0, 10.0) for t in range(1, 5)}}, 4)
        h = hota(gt, pred)
        assert h.hota == pytest.approx(12 / 19, abs=1e-12)

    def test_alpha_identity(self, rng):
        for _ in range(10):
            gt, pred = random_scene(rng, 4)
            h = hota(gt, pred)
            np.testing.assert_allclose(h.hota_alpha, np.sqrt(h.deta_alpha * h.assa_alpha), atol=1e-12)
            assert len(h.hota_alpha) == len(HOTA_ALPHAS) == 19


def relabel(frames, mapping):
    return [FrameAnnotations(f.frame_index, [AnnotationRow(mapping[r.track_id], r.box, r.confidence) for r in f.rows])
            for f in frames]


def test_ranges_and_relabel_invariance(rng):
    for _ in range(15):
        gt, pred = random_scene(rng, 5)
        rep = evaluate(gt, pred)
        assert rep.MOTA <= 1
        for v in (rep.IDF1, rep.HOTA, rep.DetA, rep.AssA):
            assert 0 <= v <= 1
        ids = sorted({r.track_id for f in pred for r in f.rows})
        mapping = dict(zip(ids, rng.permutation(len(ids)) * 3 + 1000))
        other = evaluate(gt, relabel(pred, {k: int(v) for k, v in mapping.items()}))
        assert other.MOTA == rep.MOTA and other.IDF1 == rep.IDF1
        assert other.HOTA == pytest.approx(rep.HOTA, abs=1e-12)


class TestFrames:
    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            FrameAnnotations(1, [AnnotationRow(1, (0, 0, 5, 5)), AnnotationRow(1, (9, 9, 5, 5))])

    def test_non_positive_size(self):
        with pytest.raises(ValueError):
            FrameAnnotations(1, [AnnotationRow(1, (0, 0, 0, 5))])

    def test_frame_range(self):
        gt = seq({1: moving(0, 5)}, 5)
        pred = seq({1: {3: (0, 0, 5, 5), 9: (0, 0, 5, 5), 12: (0, 0, 5, 5)}}, 12)
        with pytest.raises(FrameRangeError) as info:
            check_frame_range(gt, pred)
        assert info.value.frame == 9 and "9" in str(info.value)
        check_frame_range(gt, gt)
