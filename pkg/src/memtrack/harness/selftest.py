"""Quick built-in checks: gradients, attention and convolution oracles,
assignment, metric arithmetic and memory invariants."""
import time

import numpy as np

from .. import backend
from ..assignment import hungarian
from ..losses import LossWeights, Target, focal_loss, giou_loss, l1_box_loss, track_loss
from ..memory import MemoryBuffer, TrackState
from ..metrics import AnnotationRow, ClearCounts, FrameAnnotations, hota, mota
from ..reference import brute_force_assignment, central_difference, naive_attend, naive_conv2d, relative_error
from ..tensor import AttentionParams, attend, conv2d
from ..tracker import QueryEntry


def _random_box(rng):
    return np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)])


def check_gradients(rng, n=100):
    worst = 0.0
    for _ in range(n):
        p, y = rng.uniform(0.02, 0.98), int(rng.integers(2))
        worst = max(worst, relative_error(focal_loss(p, y)[1], central_difference(lambda v: focal_loss(v[0], y)[0], [p])))
        a, b = _random_box(rng), _random_box(rng)
        worst = max(worst, relative_error(giou_loss(a, b)[1], central_difference(lambda v: giou_loss(v, b)[0], a)))
        b = a + rng.uniform(0.01, 0.05, 4) * rng.choice([-1, 1], 4)
        worst = max(worst, relative_error(l1_box_loss(a, b)[1], central_difference(lambda v: l1_box_loss(v, b)[0], a)))
    return worst < 1e-4, {"max_relative_error": worst}


def check_attention(rng, n=20):
    worst = 0.0
    for _ in range(n):
        h = int(rng.choice([1, 2, 4]))
        d = 8
        params = AttentionParams.random(d, h, rng, std=0.5)
        q, k, v = rng.normal(size=(3, d)), rng.normal(size=(5, d)), rng.normal(size=(5, d))
        ref = naive_attend(q, k, v, params.wq, params.wk, params.wv, params.wo, h)
        worst = max(worst, float(np.abs(attend(q, k, v, params) - ref).max()))
    return worst < 1e-12, {"max_abs_error": worst}


def check_conv(rng, n=10):
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=(3, 9, 9))
        w = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=2)
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        worst = max(worst, float(np.abs(conv2d(x, w, b, stride, pad) - naive_conv2d(x, w, b, stride, pad)).max()))
    return worst < 1e-12, {"max_abs_error": worst}


def check_hungarian(rng, n=100):
    worst = 0.0
    for _ in range(n):
        cost = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        worst = max(worst, abs(hungarian(cost).cost - brute_force_assignment(cost)))
    return worst < 1e-9, {"max_cost_gap": worst}


def check_metrics(rng):
    m = mota(ClearCounts(n_gt=10, fp=1, fn=2, idsw=1))
    box = (10.0, 10.0, 20.0, 40.0)
    gt = [FrameAnnotations(1, [AnnotationRow(1, box)]), FrameAnnotations(2, [AnnotationRow(1, box)])]
    pred = [FrameAnnotations(1, [AnnotationRow(7, box)]), FrameAnnotations(2, [AnnotationRow(8, box)])]
    h = hota(gt, pred).hota
    ok = m == 0.6 and abs(h - np.sqrt(0.5)) < 1e-9
    return ok, {"mota_example": m, "hota_split_example": h}


def check_memory(rng, n=2000):
    buf = MemoryBuffer(max_tracks=4, horizon=6)
    frame = 0
    next_id = 1
    for _ in range(n):
        op = rng.integers(3)
        if op == 0:
            buf = buf.admit(next_id, TrackState(rng.normal(size=4), (0.5, 0.5, 0.1, 0.1), 1.0, frame))
            next_id += 1
        elif op == 1:
            frame += 1
            ids = buf.track_ids
            keep = [t for t in ids if rng.random() < 0.5]
            buf = buf.append_frame(frame, {t: TrackState(rng.normal(size=4), (0.5, 0.5, 0.1, 0.1), 1.0, frame) for t in keep})
        elif buf.track_ids:
            buf = buf.remove(buf.track_ids[int(rng.integers(len(buf.track_ids)))])
        buf.check_invariants()
    return True, {"operations": n}


def loss_sample(rng):
    entries = [QueryEntry("candidate", np.zeros(4), _random_box(rng), 0.7, 0.6),
               QueryEntry("tracklet", np.zeros(4), _random_box(rng), 0.8, 1.0, 1)]
    targets = [Target(1.0, 1.0, _random_box(rng)), Target(0.0)]
    return track_loss(entries, targets, LossWeights()).to_dict()


CHECKS = [
    ("gradients", check_gradients),
    ("attention", check_attention),
    ("conv2d", check_conv),
    ("hungarian", check_hungarian),
    ("metrics", check_metrics),
    ("memory", check_memory),
]


def run_selftest(seed=0):
    """Run every check on every available backend; returns a JSON-ready report."""
    results = []
    previous = backend.kernels.NAME
    try:
        for name in backend.available():
            backend.use(name)
            for check_name, fn in CHECKS:
                rng = np.random.default_rng([seed, len(results)])
                start = time.perf_counter()
                try:
                    ok, detail = fn(rng)
                except Exception as exc:  # a crash is a failed check
                    ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
                results.append({
                    "name": check_name,
                    "backend": name,
                    "passed": bool(ok),
                    "seconds": round(time.perf_counter() - start, 3),
                    "detail": detail,
                })
    finally:
        backend.use(previous)
    return {
        "passed": all(r["passed"] for r in results),
        "checks": results,
        "loss_report": loss_sample(np.random.default_rng(seed)),
    }
