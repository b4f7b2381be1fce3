"""Tracking and detection objectives with analytic gradients.

Every scalar loss returns ``(value, gradient)`` with the gradient taken with
respect to the prediction. The composite losses return a :class:`LossReport`
carrying per-entry gradients of the normalized total.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InvariantError

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    cls: float = 3.0
    l1: float = 6.0
    iou: float = 3.0
    track: float = 2.0
    det: float = 2.0

    def __post_init__(self):
        for name in ("cls", "l1", "iou", "track", "det"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"loss weight {name} must be finite and non-negative, got {val}")
            setattr(self, name, val)


@dataclass
class Target:
    """Supervision for one decoder entry. ``uniqueness``/``box`` are None when unsupervised."""

    objectness: float
    uniqueness: Optional[float] = None
    box: Optional[np.ndarray] = None
    gt_index: Optional[int] = None


@dataclass
class LossReport:
    kind: str
    components: dict
    total: float
    raw_total: float
    n_visible: int
    grad_objectness: np.ndarray = field(repr=False)
    grad_uniqueness: np.ndarray = field(repr=False)
    grad_box: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "kind": self.kind,
            "components": {k: float(v) for k, v in self.components.items()},
            "total": float(self.total),
            "raw_total": float(self.raw_total),
            "n_visible": int(self.n_visible),
        }


def focal_loss(p, y, alpha=0.25, gamma=2.0):
    """Binary focal loss and its derivative in ``p``; ``p`` must lie in (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"focal_loss: p must be strictly inside (0, 1), got {p}")
    if y == 1:
        q = 1.0 - p
        value = -alpha * q**gamma * np.log(p)
        grad = alpha * (gamma * q ** (gamma - 1) * np.log(p) - q**gamma / p) if gamma else -alpha / p
    elif y == 0:
        value = -(1.0 - alpha) * p**gamma * np.log1p(-p)
        if gamma:
            grad = -(1.0 - alpha) * (gamma * p ** (gamma - 1) * np.log1p(-p) - p**gamma / (1.0 - p))
        else:
            grad = (1.0 - alpha) / (1.0 - p)
    else:
        raise ValueError(f"focal_loss: label must be 0 or 1, got {y}")
    return float(value), float(grad)


def l1_box_loss(pred, gt):
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float(np.abs(diff).sum()), np.sign(diff)


def giou_loss(pred, gt):
    """``1 - GIoU`` for (cx, cy, w, h) boxes, gradient w.r.t. the predicted box."""
    cx, cy, w, h = (float(v) for v in pred)
    gcx, gcy, gw, gh = (float(v) for v in gt)
    if min(w, h, gw, gh) < 0:
        raise ValueError("giou_loss: widths and heights must be non-negative")
    x1, x2, y1, y2 = cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2
    X1, X2, Y1, Y2 = gcx - gw / 2, gcx + gw / 2, gcy - gh / 2, gcy + gh / 2

    iw = min(x2, X2) - max(x1, X1)
    ih = min(y2, Y2) - max(y1, Y1)
    # d(iw)/d(x1, x2), d(ih)/d(y1, y2)
    diw = np.array([-1.0 if x1 > X1 else 0.0, 1.0 if x2 < X2 else 0.0])
    dih = np.array([-1.0 if y1 > Y1 else 0.0, 1.0 if y2 < Y2 else 0.0])
    if iw <= 0:
        iw, diw = 0.0, np.zeros(2)
    if ih <= 0:
        ih, dih = 0.0, np.zeros(2)
    inter = iw * ih
    cw = max(x2, X2) - min(x1, X1)
    ch = max(y2, Y2) - min(y1, Y1)
    dcw = np.array([-1.0 if x1 < X1 else 0.0, 1.0 if x2 > X2 else 0.0])
    dch = np.array([-1.0 if y1 < Y1 else 0.0, 1.0 if y2 > Y2 else 0.0])
    enclose = cw * ch
    union = w * h + gw * gh - inter
    if enclose <= 0:
        return 1.0, np.zeros(4)
    if union <= 0:
        return 2.0, np.zeros(4)

    value = 2.0 - inter / union - union / enclose
    # gradients over corners (x1, x2, y1, y2)
    d_inter = np.concatenate([diw * ih, dih * iw])
    d_area = np.array([-h, h, -w, w])
    d_union = d_area - d_inter
    d_enclose = np.concatenate([dcw * ch, dch * cw])
    d_corner = -(d_inter * union - inter * d_union) / union**2 - (d_union * enclose - union * d_enclose) / enclose**2
    gx1, gx2, gy1, gy2 = d_corner
    grad = np.array([gx1 + gx2, gy1 + gy2, (gx2 - gx1) / 2, (gy2 - gy1) / 2])
    return float(value), grad


def _clamp(p):
    return min(max(float(p), PROB_EPS), 1.0 - PROB_EPS)


def _frame_loss(kind, entries, targets, w, n_visible, alpha, gamma):
    if len(entries) != len(targets):
        raise ValueError(f"{len(entries)} entries but {len(targets)} targets")
    n = len(entries)
    if n_visible is None:
        n_visible = sum(t.box is not None for t in targets)
    has_box = any(t.box is not None for t in targets)
    if n_visible == 0 and has_box:
        raise InvariantError("box supervision present but no visible instances")
    norm = float(max(n_visible, 1))

    l_obj = l_uni = l_bbox = l_iou = 0.0
    g_obj = np.zeros(n)
    g_uni = np.zeros(n)
    g_l1 = np.zeros((n, 4))
    g_iou = np.zeros((n, 4))
    for i, (e, t) in enumerate(zip(entries, targets)):
        v, g = focal_loss(_clamp(e.objectness), int(round(t.objectness)), alpha, gamma)
        l_obj += v
        g_obj[i] = g
        if kind == "track" and t.uniqueness is not None and e.kind == "candidate":
            v, g = focal_loss(_clamp(e.uniqueness), int(round(t.uniqueness)), alpha, gamma)
            l_uni += v
            g_uni[i] = g
        if t.box is not None:
            v, g = l1_box_loss(e.box, t.box)
            l_bbox += v
            g_l1[i] = g
            v, g = giou_loss(e.box, t.box)
            l_iou += v
            g_iou[i] = g

    if kind == "track":
        raw = w.cls * (l_obj + l_uni) + w.l1 * (l_bbox + l_iou)
        g_box = w.l1 * (g_l1 + g_iou)
        g_u = w.cls * g_uni
    else:
        raw = w.cls * l_obj + w.l1 * l_bbox + w.iou * l_iou
        g_box = w.l1 * g_l1 + w.iou * g_iou
        g_u = np.zeros(n)
    components = {
        "L_obj": l_obj / norm,
        "L_uni": l_uni / norm,
        "L_bbox": l_bbox / norm,
        "L_iou": l_iou / norm,
    }
    return LossReport(
        kind=kind,
        components=components,
        total=raw / norm,
        raw_total=raw,
        n_visible=int(n_visible),
        grad_objectness=w.cls * g_obj / norm,
        grad_uniqueness=g_u / norm,
        grad_box=g_box / norm,
    )


def track_loss(entries, targets, w, n_visible=None, alpha=0.25, gamma=2.0):
    """Per-frame tracking loss: cls * (obj + uni) + l1 * (bbox + giou), over N_t."""
    return _frame_loss("track", entries, targets, w, n_visible, alpha, gamma)


def det_loss(entries, targets, w, n_visible=None, alpha=0.25, gamma=2.0):
    """Auxiliary detection loss: cls * obj + l1 * bbox + iou * giou, over N_t."""
    return _frame_loss("det", entries, targets, w, n_visible, alpha, gamma)


def seq_loss(per_frame_track: List[LossReport], per_frame_det: List[LossReport], w, detached=False):
    """Sequence objective. Tracking terms are summed then divided by the total
    visible-instance count; detection terms are summed as reported.
    ``detached`` drops the auxiliary detection branch (inference setting).
    """
    if not per_frame_track:
        raise ValueError("seq_loss: empty sequence")
    if len(per_frame_track) != len(per_frame_det):
        raise ValueError("seq_loss: track and det lists differ in length")
    n_total = sum(r.n_visible for r in per_frame_track)
    track = sum(r.raw_total for r in per_frame_track) / max(n_total, 1)
    det = sum(r.total for r in per_frame_det)
    lam_det = 0.0 if detached else w.det
    return w.track * track + lam_det * det
