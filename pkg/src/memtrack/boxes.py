"""Box conversions and overlap measures.

Internal boxes are normalized (cx, cy, w, h); annotation files use pixel
(left, top, width, height). Conversion happens only at the harness boundary.
"""
import numpy as np


def cxcywh_to_xyxy(b):
    b = np.asarray(b, dtype=np.float64)
    cx, cy, w, h = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def xyxy_to_cxcywh(b):
    b = np.asarray(b, dtype=np.float64)
    x1, y1, x2, y2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], axis=-1)


def tlwh_to_xyxy(b):
    b = np.asarray(b, dtype=np.float64)
    return np.concatenate([b[..., :2], b[..., :2] + b[..., 2:4]], axis=-1)


def tlwh_to_cxcywh(b, image_size):
    """Pixel (left, top, w, h) -> normalized (cx, cy, w, h) for image (W, H)."""
    W, H = image_size
    b = np.asarray(b, dtype=np.float64)
    scale = np.array([W, H, W, H], dtype=np.float64)
    out = np.concatenate([b[..., :2] + b[..., 2:4] / 2, b[..., 2:4]], axis=-1) / scale
    return np.clip(out, 0.0, 1.0)


def cxcywh_to_tlwh(b, image_size):
    W, H = image_size
    b = np.asarray(b, dtype=np.float64) * np.array([W, H, W, H], dtype=np.float64)
    return np.concatenate([b[..., :2] - b[..., 2:4] / 2, b[..., 2:4]], axis=-1)


def iou_matrix_xyxy(a, b):
    """Pairwise IoU of [n,4] and [m,4] corner boxes; zero-area pairs give 0."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = np.clip(a[:, 2] - a[:, 0], 0, None) * np.clip(a[:, 3] - a[:, 1], 0, None)
    area_b = np.clip(b[:, 2] - b[:, 0], 0, None) * np.clip(b[:, 3] - b[:, 1], 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return out


def iou_matrix_tlwh(a, b):
    return iou_matrix_xyxy(tlwh_to_xyxy(np.asarray(a).reshape(-1, 4)), tlwh_to_xyxy(np.asarray(b).reshape(-1, 4)))


def iou_matrix_cxcywh(a, b):
    return iou_matrix_xyxy(cxcywh_to_xyxy(np.asarray(a).reshape(-1, 4)), cxcywh_to_xyxy(np.asarray(b).reshape(-1, 4)))


def giou_xyxy(a, b):
    """Generalized IoU of two corner boxes (scalar)."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    enclose = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    if enclose <= 0:
        return 0.0
    iou = inter / union if union > 0 else 0.0
    return iou - (enclose - union) / enclose
