"""Synthetic scenes: constant-velocity boxes, scripted occlusions, oracle detections."""
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from ..boxes import tlwh_to_cxcywh
from ..cpn import Proposal
from ..metrics import AnnotationRow, FrameAnnotations


@dataclass
class SceneConfig:
    n_objects: int = 10
    frame_count: int = 100
    image_size: Tuple[int, int] = (640, 480)  # (W, H) pixels
    velocity_range: Tuple[float, float] = (0.5, 3.0)  # px / frame
    size_range: Tuple[float, float] = (30.0, 60.0)  # box width, px; height is twice the width
    occlusions: List[Tuple[int, int, int]] = field(default_factory=list)  # (object id, start frame, duration)
    box_jitter: float = 0.0  # px
    embedding_noise: float = 0.0
    drop_prob: float = 0.0
    motion_noise: float = 0.05  # px / frame, velocity random walk
    embedding_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.velocity_range = tuple(float(v) for v in self.velocity_range)
        self.size_range = tuple(float(v) for v in self.size_range)
        self.occlusions = [tuple(int(v) for v in ev) for ev in self.occlusions]
        if self.n_objects < 0 or self.frame_count < 1:
            raise ValueError("need n_objects >= 0 and frame_count >= 1")
        W, H = self.image_size
        lo, hi = self.size_range
        if not 0 < lo <= hi or 2 * hi >= H or hi >= W:
            raise ValueError(f"size range {self.size_range} does not fit a {W}x{H} image")
        if not 0 <= self.velocity_range[0] <= self.velocity_range[1]:
            raise ValueError("velocity range must be non-negative and ordered")
        for obj, start, duration in self.occlusions:
            if not 1 <= obj <= self.n_objects:
                raise ValueError(f"occlusion names unknown object {obj}")
            if duration < 1:
                raise ValueError("occlusion durations must be >= 1")
        for name in ("box_jitter", "embedding_noise", "motion_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")

    def to_dict(self):
        doc = asdict(self)
        doc["image_size"] = list(self.image_size)
        doc["velocity_range"] = list(self.velocity_range)
        doc["size_range"] = list(self.size_range)
        doc["occlusions"] = [list(ev) for ev in self.occlusions]
        return doc


def orthonormal_embeddings(n, d, rng):
    """n mutually orthogonal unit vectors in R^d, as rows."""
    if n > d:
        raise ValueError(f"cannot build {n} orthogonal embeddings in {d} dimensions")
    if n == 0:
        return np.zeros((0, d))
    q, _ = np.linalg.qr(rng.normal(size=(d, n)))
    return q.T.copy()


def _reflect(pos, vel, lo, hi):
    if pos < lo:
        return 2 * lo - pos, -vel
    if pos > hi:
        return 2 * hi - pos, -vel
    return pos, vel


def generate_scene(cfg):
    """Ground truth frames 1..frame_count (pixel tlwh) and id -> identity embedding."""
    rng = np.random.default_rng([cfg.seed, 0])
    W, H = cfg.image_size
    emb = orthonormal_embeddings(cfg.n_objects, cfg.embedding_dim, rng)
    embeddings = {i + 1: emb[i] for i in range(cfg.n_objects)}

    widths = rng.uniform(*cfg.size_range, cfg.n_objects)
    heights = 2.0 * widths
    x = rng.uniform(0, W - widths)
    y = rng.uniform(0, H - heights)
    speed = rng.uniform(*cfg.velocity_range, cfg.n_objects)
    angle = rng.uniform(0, 2 * np.pi, cfg.n_objects)
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)

    hidden = set()
    for obj, start, duration in cfg.occlusions:
        hidden.update((obj, t) for t in range(start, start + duration))

    frames = []
    for t in range(1, cfg.frame_count + 1):
        if t > 1:
            vx = vx + rng.normal(0, cfg.motion_noise, cfg.n_objects)
            vy = vy + rng.normal(0, cfg.motion_noise, cfg.n_objects)
            x, y = x + vx, y + vy
            for i in range(cfg.n_objects):
                x[i], vx[i] = _reflect(x[i], vx[i], 0.0, W - widths[i])
                y[i], vy[i] = _reflect(y[i], vy[i], 0.0, H - heights[i])
        rows = [
            AnnotationRow(i + 1, (float(x[i]), float(y[i]), float(widths[i]), float(heights[i])), 1.0)
            for i in range(cfg.n_objects)
            if (i + 1, t) not in hidden
        ]
        frames.append(FrameAnnotations(t, rows))
    return frames, embeddings


def oracle_detections(gt, identity_embeddings, cfg):
    """Per-frame proposals from visible ground truth, with noise and drops; order shuffled."""
    rng = np.random.default_rng([cfg.seed, 1])
    W, H = cfg.image_size
    d = cfg.embedding_dim
    out = []
    for frame in gt:
        props = []
        for row in frame.rows:
            jitter = rng.normal(0, cfg.box_jitter, 4)
            noise = rng.normal(0, cfg.embedding_noise / np.sqrt(d), d)
            objectness = 1.0 - min(abs(rng.normal(0, 0.02)), 0.1)
            if rng.random() < cfg.drop_prob:
                continue
            l, t, w, h = np.asarray(row.box) + jitter
            w, h = max(w, 1.0), max(h, 1.0)
            box = tlwh_to_cxcywh(np.array([l, t, w, h]), (W, H))
            props.append(Proposal(identity_embeddings[row.track_id] + noise, box, objectness))
        order = rng.permutation(len(props))
        out.append([props[i] for i in order])
    return out
