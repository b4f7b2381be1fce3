"""Frame feature sources for the learned proposal path, and box embeddings
for detections that carry no appearance vector."""
from typing import Protocol

import numpy as np

from ..nn import sinusoid_table


class FeatureSource(Protocol):
    def __call__(self, frame_index: int) -> np.ndarray:
        """Feature map [D, H, W] for one frame."""


class SyntheticFeatureSource:
    """Paints each object's identity embedding onto the grid cells its box covers.

    Cells covered by several objects hold the sum; every cell gets seeded
    Gaussian noise of std ``noise``.
    """

    def __init__(self, gt, identity_embeddings, image_size, grid=(16, 16), noise=0.0, seed=0):
        self.frames = {f.frame_index: f for f in gt}
        self.embeddings = identity_embeddings
        self.image_size = tuple(image_size)
        self.grid = tuple(grid)
        self.noise = float(noise)
        self.seed = seed
        dims = {v.shape[0] for v in identity_embeddings.values()}
        if len(dims) > 1:
            raise ValueError("identity embeddings differ in width")
        self.channels = dims.pop() if dims else 1

    def __call__(self, frame_index):
        H, W = self.grid
        img_w, img_h = self.image_size
        out = np.zeros((self.channels, H, W))
        cy = (np.arange(H) + 0.5) * img_h / H
        cx = (np.arange(W) + 0.5) * img_w / W
        frame = self.frames.get(frame_index)
        for r in frame.rows if frame else []:
            l, t, w, h = r.box
            ys = (cy >= t) & (cy < t + h)
            xs = (cx >= l) & (cx < l + w)
            out[:, ys[:, None] & xs[None, :]] += self.embeddings[r.track_id][:, None]
        if self.noise:
            rng = np.random.default_rng([self.seed, 2, frame_index])
            out += rng.normal(0, self.noise, out.shape)
        return out


def box_embedding(box, image_size, d):
    """Unit-norm sinusoidal code of a pixel (left, top, w, h) box.

    Nearby boxes get similar codes, so detections without appearance
    vectors can still be associated through attention.
    """
    if d % 8:
        raise ValueError("box embedding width must be divisible by 8")
    W, H = image_size
    l, t, w, h = (float(v) for v in box)
    coords = np.array([(l + w / 2) / W, (t + h / 2) / H, w / W, h / H]) * 100.0
    parts = [sinusoid_table([c], d // 4, base=100.0)[0] for c in coords]
    v = np.concatenate(parts)
    return v / np.linalg.norm(v)
