"""Scale-variant pyramid with progressive feature transfer layers (PFTL).

Each PFTL aligns a source feature to a reference feature with a deformable
convolution whose offsets come from both inputs, gates the aligned feature
with a per-channel spatial softmax mask, and adds the convolved result back
onto the reference. Levels are built by stride-2 convolutions and merged
top-down after bilinear upsampling.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .tensor import as_tensor, bilinear_resize, conv2d, deform_conv2d, softmax

KERNEL = 3


@dataclass
class PftlParams:
    offset_w: np.ndarray  # [2*k*k, 2C, k, k]
    offset_b: np.ndarray
    mask_ref_w: np.ndarray  # [C, C, k, k], applied to the reference
    mask_ref_b: np.ndarray
    mask_src_w: np.ndarray  # [C, C, k, k], applied to the source
    mask_src_b: np.ndarray
    deform_w: np.ndarray  # [C, C, k, k]
    deform_b: np.ndarray
    residual_w: np.ndarray  # [C, 2C, k, k]
    residual_b: np.ndarray

    @property
    def channels(self):
        return self.deform_w.shape[0]

    @classmethod
    def random(cls, C, rng, std=0.02, k=KERNEL):
        def w(*shape):
            return rng.normal(0.0, std, shape)

        return cls(
            w(2 * k * k, 2 * C, k, k), np.zeros(2 * k * k),
            w(C, C, k, k), np.zeros(C),
            w(C, C, k, k), np.zeros(C),
            w(C, C, k, k), np.zeros(C),
            w(C, 2 * C, k, k), np.zeros(C),
        )


def _check_pair(x0, xprev):
    x0 = as_tensor(x0, 3, "x0")
    xprev = as_tensor(xprev, 3, "xprev")
    if x0.shape != xprev.shape:
        raise ValueError(f"PFTL inputs differ in shape: {x0.shape} vs {xprev.shape}")
    return x0, xprev


def pftl_offsets(x0, xprev, params):
    """Per-position (dy, dx) for every kernel tap, from the concatenated inputs."""
    x0, xprev = _check_pair(x0, xprev)
    return conv2d(np.concatenate([x0, xprev]), params.offset_w, params.offset_b, 1, KERNEL // 2)


def pftl_mask(x0, xprev, params):
    """Softmax over spatial positions, per channel, of conv(x0) - conv(xprev)."""
    x0, xprev = _check_pair(x0, xprev)
    diff = conv2d(x0, params.mask_ref_w, params.mask_ref_b, 1, KERNEL // 2) - conv2d(
        xprev, params.mask_src_w, params.mask_src_b, 1, KERNEL // 2
    )
    C, H, W = diff.shape
    return softmax(diff.reshape(C, H * W), axis=1).reshape(C, H, W)


def pftl_deform(x0, xprev, params, offsets=None):
    """Deformable convolution of the source at the learned offsets."""
    x0, xprev = _check_pair(x0, xprev)
    if offsets is None:
        offsets = pftl_offsets(x0, xprev, params)
    return deform_conv2d(xprev, offsets, params.deform_w, params.deform_b, pad=KERNEL // 2)


def pftl_forward(x0, xprev, params, offsets=None):
    x0, xprev = _check_pair(x0, xprev)
    aligned = pftl_deform(x0, xprev, params, offsets) * pftl_mask(x0, xprev, params)
    residual = conv2d(np.concatenate([x0, aligned]), params.residual_w, params.residual_b, 1, KERNEL // 2)
    return x0 + residual


@dataclass
class SvpParams:
    pftl: List[List[PftlParams]]  # [level][block]
    down: List[Tuple[np.ndarray, np.ndarray]]  # level m-1 -> m, stride 2
    merge: List[Tuple[np.ndarray, np.ndarray]]  # [C, 2C, 1, 1] per level below the top
    up_factor: float = 2.0

    def __post_init__(self):
        M = len(self.pftl)
        if M < 1 or any(len(level) < 1 for level in self.pftl):
            raise ValueError("SVP needs at least one level and one PFTL per level")
        if len(self.down) != M - 1 or len(self.merge) != M - 1:
            raise ValueError(f"SVP with {M} levels needs {M - 1} downscale and merge convolutions")
        if not self.up_factor > 0:
            raise ValueError("up_factor must be positive")

    @property
    def levels(self):
        return len(self.pftl)

    @classmethod
    def random(cls, C, rng, levels=3, blocks=4, std=0.02):
        return cls(
            pftl=[[PftlParams.random(C, rng, std) for _ in range(blocks)] for _ in range(levels)],
            down=[(rng.normal(0, std, (C, C, KERNEL, KERNEL)), np.zeros(C)) for _ in range(levels - 1)],
            merge=[(rng.normal(0, std, (C, 2 * C, 1, 1)), np.zeros(C)) for _ in range(levels - 1)],
        )


def build_pyramid(x, params):
    levels = [x]
    for w, b in params.down:
        levels.append(conv2d(levels[-1], w, b, 2, KERNEL // 2))
    return levels


def svp_forward(x, params):
    """Fuse a feature map across scales.

    ``x`` is ``[reference]`` or ``[reference, source]``; with one map the
    source is the reference itself. Returns one map per level, level ``m``
    at 1/2**m of the input resolution.
    """
    if not 1 <= len(x) <= 2:
        raise ValueError("svp_forward expects [reference] or [reference, source]")
    ref = as_tensor(x[0], 3, "reference")
    src = as_tensor(x[-1], 3, "source")
    if ref.shape != src.shape:
        raise ValueError("reference and source maps differ in shape")
    M = params.levels
    _, H, W = ref.shape
    if H % 2 ** (M - 1) or W % 2 ** (M - 1):
        raise ValueError(f"spatial size {H}x{W} not divisible by 2**{M - 1}")
    ref_levels = build_pyramid(ref, params)
    src_levels = ref_levels if len(x) == 1 else build_pyramid(src, params)

    chains = []
    for m in range(M):
        prev = src_levels[m]
        for block in params.pftl[m]:
            prev = pftl_forward(ref_levels[m], prev, block)
        chains.append(prev)

    out = [None] * M
    out[M - 1] = chains[M - 1]
    for m in range(M - 2, -1, -1):
        up = bilinear_resize(out[m + 1], params.up_factor)
        if up.shape != chains[m].shape:
            raise ValueError(f"upsampled level {m + 1} has shape {up.shape}, level {m} is {chains[m].shape}")
        w, b = params.merge[m]
        out[m] = conv2d(np.concatenate([up, chains[m]]), w, b, 1, 0)
    return out
