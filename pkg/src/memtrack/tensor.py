"""Dense numeric kernel shared by every model module.

Tensors are plain float64 numpy arrays. Shapes are checked explicitly and a
mismatch raises ``ValueError``; nothing relies on implicit broadcasting
between operands of different rank.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend


def as_tensor(x, ndim=None, name="tensor"):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dims, got shape {arr.shape}")
    return arr


def dump_tensor(x):
    """JSON-ready ``{"shape": [...], "data": [...]}`` in row-major order."""
    arr = np.asarray(x, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def load_tensor(doc):
    shape = tuple(int(s) for s in doc["shape"])
    data = np.asarray(doc["data"], dtype=np.float64)
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"tensor data length {data.size} does not match shape {shape}")
    return data.reshape(shape)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def inverse_sigmoid(p, eps=1e-6):
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    if not -v.ndim <= axis < v.ndim:
        raise ValueError(f"axis {axis} out of range for shape {v.shape}")
    z = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def logsumexp(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] == 0:
        return np.full(np.delete(v.shape, axis % v.ndim), -np.inf)
    m = np.max(v, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(v - m), axis=axis))


def linear(x, w, b=None):
    """Row-wise affine map ``x @ w.T + b``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight width {w.shape[1]}")
    y = x @ w.T
    if b is not None:
        y = y + b
    return y


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


@dataclass
class AttentionParams:
    """Multi-head attention weights, each (d_model, d_model), applied as ``x @ W.T``.

    ``logit_scale`` overrides the default 1/sqrt(d_model / n_heads).
    """

    d_model: int
    n_heads: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    logit_scale: Optional[float] = None

    def __post_init__(self):
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        for name in ("wq", "wk", "wv", "wo"):
            w = as_tensor(getattr(self, name), 2, name)
            if w.shape != (self.d_model, self.d_model):
                raise ValueError(f"{name} has shape {w.shape}, expected {(self.d_model, self.d_model)}")
            setattr(self, name, w)

    @property
    def scale(self):
        if self.logit_scale is not None:
            return float(self.logit_scale)
        return 1.0 / np.sqrt(self.d_model // self.n_heads)

    @classmethod
    def identity(cls, d_model, n_heads=1, logit_scale=None):
        eye = np.eye(d_model)
        return cls(d_model, n_heads, eye, eye.copy(), eye.copy(), eye.copy(), logit_scale)

    @classmethod
    def random(cls, d_model, n_heads, rng, std=0.02):
        ws = [rng.normal(0.0, std, (d_model, d_model)) for _ in range(4)]
        return cls(d_model, n_heads, *ws)


def attend(q, k, v, params, sink_logit=None, return_logits=False):
    """Scaled dot-product multi-head attention.

    q: [nq, d], k and v: [nk, d]. With ``sink_logit`` set, every head gets an
    extra key with that fixed logit and a zero value; its weight is the mass
    the query declines to place on the real keys. ``return_logits`` also
    returns the per-head logits [n_heads, nq, nk(+1)].
    """
    d = params.d_model
    q = as_tensor(q, 2, "q")
    k = as_tensor(k, 2, "k")
    v = as_tensor(v, 2, "v")
    if q.shape[1] != d or k.shape[1] != d or v.shape[1] != d:
        raise ValueError(f"attend: widths {q.shape[1]}, {k.shape[1]}, {v.shape[1]} must equal d_model={d}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"attend: {k.shape[0]} keys but {v.shape[0]} values")
    if k.shape[0] == 0 and sink_logit is None:
        raise ValueError("attend: no keys")
    h = params.n_heads
    dh = d // h
    nq, nk = q.shape[0], k.shape[0]
    Q = (q @ params.wq.T).reshape(nq, h, dh).transpose(1, 0, 2)
    K = (k @ params.wk.T).reshape(nk, h, dh).transpose(1, 0, 2)
    V = (v @ params.wv.T).reshape(nk, h, dh).transpose(1, 0, 2)
    logits = (Q @ K.transpose(0, 2, 1)) * params.scale
    if sink_logit is not None:
        logits = np.concatenate([logits, np.full((h, nq, 1), float(sink_logit))], axis=2)
        V = np.concatenate([V, np.zeros((h, 1, dh))], axis=1)
    weights = softmax(logits, axis=2)
    heads = weights @ V
    out = heads.transpose(1, 0, 2).reshape(nq, d) @ params.wo.T
    if return_logits:
        return out, logits
    return out


def conv2d(x, w, b, stride=1, pad=0):
    """Zero-padded 2-D cross-correlation of x [C,H,W] with w [K,C,kh,kw]."""
    x = as_tensor(x, 3, "x")
    w = as_tensor(w, 4, "w")
    b = as_tensor(b, 1, "b")
    C, H, W = x.shape
    K, Cw, kh, kw = w.shape
    if Cw != C:
        raise ValueError(f"conv2d: input has {C} channels, kernel expects {Cw}")
    if b.shape[0] != K:
        raise ValueError(f"conv2d: bias length {b.shape[0]} != {K} output channels")
    if stride < 1 or pad < 0:
        raise ValueError("conv2d: stride must be positive and pad non-negative")
    if kh > H + 2 * pad or kw > W + 2 * pad:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {H + 2 * pad}x{W + 2 * pad}")
    return backend.kernels.conv2d(x, w, b, int(stride), int(pad))


def bilinear_sample(x, points):
    """Sample x [C,H,W] at real (y, x) points; missing neighbours read as zero."""
    x = as_tensor(x, 3, "x")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ys = np.ascontiguousarray(pts[:, 0])
    xs = np.ascontiguousarray(pts[:, 1])
    return backend.kernels.bilinear_sample(x, ys, xs)


def bilinear_resize(x, factor):
    """Bilinear resize (align_corners=False) to floor(H*factor) x floor(W*factor)."""
    x = as_tensor(x, 3, "x")
    if not factor > 0:
        raise ValueError("bilinear_resize: factor must be positive")
    C, H, W = x.shape
    Ho, Wo = int(np.floor(H * factor)), int(np.floor(W * factor))
    if Ho < 1 or Wo < 1:
        raise ValueError(f"bilinear_resize: output size {Ho}x{Wo} is empty")

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, wy = axis_weights(H, Ho)
    x0, x1, wx = axis_weights(W, Wo)
    top = x[:, y0, :] * (1 - wy)[None, :, None] + x[:, y1, :] * wy[None, :, None]
    return top[:, :, x0] * (1 - wx)[None, None, :] + top[:, :, x1] * wx[None, None, :]


def deform_conv2d(x, offsets, w, b, pad=1):
    """Stride-1 deformable convolution with one offset group.

    offsets: [2*kh*kw, H_out, W_out] holding a (dy, dx) pair per kernel tap,
    tap-major. Zero offsets reduce to ``conv2d(x, w, b, 1, pad)``.
    """
    x = as_tensor(x, 3, "x")
    w = as_tensor(w, 4, "w")
    b = as_tensor(b, 1, "b")
    offsets = as_tensor(offsets, 3, "offsets")
    C, H, W = x.shape
    K, Cw, kh, kw = w.shape
    if Cw != C:
        raise ValueError(f"deform_conv2d: input has {C} channels, kernel expects {Cw}")
    Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
    if (Ho, Wo) != (H, W):
        raise ValueError("deform_conv2d: padding must preserve the spatial size")
    if offsets.shape != (2 * kh * kw, Ho, Wo):
        raise ValueError(f"deform_conv2d: offsets shape {offsets.shape}, expected {(2 * kh * kw, Ho, Wo)}")
    cols = backend.kernels.deform_im2col(x, offsets, kh, kw, int(pad))
    out = w.reshape(K, C * kh * kw) @ cols + b[:, None]
    return out.reshape(K, Ho, Wo)
