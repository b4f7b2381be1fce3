"""Candidate proposal network.

A transformer encoder over the flattened frame feature map, and a decoder
that turns a fixed set of object queries into proposal embeddings, boxes and
objectness scores.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .nn import DecoderLayer, EncoderLayer, sinusoid_table
from .tensor import as_tensor, linear, sigmoid


def positional_encoding(H, W, d):
    """Fixed 2-D sinusoidal encoding, [H*W, d]: first half encodes y, second half x."""
    if d % 4:
        raise ValueError(f"positional encoding width {d} must be divisible by 4")
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    half = d // 2
    return np.hstack([sinusoid_table(ys.ravel(), half), sinusoid_table(xs.ravel(), half)])


@dataclass
class Proposal:
    embedding: np.ndarray
    box: np.ndarray  # normalized (cx, cy, w, h)
    objectness: float

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        self.box = np.asarray(self.box, dtype=np.float64)
        if self.box.shape != (4,) or np.any(self.box < 0) or np.any(self.box > 1):
            raise ValueError(f"proposal box {self.box} outside [0, 1]^4")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")


@dataclass
class ObjectQuerySet:
    """Learned decoder queries: content embeddings plus positional encodings."""

    embeddings: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        self.embeddings = as_tensor(self.embeddings, 2, "query embeddings")
        self.pos = as_tensor(self.pos, 2, "query positions")
        if self.embeddings.shape != self.pos.shape:
            raise ValueError("query embeddings and positions differ in shape")
        rows = np.hstack([self.embeddings, self.pos])
        if len(np.unique(rows, axis=0)) < len(rows):
            raise ValueError("object queries must be pairwise distinct")

    def __len__(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def permuted(self, order):
        return ObjectQuerySet(self.embeddings[order], self.pos[order])

    @classmethod
    def random(cls, n, d, rng, std=0.02):
        return cls(rng.normal(0, std, (n, d)), rng.normal(0, std, (n, d)))


@dataclass
class CpnParams:
    input_w: np.ndarray  # [d, D]
    input_b: np.ndarray
    encoder: List[EncoderLayer]
    decoder: List[DecoderLayer]
    box_w: np.ndarray  # [4, d]
    box_b: np.ndarray
    obj_w: np.ndarray  # [1, d]
    obj_b: np.ndarray

    def __post_init__(self):
        if not self.encoder or not self.decoder:
            raise ValueError("CPN needs at least one encoder and one decoder layer")

    @property
    def dim(self):
        return self.input_w.shape[0]

    @classmethod
    def random(cls, in_channels, rng, d=64, n_heads=4, n_encoder=2, n_decoder=2, hidden=None, std=0.02):
        hidden = hidden or 4 * d
        return cls(
            input_w=rng.normal(0, std, (d, in_channels)),
            input_b=np.zeros(d),
            encoder=[EncoderLayer.random(d, n_heads, hidden, rng) for _ in range(n_encoder)],
            decoder=[DecoderLayer.random(d, n_heads, hidden, rng) for _ in range(n_decoder)],
            box_w=rng.normal(0, std, (4, d)),
            box_b=np.zeros(4),
            obj_w=rng.normal(0, std, (1, d)),
            obj_b=np.zeros(1),
        )


def encode_frame(f0, params, grid):
    """Encode a flattened feature map f0 [D, H*W] into f1 [H*W, d]."""
    f0 = as_tensor(f0, 2, "f0")
    H, W = grid
    if f0.shape[1] != H * W:
        raise ValueError(f"feature map has {f0.shape[1]} positions, grid {H}x{W} needs {H * W}")
    if f0.shape[0] != params.input_w.shape[1]:
        raise ValueError(f"feature map has {f0.shape[0]} channels, CPN expects {params.input_w.shape[1]}")
    x = linear(f0.T, params.input_w, params.input_b)
    pos = positional_encoding(H, W, params.dim)
    for layer in params.encoder:
        x = layer(x, pos)
    return x


def decode_queries(f1, queries, params, memory_pos=None, traces=None):
    """Decoder output embeddings [N, d], one row per query."""
    f1 = as_tensor(f1, 2, "f1")
    if f1.shape[1] != params.dim or queries.dim != params.dim:
        raise ValueError(f"width mismatch: f1 {f1.shape[1]}, queries {queries.dim}, model {params.dim}")
    tgt = queries.embeddings
    for layer in params.decoder:
        trace = {} if traces is not None else None
        tgt = layer(tgt, f1, query_pos=queries.pos, memory_pos=memory_pos, trace=trace)
        if traces is not None:
            traces.append(trace)
    return tgt


def propose(f1, queries, params, memory_pos: Optional[np.ndarray] = None):
    """One proposal per object query, in query order."""
    h = decode_queries(f1, queries, params, memory_pos)
    boxes = sigmoid(linear(h, params.box_w, params.box_b))
    obj = sigmoid(linear(h, params.obj_w, params.obj_b))[:, 0]
    return [Proposal(h[i], boxes[i], float(obj[i])) for i in range(len(queries))]
