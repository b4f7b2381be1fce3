"""Transformer building blocks and parameter (de)serialization.

Parameters are nested dataclasses of float64 arrays. ``state_dict`` flattens
them to dotted names; ``load_state_dict`` writes arrays back by name after a
shape check. The JSON file form maps each name to a tensor dump.
"""
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .tensor import AttentionParams, attend, dump_tensor, layer_norm, linear, load_tensor

PARAMS_SCHEMA = "memtrack.params/1"


@dataclass
class FeedForward:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __call__(self, x):
        return linear(np.maximum(linear(x, self.w1, self.b1), 0.0), self.w2, self.b2)

    @classmethod
    def random(cls, d_in, hidden, d_out, rng, std=0.02):
        return cls(rng.normal(0, std, (hidden, d_in)), np.zeros(hidden), rng.normal(0, std, (d_out, hidden)), np.zeros(d_out))

    @classmethod
    def zero(cls, d_in, hidden, d_out):
        return cls(np.zeros((hidden, d_in)), np.zeros(hidden), np.zeros((d_out, hidden)), np.zeros(d_out))

    @classmethod
    def identity(cls, d):
        # relu(x) - relu(-x) == x
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.zeros(2 * d), np.hstack([eye, -eye]), np.zeros(d))


@dataclass
class LayerNorm:
    gamma: np.ndarray
    beta: np.ndarray
    enabled: bool = True

    def __call__(self, x):
        if not self.enabled:
            return x
        return layer_norm(x, self.gamma, self.beta)

    @classmethod
    def default(cls, d, enabled=True):
        return cls(np.ones(d), np.zeros(d), enabled)


@dataclass
class EncoderLayer:
    attn: AttentionParams
    ffn: FeedForward
    norm1: LayerNorm
    norm2: LayerNorm

    def __call__(self, x, pos):
        qk = x + pos
        x = self.norm1(x + attend(qk, qk, x, self.attn))
        return self.norm2(x + self.ffn(x))

    @classmethod
    def random(cls, d, n_heads, hidden, rng):
        return cls(AttentionParams.random(d, n_heads, rng), FeedForward.random(d, hidden, d, rng),
                   LayerNorm.default(d), LayerNorm.default(d))


@dataclass
class DecoderLayer:
    """Post-norm decoder layer: query self-attention, cross-attention, FFN."""

    self_attn: AttentionParams
    cross_attn: AttentionParams
    ffn: FeedForward
    norm1: LayerNorm
    norm2: LayerNorm
    norm3: LayerNorm

    def __call__(self, tgt, memory, query_pos=None, memory_pos=None, sink_logit=None, trace=None):
        qp = tgt if query_pos is None else tgt + query_pos
        sa, sa_logits = attend(qp, qp, tgt, self.self_attn, return_logits=True)
        tgt = self.norm1(tgt + sa)
        q = tgt if query_pos is None else tgt + query_pos
        k = memory if memory_pos is None else memory + memory_pos
        ca, ca_logits = attend(q, k, memory, self.cross_attn, sink_logit=sink_logit, return_logits=True)
        if trace is not None:
            trace.update(self_attention=sa, self_logits=sa_logits, cross_attention=ca, cross_logits=ca_logits)
        tgt = self.norm2(tgt + ca)
        return self.norm3(tgt + self.ffn(tgt))

    @classmethod
    def random(cls, d, n_heads, hidden, rng):
        return cls(AttentionParams.random(d, n_heads, rng), AttentionParams.random(d, n_heads, rng),
                   FeedForward.random(d, hidden, d, rng),
                   LayerNorm.default(d), LayerNorm.default(d), LayerNorm.default(d))


def state_dict(obj, prefix=""):
    """Flatten a parameter tree into ``{dotted_name: array}``."""
    out = {}
    if isinstance(obj, np.ndarray):
        out[prefix] = obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            out.update(state_dict(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.update(state_dict(item, f"{prefix}.{i}" if prefix else str(i)))
    return out


def load_state_dict(obj, arrays, prefix=""):
    """Replace every array in ``obj`` with ``arrays[name]``; names must match exactly."""
    expected = state_dict(obj, prefix)
    missing = set(expected) - set(arrays)
    extra = set(arrays) - set(expected)
    if missing or extra:
        raise ValueError(f"parameter names differ: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
    for name, old in expected.items():
        new = np.asarray(arrays[name], dtype=np.float64)
        if new.shape != old.shape:
            raise ValueError(f"parameter {name}: shape {new.shape} != {old.shape}")
        old[...] = new
    return obj


def save_params(obj, path):
    doc = {"schema": PARAMS_SCHEMA, "params": {k: dump_tensor(v) for k, v in state_dict(obj).items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(obj, path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != PARAMS_SCHEMA:
        raise ValueError(f"{path}: unsupported parameter schema {doc.get('schema')!r}")
    return load_state_dict(obj, {k: load_tensor(v) for k, v in doc["params"].items()})


def sinusoid_table(positions, dim, base=10000.0):
    """Rows of interleaved (sin, cos) pairs, one row per position; dim must be even."""
    if dim % 2:
        raise ValueError("sinusoid dimension must be even")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    freqs = 1.0 / base ** (np.arange(dim // 2) * 2.0 / dim)
    out = np.empty((pos.shape[0], dim))
    out[:, 0::2] = np.sin(pos * freqs)
    out[:, 1::2] = np.cos(pos * freqs)
    return out

