"""Memory encoder: turns each track's stored history into a tracklet query.

Three cross-attention blocks per track:

* short-term: query is the most recent state, keys/values the last
  ``short_len`` states (aggregated short-term context, ASC);
* long-term: query is the track's aggregation token (DMAT), keys/values the
  last ``long_len`` states (aggregated long-term context, ALC);
* fusion: the DMAT attends over {ASC, ALC}; an FFN with a 2d-wide output is
  split into the tracklet embedding and the next DMAT.

Keys carry a fixed sinusoidal encoding of the state's age within the window,
scaled by ``temporal_gain``. Absent (zero-padded) states take part as
ordinary rows.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .nn import FeedForward, sinusoid_table
from .tensor import AttentionParams, attend, as_tensor

AGGREGATIONS = ("ours", "single", "long-after-short", "avg-pool", "max-pool")


@dataclass
class EncoderBlocks:
    short: AttentionParams
    long: AttentionParams
    fusion: AttentionParams
    fusion_ffn: FeedForward  # d -> hidden -> 2d
    dmat_init: np.ndarray
    short_len: int = 5
    long_len: int = 25
    temporal_gain: float = 1.0
    aggregation: str = "ours"

    def __post_init__(self):
        if not 1 <= self.short_len <= self.long_len:
            raise ValueError(f"need 1 <= short_len ({self.short_len}) <= long_len ({self.long_len})")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}; choose from {AGGREGATIONS}")
        d = self.short.d_model
        if any(p.d_model != d for p in (self.long, self.fusion)) or self.dmat_init.shape != (d,):
            raise ValueError("encoder blocks must share one width")
        if self.fusion_ffn.w2.shape[0] != 2 * d:
            raise ValueError("fusion FFN must output 2*d values")

    @property
    def dim(self):
        return self.short.d_model

    @classmethod
    def random(cls, d, rng, n_heads=4, hidden=None, std=0.02, **kw):
        hidden = hidden or 4 * d
        return cls(
            AttentionParams.random(d, n_heads, rng, std),
            AttentionParams.random(d, n_heads, rng, std),
            AttentionParams.random(d, n_heads, rng, std),
            FeedForward.random(d, hidden, 2 * d, rng, std),
            rng.normal(0, std, d),
            **kw,
        )

    @classmethod
    def identity(cls, d, beta=10.0, **kw):
        """Identity projections, single head, logits scaled by ``beta``, no
        temporal encoding; the fusion FFN copies its input into both heads."""
        eye = np.eye(d)
        ffn = FeedForward(np.vstack([eye, -eye]), np.zeros(2 * d),
                          np.vstack([np.hstack([eye, -eye])] * 2), np.zeros(2 * d))
        kw.setdefault("temporal_gain", 0.0)
        return cls(
            AttentionParams.identity(d, 1, beta),
            AttentionParams.identity(d, 1, beta),
            AttentionParams.identity(d, 1, beta),
            ffn,
            np.zeros(d),
            **kw,
        )


def _memory_rows(states, blocks):
    if not states:
        raise ValueError("empty state window")
    values = np.stack([s.embedding for s in states])
    if values.shape[1] != blocks.dim:
        raise ValueError(f"state width {values.shape[1]} != encoder width {blocks.dim}")
    keys = values
    if blocks.temporal_gain:
        ages = np.arange(len(states))[::-1]
        keys = values + blocks.temporal_gain * sinusoid_table(ages, blocks.dim)
    return keys, values


def encode_short(states, blocks):
    """Aggregated short-term context; the newest state is the query."""
    keys, values = _memory_rows(states, blocks)
    return attend(values[-1:], keys, values, blocks.short)[0]


def encode_long(dmat, states, blocks, query=None):
    """Aggregated long-term context; the DMAT is the query unless ``query`` is given."""
    keys, values = _memory_rows(states, blocks)
    q = as_tensor(dmat if query is None else query, 1, "query")
    return attend(q[None], keys, values, blocks.long)[0]


def fuse(asc, alc, dmat, blocks):
    """Returns (tracklet embedding, updated DMAT)."""
    asc = as_tensor(asc, 1, "asc")
    alc = as_tensor(alc, 1, "alc")
    dmat = as_tensor(dmat, 1, "dmat")
    d = blocks.dim
    if asc.shape != (d,) or alc.shape != (d,) or dmat.shape != (d,):
        raise ValueError(f"fuse inputs must have width {d}")
    kv = np.stack([asc, alc])
    a = attend(dmat[None], kv, kv, blocks.fusion)
    out = blocks.fusion_ffn(a)[0]
    return out[:d], out[d:]


def encode_track(states, dmat, blocks):
    """Tracklet embedding and next DMAT for one track's long window."""
    short = states[-blocks.short_len:]
    agg = blocks.aggregation
    if agg == "ours":
        return fuse(encode_short(short, blocks), encode_long(dmat, states, blocks), dmat, blocks)
    if agg == "single":
        out = encode_long(dmat, states, blocks)
        return out, out
    if agg == "long-after-short":
        out = encode_long(dmat, states, blocks, query=encode_short(short, blocks))
        return out, out
    values = np.stack([s.embedding for s in states])
    out = values.mean(axis=0) if agg == "avg-pool" else values.max(axis=0)
    return out, np.array(dmat, dtype=np.float64)


def encode_all(buffer, dmats, blocks):
    """Tracklet queries [n_tracks, d] in admission order, plus the updated DMAT map."""
    ids = buffer.track_ids
    if not ids:
        return np.zeros((0, blocks.dim)), {}
    rows = []
    new_dmats = {}
    for tid in ids:
        if tid not in dmats:
            raise InvariantError(f"track {tid} has no aggregation token")
        emb, token = encode_track(buffer.window(tid, blocks.long_len), dmats[tid], blocks)
        rows.append(emb)
        new_dmats[tid] = token
    return np.stack(rows), new_dmats
