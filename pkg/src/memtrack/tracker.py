"""Memory decoder and the per-frame tracking loop.

Candidate proposals and tracklet queries are decoded together against the
encoded frame. Every entry gets a box, an objectness ``o`` and a uniqueness
``u`` (fixed to 1 for tracklets); entries with ``o * u`` at or above the
confidence threshold survive. Surviving tracklets keep their identity,
surviving unique candidates start new tracks.

Two attention statistics feed the score heads alongside the entry embedding:

* foreground evidence: log-odds, in the final cross-attention, of the mass
  on real frame keys against a background key with a fixed logit;
* duplicate evidence (candidates only): log-odds, in the final
  self-attention, of the mass on tracklet queries against candidate queries.

The box head refines the attention-weighted average of the frame keys'
reference boxes.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .assignment import Assignment, hungarian
from .boxes import cxcywh_to_xyxy, giou_xyxy, iou_matrix_cxcywh, tlwh_to_cxcywh
from .cpn import CpnParams, ObjectQuerySet, Proposal, encode_frame, positional_encoding, propose
from .encoder import EncoderBlocks, encode_all
from .errors import InvariantError
from .losses import Target
from .memory import MemoryBuffer, TrackState
from .metrics import AnnotationRow, FrameAnnotations
from .nn import DecoderLayer, FeedForward, LayerNorm
from .svp import SvpParams, svp_forward
from .tensor import AttentionParams, as_tensor, inverse_sigmoid, linear, logsumexp, sigmoid, softmax

__all__ = [
    "Assignment", "DecoderParams", "FrameInput", "QueryEntry", "TrackerConfig", "TrackerModel",
    "TrackerState", "assign_supervision", "confidence", "decode", "hungarian", "run_sequence", "step",
]

EVIDENCE_CLIP = 30.0
FULL_FRAME = (0.5, 0.5, 1.0, 1.0)


def confidence(o, u):
    """Unified entry score: objectness times uniqueness."""
    if not (0.0 <= o <= 1.0 and 0.0 <= u <= 1.0):
        raise ValueError(f"scores must lie in [0, 1], got o={o}, u={u}")
    return o * u


@dataclass
class QueryEntry:
    kind: str  # "candidate" or "tracklet"
    embedding: np.ndarray
    box: np.ndarray
    objectness: float
    uniqueness: float
    source_id: Optional[int] = None
    confidence: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("candidate", "tracklet"):
            raise ValueError(f"unknown entry kind {self.kind!r}")
        if self.kind == "tracklet" and self.uniqueness != 1.0:
            raise ValueError("tracklet entries have uniqueness 1")
        self.confidence = confidence(self.objectness, self.uniqueness)


@dataclass
class DecoderParams:
    layers: List[DecoderLayer]
    sink_logit: np.ndarray  # [1], logit of the background key
    box_w: np.ndarray  # [4, d]
    box_b: np.ndarray
    obj_w: np.ndarray  # [1, d]
    obj_b: np.ndarray
    obj_gain: np.ndarray  # [1], weight on foreground evidence
    uni_w: np.ndarray
    uni_b: np.ndarray
    uni_gain: np.ndarray  # [1], weight on duplicate evidence

    def __post_init__(self):
        if not self.layers:
            raise ValueError("decoder needs at least one layer")

    @property
    def dim(self):
        return self.layers[0].self_attn.d_model

    @classmethod
    def random(cls, d, rng, n_heads=4, n_layers=2, hidden=None, std=0.02):
        hidden = hidden or 4 * d
        return cls(
            layers=[DecoderLayer.random(d, n_heads, hidden, rng) for _ in range(n_layers)],
            sink_logit=np.zeros(1),
            box_w=rng.normal(0, std, (4, d)), box_b=np.zeros(4),
            obj_w=rng.normal(0, std, (1, d)), obj_b=np.zeros(1), obj_gain=np.ones(1),
            uni_w=rng.normal(0, std, (1, d)), uni_b=np.zeros(1), uni_gain=-np.ones(1),
        )

    @classmethod
    def identity(cls, d, beta=10.0):
        """One layer, identity projections, single head, logits scaled by ``beta``,
        zero FFN branch, box head passing the attended reference box through.

        Layer-normalized queries have norm sqrt(d), so a unit-norm frame key
        that matches a query scores about ``beta * sqrt(d)``; the background
        logit sits halfway.
        """
        layer = DecoderLayer(
            AttentionParams.identity(d, 1, beta),
            AttentionParams.identity(d, 1, beta),
            FeedForward.zero(d, d, d),
            LayerNorm.default(d), LayerNorm.default(d), LayerNorm.default(d),
        )
        return cls(
            layers=[layer],
            sink_logit=np.array([0.5 * beta * np.sqrt(d)]),
            box_w=np.zeros((4, d)), box_b=np.zeros(4),
            obj_w=np.zeros((1, d)), obj_b=np.zeros(1), obj_gain=np.ones(1),
            uni_w=np.zeros((1, d)), uni_b=np.zeros(1), uni_gain=-np.ones(1),
        )


def decode(f1, candidates, tracklets, params, frame_boxes=None, trace=None):
    """Decode candidates followed by tracklets; output order equals input order.

    f1: encoded frame [K, d]; frame_boxes: reference box of each frame row
    [K, 4] (defaults to the full frame). tracklets: [N_tr, d] embeddings, or
    (ids, embeddings) to tag tracklet entries with their track ids.
    """
    f1 = as_tensor(f1, 2, "f1")
    d = params.dim
    if f1.shape[0] == 0:
        raise ValueError("decode: encoded frame is empty")
    if f1.shape[1] != d:
        raise ValueError(f"decode: frame width {f1.shape[1]} != decoder width {d}")
    if isinstance(tracklets, tuple):
        track_ids, tracklets = tracklets
    else:
        track_ids = None
    tracklets = as_tensor(tracklets, 2, "tracklets").reshape(-1, d) if np.size(tracklets) else np.zeros((0, d))
    n_c, n_t = len(candidates), tracklets.shape[0]
    if track_ids is None:
        track_ids = [None] * n_t
    cand = np.stack([p.embedding for p in candidates]) if n_c else np.zeros((0, d))
    if cand.shape[1] != d:
        raise ValueError(f"decode: candidate width {cand.shape[1]} != decoder width {d}")
    if n_c + n_t == 0:
        return []
    K = f1.shape[0]
    boxes_ref = np.tile(FULL_FRAME, (K, 1)) if frame_boxes is None else as_tensor(frame_boxes, 2, "frame_boxes")
    if boxes_ref.shape != (K, 4):
        raise ValueError(f"decode: frame_boxes shape {boxes_ref.shape}, expected {(K, 4)}")

    x = np.vstack([cand, tracklets])
    sink = float(params.sink_logit[0])
    last = {}
    for layer in params.layers:
        last = {}
        x = layer(x, f1, sink_logit=sink, trace=last)
    if trace is not None:
        trace.update(last)

    cross = last["cross_logits"]  # [heads, n, K + 1]
    fg = np.mean(logsumexp(cross[:, :, :K], axis=2) - cross[:, :, K], axis=0)
    fg = np.clip(fg, -EVIDENCE_CLIP, EVIDENCE_CLIP)
    pointer = np.mean(softmax(cross[:, :, :K], axis=2) @ boxes_ref, axis=0)

    selfl = last["self_logits"]  # [heads, n, n]
    if n_t:
        dup = np.mean(logsumexp(selfl[:, :n_c, n_c:], axis=2) - logsumexp(selfl[:, :n_c, :n_c], axis=2), axis=0)
    else:
        dup = np.full(n_c, -EVIDENCE_CLIP)
    dup = np.clip(dup, -EVIDENCE_CLIP, EVIDENCE_CLIP)

    boxes = sigmoid(inverse_sigmoid(pointer) + linear(x, params.box_w, params.box_b))
    obj = sigmoid(linear(x, params.obj_w, params.obj_b)[:, 0] + params.obj_gain[0] * fg)
    uni = sigmoid(linear(x[:n_c], params.uni_w, params.uni_b)[:, 0] + params.uni_gain[0] * dup)

    entries = []
    for i in range(n_c):
        entries.append(QueryEntry("candidate", x[i], boxes[i], float(obj[i]), float(uni[i])))
    for j in range(n_t):
        i = n_c + j
        entries.append(QueryEntry("tracklet", x[i], boxes[i], float(obj[i]), 1.0, track_ids[j]))
    return entries


def matching_cost(entry, gt_box, weights=(3.0, 6.0, 3.0)):
    """Candidate-to-ground-truth cost: -objectness, L1 box distance, 1 - GIoU."""
    w_cls, w_l1, w_giou = weights
    l1 = float(np.abs(entry.box - gt_box).sum())
    giou = giou_xyxy(cxcywh_to_xyxy(entry.box), cxcywh_to_xyxy(gt_box))
    return -w_cls * entry.objectness + w_l1 * l1 + w_giou * (1.0 - giou)


def assign_supervision(entries, gt, tracked_ids, image_size=(1.0, 1.0), weights=(3.0, 6.0, 3.0)):
    """Training targets for decoded entries against one frame of ground truth.

    Tracklets are supervised by their own identity; candidates are matched to
    ground-truth boxes by minimum-cost assignment, and a matched candidate
    whose identity is already tracked is labelled a duplicate (u* = 0).
    Returns ``(assignment, targets)`` with assignment pairs indexing
    (candidate position, gt row).
    """
    gt_boxes = tlwh_to_cxcywh(gt.boxes, image_size) if gt.rows else np.zeros((0, 4))
    gt_pos = {tid: k for k, tid in enumerate(gt.ids)}
    targets = [None] * len(entries)
    cand_idx = []
    for i, e in enumerate(entries):
        if e.kind == "tracklet":
            k = gt_pos.get(e.source_id)
            targets[i] = Target(1.0, None, gt_boxes[k], k) if k is not None else Target(0.0)
        else:
            cand_idx.append(i)
    cost = np.array([[matching_cost(entries[i], g, weights) for g in gt_boxes] for i in cand_idx]).reshape(
        len(cand_idx), len(gt_boxes)
    )
    assignment = hungarian(cost)
    matched = dict(assignment.pairs)
    for a, i in enumerate(cand_idx):
        k = matched.get(a)
        if k is None:
            targets[i] = Target(0.0)
        else:
            u = 0.0 if gt.ids[k] in tracked_ids else 1.0
            targets[i] = Target(1.0, u, gt_boxes[k], k)
    return assignment, targets


@dataclass
class TrackerConfig:
    conf_threshold: float = 0.5
    miss_limit: int = 30
    short_len: int = 5
    long_len: int = 25
    horizon: int = 30
    max_tracks: int = 350
    dup_iou: float = 0.7
    uniqueness_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.conf_threshold < 1.0:
            raise ValueError("conf_threshold must lie in (0, 1)")
        if not 1 <= self.miss_limit <= self.horizon:
            raise ValueError("miss_limit must be between 1 and the memory horizon")
        if not 1 <= self.short_len <= self.long_len <= self.horizon:
            raise ValueError("need short_len <= long_len <= horizon")
        if not 0.0 <= self.dup_iou <= 1.0:
            raise ValueError("dup_iou must lie in [0, 1]")


@dataclass
class TrackerModel:
    encoder: EncoderBlocks
    decoder: DecoderParams
    cpn: Optional[CpnParams] = None
    queries: Optional[ObjectQuerySet] = None
    svp: Optional[SvpParams] = None

    @property
    def dim(self):
        return self.decoder.dim

    @classmethod
    def identity(cls, d=64, beta=10.0, **enc_kw):
        return cls(EncoderBlocks.identity(d, beta, **enc_kw), DecoderParams.identity(d, beta))

    @classmethod
    def random(cls, d, rng, in_channels=None, n_queries=50, n_heads=4, svp_levels=0, svp_blocks=4, **enc_kw):
        model = cls(EncoderBlocks.random(d, rng, n_heads, **enc_kw), DecoderParams.random(d, rng, n_heads))
        if in_channels:
            model.cpn = CpnParams.random(in_channels, rng, d=d, n_heads=n_heads)
            model.queries = ObjectQuerySet.random(n_queries, d, rng)
            if svp_levels:
                model.svp = SvpParams.random(in_channels, rng, levels=svp_levels, blocks=svp_blocks)
        return model


@dataclass
class FrameInput:
    """One frame for the tracker: oracle proposals, or a feature map [D, H, W]."""

    frame_index: int
    proposals: Optional[List[Proposal]] = None
    features: Optional[np.ndarray] = None


@dataclass
class TrackerState:
    buffer: MemoryBuffer
    dmats: Dict[int, np.ndarray] = field(default_factory=dict)
    misses: Dict[int, int] = field(default_factory=dict)
    next_id: int = 1
    frame_index: int = 0

    @classmethod
    def initial(cls, cfg):
        return cls(MemoryBuffer(cfg.max_tracks, cfg.horizon))

    def check(self):
        ids = set(self.buffer.track_ids)
        if ids != set(self.dmats) or ids != set(self.misses):
            raise InvariantError("memory, aggregation tokens and live tracks disagree")
        if ids and max(ids) >= self.next_id:
            raise InvariantError("next_id must exceed every issued id")


def grid_boxes(H, W):
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    return np.stack([(xs.ravel() + 0.5) / W, (ys.ravel() + 0.5) / H,
                     np.full(H * W, 1.0 / W), np.full(H * W, 1.0 / H)], axis=1)


def _encode_input(frame, model):
    """(candidates, f1, frame_boxes) for either input path."""
    if frame.proposals is not None:
        props = list(frame.proposals)
        if not props:
            return [], np.zeros((0, model.dim)), np.zeros((0, 4))
        return props, np.stack([p.embedding for p in props]), np.stack([p.box for p in props])
    if frame.features is None or model.cpn is None:
        raise ValueError("frame has no proposals, and the model has no proposal network for features")
    feat = as_tensor(frame.features, 3, "features")
    if model.svp is not None:
        feat = svp_forward([feat], model.svp)[0]
    D, H, W = feat.shape
    f1 = encode_frame(feat.reshape(D, H * W), model.cpn, (H, W))
    pos = positional_encoding(H, W, model.cpn.dim)
    return propose(f1, model.queries, model.cpn, memory_pos=pos), f1, grid_boxes(H, W)


def _to_row(track_id, box, score):
    cx, cy, w, h = (float(v) for v in box)
    return AnnotationRow(track_id, (cx - w / 2, cy - h / 2, w, h), float(score))


def step(frame, state, cfg, model):
    """Advance the tracker by one frame.

    Returns (annotations, new_state); annotation boxes are normalized
    (left, top, width, height). The input state is not modified.
    """
    state.check()
    t = frame.frame_index
    if state.frame_index and t != state.frame_index + 1:
        raise ValueError(f"frame {t} does not follow frame {state.frame_index}")
    buffer = state.buffer
    candidates, f1, frame_boxes = _encode_input(frame, model)
    track_ids = buffer.track_ids
    tracklets, dmats = encode_all(buffer, state.dmats, model.encoder)

    if f1.shape[0]:
        entries = decode(f1, candidates, (track_ids, tracklets), model.decoder, frame_boxes=frame_boxes)
    else:
        entries = []
    kept = [e for e in entries if e.confidence >= cfg.conf_threshold]

    rows = []
    updates = {}
    misses = dict(state.misses)
    kept_tracks = [e for e in kept if e.kind == "tracklet"]
    for e in kept_tracks:
        updates[e.source_id] = TrackState(e.embedding, tuple(e.box), e.confidence, t, True)
        rows.append(_to_row(e.source_id, e.box, e.confidence))
    for tid in track_ids:
        misses[tid] = 0 if tid in updates else misses[tid] + 1
    buffer = buffer.append_frame(t, updates)

    guard = [e.box for e in kept_tracks]
    next_id = state.next_id
    births = sorted(
        (e for e in kept if e.kind == "candidate" and e.uniqueness >= cfg.uniqueness_threshold),
        key=lambda e: -e.confidence,
    )
    for e in births:
        if guard and iou_matrix_cxcywh(e.box, np.array(guard)).max() >= cfg.dup_iou:
            continue
        tid = next_id
        next_id += 1
        before = set(buffer.track_ids)
        buffer = buffer.admit(tid, TrackState(e.embedding, tuple(e.box), e.confidence, t, True))
        for evicted in before - set(buffer.track_ids):
            dmats.pop(evicted, None)
            misses.pop(evicted, None)
        dmats[tid] = model.encoder.dmat_init.copy()
        misses[tid] = 0
        guard.append(e.box)
        rows.append(_to_row(tid, e.box, e.confidence))

    for tid in [k for k, m in misses.items() if m >= cfg.miss_limit]:
        buffer = buffer.remove(tid)
        del dmats[tid]
        del misses[tid]

    new_state = TrackerState(buffer, dmats, misses, next_id, t)
    new_state.check()
    rows.sort(key=lambda r: r.track_id)
    return FrameAnnotations(t, rows), new_state


def run_sequence(frames, cfg, model, state=None):
    """Run ``step`` over an iterable of FrameInput; returns (annotations, final state)."""
    state = state or TrackerState.initial(cfg)
    out = []
    for frame in frames:
        ann, state = step(frame, state, cfg, model)
        out.append(ann)
    return out, state
