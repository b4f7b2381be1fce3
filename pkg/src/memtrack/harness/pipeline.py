"""Glue between configs, inputs and the tracker; owns the pixel/normalized boundary."""
import numpy as np

from ..boxes import cxcywh_to_tlwh, tlwh_to_cxcywh
from ..cpn import Proposal
from ..metrics import AnnotationRow, FrameAnnotations
from ..nn import load_params
from ..tracker import FrameInput, TrackerModel, run_sequence
from .features import SyntheticFeatureSource, box_embedding
from .synth import generate_scene, oracle_detections


def build_model(run, in_channels=None):
    m = run.model
    t = run.tracker
    enc = dict(short_len=t.short_len, long_len=t.long_len, aggregation=run.aggregation)
    if m.kind == "identity":
        model = TrackerModel.identity(m.d, m.beta, **enc)
    else:
        rng = np.random.default_rng([m.seed, 3])
        channels = in_channels if m.path == "learned" else None
        model = TrackerModel.random(m.d, rng, in_channels=channels, n_queries=m.n_queries,
                                    n_heads=m.n_heads, svp_levels=m.svp_levels, **enc)
    if m.params:
        load_params(model, m.params)
    return model


def proposals_from_annotations(frames, image_size, d):
    """Detection rows -> proposals, embedding each box with a sinusoidal code."""
    out = {}
    for f in frames:
        out[f.frame_index] = [
            Proposal(box_embedding(r.box, image_size, d), tlwh_to_cxcywh(np.asarray(r.box), image_size),
                     min(max(float(r.confidence), 0.0), 1.0))
            for r in f.rows
        ]
    return out


def to_pixels(annotations, image_size):
    out = []
    for a in annotations:
        rows = []
        for r in a.rows:
            l, t, w, h = r.box
            box = cxcywh_to_tlwh(np.array([l + w / 2, t + h / 2, w, h]), image_size)
            rows.append(AnnotationRow(r.track_id, tuple(float(v) for v in box), r.confidence))
        out.append(FrameAnnotations(a.frame_index, rows))
    return out


def track_proposals(per_frame, run, model, first=None, last=None):
    """Track a {frame_index: [Proposal]} map over the contiguous range first..last."""
    if not per_frame and first is None:
        return []
    first = min(per_frame) if first is None else first
    last = max(per_frame) if last is None else last
    inputs = (FrameInput(t, per_frame.get(t, [])) for t in range(first, last + 1))
    annotations, _ = run_sequence(inputs, run.tracker, model)
    return annotations


def track_scene(scene, run):
    """Generate a synthetic scene and track it; returns (gt, pixel results)."""
    gt, embeddings = generate_scene(scene)
    if run.model.path == "learned":
        source = SyntheticFeatureSource(gt, embeddings, scene.image_size, run.model.grid, seed=scene.seed)
        model = build_model(run, in_channels=source.channels)
        inputs = (FrameInput(f.frame_index, features=source(f.frame_index)) for f in gt)
        annotations, _ = run_sequence(inputs, run.tracker, model)
    else:
        model = build_model(run)
        dets = oracle_detections(gt, embeddings, scene)
        if scene.embedding_dim != model.dim:
            raise ValueError(f"scene embedding width {scene.embedding_dim} != model width {model.dim}")
        annotations, _ = run_sequence(
            (FrameInput(f.frame_index, p) for f, p in zip(gt, dets)), run.tracker, model)
    return gt, to_pixels(annotations, scene.image_size)
