"""MOT evaluation: CLEAR matching and MOTA, IDF1, HOTA (DetA / AssA).

Sequences are lists of :class:`FrameAnnotations`, aligned by ``frame_index``;
a frame missing from one side counts as empty there. Boxes are pixel
(left, top, width, height).
"""
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from .assignment import hungarian
from .boxes import iou_matrix_tlwh

HOTA_ALPHAS = np.arange(0.05, 0.96, 0.05)


class AnnotationRow(NamedTuple):
    track_id: int
    box: Tuple[float, float, float, float]
    confidence: float = 1.0


@dataclass
class FrameAnnotations:
    frame_index: int
    rows: List[AnnotationRow] = field(default_factory=list)

    def __post_init__(self):
        self.rows = [r if isinstance(r, AnnotationRow) else AnnotationRow(*r) for r in self.rows]
        ids = [r.track_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ValueError(f"frame {self.frame_index}: duplicate track ids")
        for r in self.rows:
            if not (r.box[2] > 0 and r.box[3] > 0):
                raise ValueError(f"frame {self.frame_index}: non-positive box size for id {r.track_id}")

    @property
    def ids(self):
        return [r.track_id for r in self.rows]

    @property
    def boxes(self):
        return np.array([r.box for r in self.rows], dtype=np.float64).reshape(-1, 4)


class FrameRangeError(ValueError):
    def __init__(self, frame):
        super().__init__(f"prediction frame {frame} lies outside the ground-truth frame range")
        self.frame = frame


def check_frame_range(gt, pred):
    """Raise FrameRangeError naming the first prediction frame outside the gt range."""
    if not gt:
        if pred:
            raise FrameRangeError(min(f.frame_index for f in pred))
        return
    lo = min(f.frame_index for f in gt)
    hi = max(f.frame_index for f in gt)
    for f in sorted(pred, key=lambda f: f.frame_index):
        if f.rows and not lo <= f.frame_index <= hi:
            raise FrameRangeError(f.frame_index)


def align(gt, pred):
    """Yield (frame_index, gt_frame, pred_frame) over the union of frame indices."""
    g = {f.frame_index: f for f in gt}
    p = {f.frame_index: f for f in pred}
    for idx in sorted(set(g) | set(p)):
        yield idx, g.get(idx, FrameAnnotations(idx)), p.get(idx, FrameAnnotations(idx))


@dataclass
class FrameMatch:
    frame_index: int
    pairs: List[Tuple[int, int]]
    false_negatives: List[int]
    false_positives: List[int]
    switches: List[int]


@dataclass
class ClearCounts:
    n_gt: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    matches: int = 0
    frames: List[FrameMatch] = field(default_factory=list, repr=False)


def _feasible_matching(iou, thr):
    """Max-cardinality, then min (1 - IoU), matching restricted to IoU >= thr."""
    n, m = iou.shape
    if n == 0 or m == 0:
        return []
    big = 2.0 * (min(n, m) + 1)
    cost = np.where(iou >= thr, 1.0 - iou, big)
    return [(i, j) for i, j in hungarian(cost).pairs if iou[i, j] >= thr]


def match_frames(gt, pred, iou_threshold=0.5):
    """CLEAR-MOT correspondence with persistence of the previous frame's matches."""
    counts = ClearCounts()
    prev = {}
    last_pred = {}
    for idx, gf, pf in align(gt, pred):
        g_ids, p_ids = gf.ids, pf.ids
        iou = iou_matrix_tlwh(gf.boxes, pf.boxes)
        g_pos = {g: i for i, g in enumerate(g_ids)}
        p_pos = {p: j for j, p in enumerate(p_ids)}
        matched = {}
        for g, p in prev.items():
            if g in g_pos and p in p_pos and iou[g_pos[g], p_pos[p]] >= iou_threshold:
                matched[g] = p
        free_g = [i for i, g in enumerate(g_ids) if g not in matched]
        taken = set(matched.values())
        free_p = [j for j, p in enumerate(p_ids) if p not in taken]
        switches = []
        for a, b in _feasible_matching(iou[np.ix_(free_g, free_p)], iou_threshold):
            g, p = g_ids[free_g[a]], p_ids[free_p[b]]
            if g in last_pred and last_pred[g] != p:
                switches.append(g)
            matched[g] = p
        for g, p in matched.items():
            last_pred[g] = p
        prev = matched
        taken = set(matched.values())
        fn = [g for g in g_ids if g not in matched]
        fp = [p for p in p_ids if p not in taken]
        counts.frames.append(FrameMatch(idx, sorted(matched.items()), fn, fp, switches))
        counts.n_gt += len(g_ids)
        counts.fp += len(fp)
        counts.fn += len(fn)
        counts.idsw += len(switches)
        counts.matches += len(matched)
    return counts


def mota(counts):
    """1 - (FP + FN + IDSW) / GT."""
    if counts.n_gt <= 0:
        raise ValueError("mota: no ground-truth objects")
    return 1.0 - (counts.fp + counts.fn + counts.idsw) / counts.n_gt


@dataclass
class IdentityResult:
    idf1: float
    idtp: int
    idfp: int
    idfn: int
    mapping: Dict[int, int]


def identity_overlap(gt, pred, iou_threshold=0.5):
    """Per-(gt id, pred id) count of co-present frames with IoU >= threshold."""
    overlap = defaultdict(int)
    gt_len = defaultdict(int)
    pred_len = defaultdict(int)
    for _, gf, pf in align(gt, pred):
        for g in gf.ids:
            gt_len[g] += 1
        for p in pf.ids:
            pred_len[p] += 1
        if gf.rows and pf.rows:
            iou = iou_matrix_tlwh(gf.boxes, pf.boxes)
            for i, j in zip(*np.nonzero(iou >= iou_threshold)):
                overlap[gf.ids[i], pf.ids[j]] += 1
    return overlap, dict(gt_len), dict(pred_len)


def idf1(gt, pred, iou_threshold=0.5):
    """Identity F1 under the optimal one-to-one gt/pred identity mapping."""
    overlap, gt_len, pred_len = identity_overlap(gt, pred, iou_threshold)
    g_ids = sorted(gt_len)
    p_ids = sorted(pred_len)
    idtp = 0
    mapping = {}
    if g_ids and p_ids:
        tp = np.array([[overlap.get((g, p), 0) for p in p_ids] for g in g_ids], dtype=np.float64)
        for i, j in hungarian(-tp).pairs:
            if tp[i, j] > 0:
                mapping[g_ids[i]] = p_ids[j]
                idtp += int(tp[i, j])
    idfn = sum(gt_len.values()) - idtp
    idfp = sum(pred_len.values()) - idtp
    denom = 2 * idtp + idfp + idfn
    score = 2 * idtp / denom if denom else 0.0
    return IdentityResult(score, idtp, idfp, idfn, mapping)


@dataclass
class HotaResult:
    hota: float
    deta: float
    assa: float
    hota_alpha: np.ndarray = field(repr=False)
    deta_alpha: np.ndarray = field(repr=False)
    assa_alpha: np.ndarray = field(repr=False)


def _hota_frame_match(score, sim):
    """Pairs maximizing the summed alignment-weighted similarity (positive scores only)."""
    if score.size == 0:
        return []
    return [(i, j) for i, j in hungarian(-score).pairs if sim[i, j] > 0]


def hota(gt, pred):
    """HOTA averaged over IoU thresholds 0.05..0.95.

    Per-frame matching maximizes IoU weighted by each id pair's global
    alignment; a matched pair is a true positive at threshold alpha when its
    IoU >= alpha. AssA averages, over true positives, TPA / (TPA + FNA + FPA).
    """
    frames = list(align(gt, pred))
    g_ids = sorted({g for _, gf, _ in frames for g in gf.ids})
    p_ids = sorted({p for _, _, pf in frames for p in pf.ids})
    gi = {g: i for i, g in enumerate(g_ids)}
    pj = {p: j for j, p in enumerate(p_ids)}
    n_alpha = len(HOTA_ALPHAS)
    n_gt_det = sum(len(gf.rows) for _, gf, _ in frames)
    n_pred_det = sum(len(pf.rows) for _, _, pf in frames)
    if not g_ids or not p_ids:
        zeros = np.zeros(n_alpha)
        return HotaResult(0.0, 0.0, 0.0, zeros, zeros.copy(), zeros.copy())

    potential = np.zeros((len(g_ids), len(p_ids)))
    gt_count = np.zeros(len(g_ids))
    pred_count = np.zeros(len(p_ids))
    sims = []
    for _, gf, pf in frames:
        gx = [gi[g] for g in gf.ids]
        px = [pj[p] for p in pf.ids]
        sim = iou_matrix_tlwh(gf.boxes, pf.boxes)
        sims.append((gx, px, sim))
        gt_count[gx] += 1
        pred_count[px] += 1
        if sim.size:
            denom = sim.sum(axis=1, keepdims=True) + sim.sum(axis=0, keepdims=True) - sim
            with np.errstate(invalid="ignore", divide="ignore"):
                potential[np.ix_(gx, px)] += np.where(denom > 0, sim / np.where(denom > 0, denom, 1), 0)
    alignment = potential / (gt_count[:, None] + pred_count[None, :] - potential)

    tp = np.zeros(n_alpha)
    pair_counts = np.zeros((n_alpha, len(g_ids), len(p_ids)))
    for gx, px, sim in sims:
        if not sim.size:
            continue
        score = alignment[np.ix_(gx, px)] * sim
        for i, j in _hota_frame_match(score, sim):
            ok = sim[i, j] >= HOTA_ALPHAS - 1e-12
            tp += ok
            pair_counts[ok, gx[i], px[j]] += 1

    deta = tp / np.maximum(1.0, n_gt_det + n_pred_det - tp)
    assa = np.zeros(n_alpha)
    for a in range(n_alpha):
        mc = pair_counts[a]
        ass = mc / np.maximum(1.0, gt_count[:, None] + pred_count[None, :] - mc)
        assa[a] = (mc * ass).sum() / max(1.0, tp[a])
    hota_a = np.sqrt(deta * assa)
    return HotaResult(float(hota_a.mean()), float(deta.mean()), float(assa.mean()), hota_a, deta, assa)


@dataclass
class MetricReport:
    MOTA: float
    IDF1: float
    HOTA: float
    DetA: float
    AssA: float
    FP: int
    FN: int
    IDSW: int
    IDTP: int
    IDFP: int
    IDFN: int
    GT: int

    def to_dict(self):
        return asdict(self)


def evaluate(gt, pred, iou_threshold=0.5):
    counts = match_frames(gt, pred, iou_threshold)
    ident = idf1(gt, pred, iou_threshold)
    h = hota(gt, pred)
    return MetricReport(
        MOTA=mota(counts),
        IDF1=ident.idf1,
        HOTA=h.hota,
        DetA=h.deta,
        AssA=h.assa,
        FP=counts.fp,
        FN=counts.fn,
        IDSW=counts.idsw,
        IDTP=ident.idtp,
        IDFP=ident.idfp,
        IDFN=ident.idfn,
        GT=counts.n_gt,
    )
