"""Minimum-cost bipartite assignment."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import backend


@dataclass
class Assignment:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_rows: List[int] = field(default_factory=list)
    unmatched_cols: List[int] = field(default_factory=list)
    cost: float = 0.0


def hungarian(cost):
    """Minimum total cost over all maximum matchings of a dense [n, m] matrix.

    Every row is matched when n <= m, every column otherwise.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"hungarian: cost must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("hungarian: costs must be finite")
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)), 0.0)
    rows, cols = backend.kernels.linear_sum_assignment(np.ascontiguousarray(cost))
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    used_r = set(rows.tolist())
    used_c = set(cols.tolist())
    return Assignment(
        pairs=pairs,
        unmatched_rows=[i for i in range(n) if i not in used_r],
        unmatched_cols=[j for j in range(m) if j not in used_c],
        cost=float(cost[rows, cols].sum()),
    )
