"""Minimum-cost bijection between two index sets (square assignment).

scipy's Hungarian solver does the heavy lifting; on top of it we pick the
lexicographically smallest optimal mapping so that tied optima resolve
deterministically (e.g. a constant cost matrix yields the identity).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError


def solve_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (mapping, total) minimizing sum_k cost[k, mapping[k]].

    `mapping` is the lexicographically smallest optimal bijection on
    {0..K-1}. Costs must be finite and the matrix square.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValidationError(f"cost matrix must be square, got shape {cost.shape}")
    if cost.size and not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix contains non-finite entries")
    k = cost.shape[0]
    if k == 0:
        return np.zeros(0, dtype=np.int64), 0.0

    rows, cols = linear_sum_assignment(cost)
    optimum = float(sum(cost[r, c] for r, c in zip(rows, cols)))
    tol = 1e-9 * (1.0 + abs(optimum))

    # Fix rows in order, greedily taking the smallest column that still
    # admits an optimal completion of the remaining subproblem.
    mapping = np.empty(k, dtype=np.int64)
    remaining = list(range(k))
    spent = 0.0
    for row in range(k):
        for col in remaining:
            if row == k - 1:
                tail = 0.0
            else:
                sub_cols = [c for c in remaining if c != col]
                sub = cost[np.ix_(range(row + 1, k), sub_cols)]
                r2, c2 = linear_sum_assignment(sub)
                tail = float(sum(sub[a, b] for a, b in zip(r2, c2)))
            if spent + cost[row, col] + tail <= optimum + tol:
                mapping[row] = col
                spent += cost[row, col]
                remaining.remove(col)
                break
        else:  # pragma: no cover - optimum always admits a completion
            raise RuntimeError("assignment canonicalization failed")
    total = float(sum(cost[r, mapping[r]] for r in range(k)))
    return mapping, total
