"""Plain dynamic time warping over 1-D real sequences (no band, no normalization)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path: tuple[tuple[int, int], ...]


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> DtwResult:
    """Minimum cumulative ``|a[i] - b[j]|`` over monotone warping paths.

    Backtrace prefers the diagonal step, then vertical (advance ``a``),
    then horizontal (advance ``b``).
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("dtw_distance expects 1-D sequences")
    if x.size == 0 or y.size == 0:
        raise ValueError("dtw_distance needs two non-empty sequences")
    m, n = x.size, y.size
    cost = np.abs(x[:, None] - y[None, :]).tolist()

    inf = float("inf")
    acc = [[inf] * (n + 1) for _ in range(m + 1)]
    acc[0][0] = 0.0
    for i in range(1, m + 1):
        ci = cost[i - 1]
        prev = acc[i - 1]
        row = acc[i]
        for j in range(1, n + 1):
            row[j] = ci[j - 1] + min(prev[j - 1], prev[j], row[j - 1])

    path = [(m - 1, n - 1)]
    i, j = m, n
    while (i, j) != (1, 1):
        diag = acc[i - 1][j - 1]
        up = acc[i - 1][j]
        left = acc[i][j - 1]
        best = min(diag, up, left)
        if diag == best:
            i, j = i - 1, j - 1
        elif up == best:
            i -= 1
        else:
            j -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    # re-sum along the path so the reported distance is exactly the path cost
    distance = float(sum(cost[p][q] for p, q in path))
    return DtwResult(distance=distance, path=tuple(path))
