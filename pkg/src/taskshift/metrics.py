"""Agreement metrics for comparing raters: rank and linear correlation,
plus interval-metric Krippendorff's alpha with pairwise missing handling.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DataError, UsageError


def _check_pair(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise UsageError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise UsageError("need at least two observations")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson product-moment correlation, clamped to [-1, 1]."""
    _check_pair(x, y)
    n = len(x)
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    cov = math.fsum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    var_x = math.fsum((a - mean_x) ** 2 for a in x)
    var_y = math.fsum((b - mean_y) ** 2 for b in y)
    if var_x == 0.0 or var_y == 0.0:
        raise DataError("correlation undefined for a constant series")
    return max(-1.0, min(1.0, cov / math.sqrt(var_x * var_y)))


def _average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    position = 0
    while position < len(order):
        tail = position
        while tail + 1 < len(order) and values[order[tail + 1]] == values[order[position]]:
            tail += 1
        average = (position + tail) / 2 + 1
        for index in order[position : tail + 1]:
            ranks[index] = average
        position = tail + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    _check_pair(x, y)
    return pearson(_average_ranks(x), _average_ranks(y))


def krippendorff_alpha(
    ratings: Sequence[Sequence[float | None]],
    metric: str = "interval",
) -> float:
    """Krippendorff's alpha over a raters-by-items matrix.

    ``None`` marks a missing rating; items rated by fewer than two raters
    are excluded (pairwise deletion per the coincidence-matrix
    formulation). Only the interval metric is implemented. Zero expected
    disagreement (all usable ratings identical) is an error, not 1.0.
    """
    if metric != "interval":
        raise UsageError(f"unsupported metric {metric!r}")
    if len(ratings) < 2:
        raise UsageError("need at least two raters")
    widths = {len(row) for row in ratings}
    if len(widths) != 1:
        raise UsageError("all raters must cover the same item list")
    n_items = widths.pop()

    units: list[list[float]] = []
    for item in range(n_items):
        values = [row[item] for row in ratings if row[item] is not None]
        if len(values) >= 2:
            units.append([float(v) for v in values])
    if not units:
        raise DataError("no item was rated by two or more raters")

    total_values = sum(len(unit) for unit in units)
    observed = 0.0
    for unit in units:
        m = len(unit)
        pair_sum = math.fsum(
            (a - b) ** 2 for i, a in enumerate(unit) for b in unit[i + 1 :]
        )
        observed += 2.0 * pair_sum / (m - 1)
    observed /= total_values

    pooled = [value for unit in units for value in unit]
    expected = (
        2.0
        * math.fsum(
            (a - b) ** 2 for i, a in enumerate(pooled) for b in pooled[i + 1 :]
        )
        / (total_values * (total_values - 1))
    )
    if expected == 0.0:
        raise DataError("expected disagreement is zero (constant ratings); alpha undefined")
    return 1.0 - observed / expected
