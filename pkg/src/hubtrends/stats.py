"""Order-statistic helpers shared by series cleaning and reference curves.

Quartiles use linear interpolation between order statistics, the
convention numpy calls ``linear`` and R calls type 7.  The convention is
pinned here so the outlier filter and the reference-curve builder can
never drift apart.
"""

from __future__ import annotations

import statistics
from typing import Iterable

from .errors import InsufficientDataError


def quartiles(values: Iterable[float]) -> tuple[float, float, float]:
    """Return ``(q1, median, q3)`` of *values* under the pinned convention.

    A single value is its own median and both quartiles.  Empty input
    raises :class:`InsufficientDataError`.
    """
    vals = list(values)
    if not vals:
        raise InsufficientDataError("quartiles need at least one value")
    if len(vals) == 1:
        v = float(vals[0])
        return v, v, v
    q1, med, q3 = statistics.quantiles(vals, n=4, method="inclusive")
    return q1, med, q3


def median(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        raise InsufficientDataError("median needs at least one value")
    return statistics.median(vals)
