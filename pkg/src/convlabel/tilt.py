"""Exponential reweighting of the nonzero-label count axis.

When the cardinality cap sits far below the expected number of nonzero
labels, every count the cap admits is a large-deviation event: message
tables then decay over hundreds of orders of magnitude along the count
axis, and readouts combine entries from opposite ends of that range.
Damping every nonzero-label probability by exp(tilt), with tilt chosen so
the expected damped count equals the cap, recentres the tables on the
counts that dominate every readout.  The reweighting is exact: each table
entry picks up a factor exp(tilt * count) that the readouts undo (or
cancel) analytically.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import optimize as spo


def solve_count_tilt(probs: np.ndarray, labels: Sequence[int], cap: int) -> float:
    """Damping exponent that moves the expected nonzero count onto the cap.

    ``probs`` holds per-instant class probabilities (instants, classes+1)
    with background in column 0; ``labels`` lists the tracked nonzero
    classes.  Returns 0 when the cap does not bind (expected count already
    <= cap), so ordinary problems are left untouched.  Always <= 0.
    """
    labels = list(labels)
    if not labels or cap == 0:
        return 0.0
    q = probs[:, labels].sum(axis=1)
    p0 = probs[:, 0]

    def expected(theta: float) -> float:
        w = q * math.exp(theta)
        return float((w / (p0 + w)).sum())

    if expected(0.0) <= cap:
        return 0.0
    lo = -1.0
    while expected(lo) > cap and lo > -700.0:
        lo *= 2.0
    if expected(lo) > cap:
        return lo
    return float(spo.brentq(lambda th: expected(th) - cap, lo, 0.0, xtol=1e-12))
