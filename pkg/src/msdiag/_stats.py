"""Small statistical helpers shared across modules."""

from collections import Counter

import numpy as np


def quantile(values, q):
    """Sample quantile with linear interpolation between order statistics.

    For sorted values ``y[0..n-1]`` and level ``q`` the position is
    ``h = (n - 1) * q`` and the result is
    ``y[floor(h)] + (h - floor(h)) * (y[floor(h) + 1] - y[floor(h)])``.
    This is numpy's default ``"linear"`` method; it is used project-wide.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("quantile of an empty sequence")
    return np.quantile(values, q, method="linear")


def mode(values, prefer=min):
    """Most frequent value; ties resolved with ``prefer`` over the tied set."""
    counts = Counter(values)
    top = max(counts.values())
    return prefer(v for v, c in counts.items() if c == top)
