"""Transient metrics on uniformly sampled traces."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def settling_time(t, signal, target: float, band: float, t_start: float = 0.0):
    """Time after ``t_start`` from which ``|signal - target| <= band`` holds to the end.

    Returns ``None`` when the last sample is still outside the band.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(signal, dtype=float)
    if t.shape != s.shape:
        raise ValidationError("time and signal traces differ in length")
    keep = t >= t_start
    t, s = t[keep], s[keep]
    if t.size == 0:
        return None
    outside = np.nonzero(~(np.abs(s - target) <= band))[0]
    if outside.size == 0:
        return 0.0
    last = int(outside[-1])
    if last == t.size - 1:
        return None
    return float(t[last + 1] - t_start)


def max_deviation(t, signal, window=(0.0, np.inf)) -> float:
    """Largest ``|signal|`` over the closed time window."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(signal, dtype=float)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if not np.any(sel):
        raise ValidationError(f"window [{lo}, {hi}] contains no samples")
    return float(np.max(np.abs(s[sel])))


def tail_mean(signal, fraction: float = 0.1) -> float:
    s = np.asarray(signal, dtype=float)
    start = min(len(s) - 1, int(np.floor((1.0 - fraction) * (len(s) - 1))))
    return float(np.mean(s[start:]))
