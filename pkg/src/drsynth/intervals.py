"""Vectorised interval arithmetic used by the mode interval extensions."""

import numpy as np

TWO_PI = 2.0 * np.pi


def _contains_point(lo, hi, phase):
    # True where some phase + 2k*pi lies in [lo, hi].
    k = np.ceil((lo - phase) / TWO_PI)
    return phase + k * TWO_PI <= hi


def interval_sin(lo, hi):
    """Range of ``sin`` over ``[lo, hi]``, elementwise."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    slo, shi = np.sin(lo), np.sin(hi)
    out_lo = np.minimum(slo, shi)
    out_hi = np.maximum(slo, shi)
    out_hi = np.where(_contains_point(lo, hi, 0.5 * np.pi), 1.0, out_hi)
    out_lo = np.where(_contains_point(lo, hi, -0.5 * np.pi), -1.0, out_lo)
    wide = (hi - lo) >= TWO_PI
    return np.where(wide, -1.0, out_lo), np.where(wide, 1.0, out_hi)


def interval_cos(lo, hi):
    """Range of ``cos`` over ``[lo, hi]``, elementwise."""
    return interval_sin(np.asarray(lo, float) + 0.5 * np.pi,
                        np.asarray(hi, float) + 0.5 * np.pi)


def interval_scale(lo, hi, k):
    """Interval ``k * [lo, hi]`` for a scalar or array ``k``."""
    a, b = k * lo, k * hi
    return np.minimum(a, b), np.maximum(a, b)


def interval_affine(A, b, lo, hi):
    """Tight box hull of ``{A x + b : lo <= x <= hi}`` for stacked boxes.

    ``lo`` and ``hi`` have shape ``(..., n)``.
    """
    A = np.asarray(A, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pos = np.maximum(A, 0.0)
    neg = np.minimum(A, 0.0)
    out_lo = lo @ pos.T + hi @ neg.T + b
    out_hi = hi @ pos.T + lo @ neg.T + b
    return out_lo, out_hi
