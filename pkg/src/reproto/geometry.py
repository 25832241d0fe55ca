"""Metric-space primitives: distances, subgradients, ball projection, clamping.

Every function works on the last axis, so a single vector of shape ``(d,)``
and a batch of shape ``(n, d)`` are both accepted.  All arithmetic is float64.
"""
from __future__ import annotations

import enum

import numpy as np


class Metric(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, Metric):
            return value
        key = str(value).strip().lower()
        aliases = {"l2": cls.L2, "euclidean": cls.L2,
                   "linf": cls.LINF, "l_inf": cls.LINF, "inf": cls.LINF,
                   "chebyshev": cls.LINF}
        if key not in aliases:
            raise ValueError(f"unknown metric {value!r}")
        return aliases[key]


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1:] != b.shape[-1:]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def norm(v, metric) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if Metric.parse(metric) is Metric.L2:
        return np.sqrt(np.sum(v * v, axis=-1))
    return np.max(np.abs(v), axis=-1)


def distance(a, b, metric):
    """L2 or L-infinity distance between ``a`` and ``b`` along the last axis."""
    a, b = _pair(a, b)
    return norm(a - b, metric)


def distance_gradient(a, b, metric):
    """Subgradient of ``distance(a, b)`` with respect to ``a``.

    Returns ``(grad, singular)``.  For L2 this is the unit vector ``(a-b)/|a-b|``;
    for L-infinity it is the signed indicator of the largest absolute
    coordinate difference, lowest index winning ties.  Where ``a == b`` the
    gradient is the zero vector and ``singular`` is True.
    """
    a, b = _pair(a, b)
    diff = a - b
    diff, squeeze = (diff[None], True) if diff.ndim == 1 else (diff, False)
    m = Metric.parse(metric)
    if m is Metric.L2:
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        singular = dist == 0.0
        safe = np.where(singular, 1.0, dist)
        grad = np.where(singular[..., None], 0.0, diff / safe[..., None])
    else:
        absdiff = np.abs(diff)
        idx = np.argmax(absdiff, axis=-1)
        grad = np.zeros_like(diff)
        rows = np.arange(diff.shape[0])
        grad[rows, idx] = np.sign(diff[rows, idx])
        singular = absdiff[rows, idx] == 0.0
    if squeeze:
        return grad[0], bool(singular[0])
    return grad, singular


def pairwise_distances(A, B, metric) -> np.ndarray:
    """Matrix of distances between rows of ``A`` (n, d) and rows of ``B`` (m, d)."""
    A, B = _pair(np.atleast_2d(A), np.atleast_2d(B))
    return norm(A[:, None, :] - B[None, :, :], metric)


def project_ball(x, center, eps, metric):
    """Metric projection of ``x`` onto the closed ``eps``-ball around ``center``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x, center = _pair(x, center)
    if Metric.parse(metric) is Metric.LINF:
        return np.clip(x, center - eps, center + eps)
    delta = x - center
    length = np.sqrt(np.sum(delta * delta, axis=-1, keepdims=True))
    outside = length > eps
    scale = np.where(outside, eps / np.where(outside, length, 1.0), 1.0)
    # nudge the scale down until rounding leaves the result inside, so that
    # projecting a projected point is a no-op
    for i in range(40):
        moved = (center + delta * scale) - center
        over = outside & (np.sqrt(np.sum(moved * moved, axis=-1, keepdims=True)) > eps)
        if not np.any(over):
            break
        scale = np.where(over, scale * (1.0 - 2.0 ** (i - 52)), scale)
    return np.where(outside, center + delta * scale, x)


def clamp_domain(x, lo=0.0, hi=1.0):
    if lo > hi:
        raise ValueError(f"empty domain [{lo}, {hi}]")
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)
