"""Repulsive class prototypes.

Prototypes are built before any network training: ``k`` centres in a
``D``-dimensional output space are pushed apart by gradient descent on the
negated sum of pairwise distances.  The robustness radius ``eps`` is a fixed
hyperparameter and contributes nothing to the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Metric, distance_gradient, pairwise_distances


@dataclass(frozen=True)
class SeparationStats:
    min_pairwise: float
    mean_pairwise: float
    max_pairwise: float
    objective_value: float
    ratio_min_to_2eps: float

    def as_rows(self):
        return [("min_pairwise", self.min_pairwise),
                ("mean_pairwise", self.mean_pairwise),
                ("max_pairwise", self.max_pairwise),
                ("objective_value", self.objective_value),
                ("ratio_min_to_2eps", self.ratio_min_to_2eps)]


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    centers: np.ndarray
    metric: Metric = Metric.L2
    eps: float = 1.0
    r: float = 1.0
    epochs_run: int = 0
    stats: SeparationStats | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError("centers must be a (k, D) array")
        if c.shape[0] < 2 or c.shape[1] < 1:
            raise ValueError(f"need k >= 2 and D >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite prototype coordinates")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "metric", Metric.parse(self.metric))

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def D(self) -> int:
        return self.centers.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PrototypeSet):
            return NotImplemented
        return (self.metric == other.metric and self.eps == other.eps
                and self.r == other.r and self.epochs_run == other.epochs_run
                and np.array_equal(self.centers, other.centers))


def init_prototypes(k: int, D: int, seed: int) -> np.ndarray:
    if k < 2 or D < 1:
        raise ValueError(f"need k >= 2 and D >= 1, got k={k}, D={D}")
    return np.random.default_rng(seed).standard_normal((k, D))


def _check_centers(centers):
    c = np.asarray(centers, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("need at least 2 centers as a (k, D) array")
    return c


def repulsion_objective(centers, r: float, metric) -> float:
    """``-r`` times the sum of distances over unordered pairs ``i < j``."""
    c = _check_centers(centers)
    dist = pairwise_distances(c, c, metric)
    iu = np.triu_indices(c.shape[0], k=1)
    return float(-r * np.sum(dist[iu]))


def repulsion_gradient(centers, r: float, metric) -> np.ndarray:
    c = _check_centers(centers)
    k = c.shape[0]
    grad = np.zeros_like(c)
    # fixed i, j loop order keeps the summation deterministic
    for i in range(k):
        others = np.delete(c, i, axis=0)
        g, _ = distance_gradient(np.broadcast_to(c[i], others.shape), others, metric)
        grad[i] = -r * g.sum(axis=0)
    return grad


def optimize_prototypes(centers, r: float = 1.0, mu: float = 0.01, epochs: int = 100,
                        metric=Metric.L2, bound: float | None = None,
                        eps: float = 1.0) -> PrototypeSet:
    """Full-batch gradient descent on :func:`repulsion_objective`.

    With ``bound`` set, every centre is projected back into the origin-centred
    L2 ball of that radius after each step.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    metric = Metric.parse(metric)
    c = _check_centers(centers).copy()
    for step in range(epochs):
        grad = repulsion_gradient(c, r, metric)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite prototype gradient at step {step}")
        c = c - mu * grad
        if bound is not None:
            lengths = np.sqrt(np.sum(c * c, axis=1, keepdims=True))
            c = np.where(lengths > bound, c * (bound / np.maximum(lengths, 1e-300)), c)
    protos = PrototypeSet(c, metric=metric, eps=eps, r=r, epochs_run=epochs)
    object.__setattr__(protos, "stats", separation_stats(protos))
    return protos


def build_prototypes(k: int, D: int, seed: int, r: float = 1.0, mu: float = 0.01,
                     epochs: int = 100, metric=Metric.L2, bound=None,
                     eps: float = 1.0) -> PrototypeSet:
    """Seeded initialisation followed by :func:`optimize_prototypes`."""
    return optimize_prototypes(init_prototypes(k, D, seed), r=r, mu=mu, epochs=epochs,
                               metric=metric, bound=bound, eps=eps)


def separation_stats(protos: PrototypeSet) -> SeparationStats:
    dist = pairwise_distances(protos.centers, protos.centers, protos.metric)
    pairs = dist[np.triu_indices(protos.k, k=1)]
    min_d = float(pairs.min())
    return SeparationStats(
        min_pairwise=min_d,
        mean_pairwise=float(pairs.mean()),
        max_pairwise=float(pairs.max()),
        objective_value=float(-protos.r * pairs.sum()),
        ratio_min_to_2eps=min_d / (2.0 * protos.eps) if protos.eps > 0 else float("inf"),
    )


# -- CSV persistence -------------------------------------------------------
#
# line 1: k,D,metric,eps,r,epochs   (values, in that order)
# lines 2..k+1: D comma-separated coordinates, repr() precision

def format_prototypes(protos: PrototypeSet) -> str:
    lines = [f"{protos.k},{protos.D},{protos.metric.value},{protos.eps!r},"
             f"{protos.r!r},{protos.epochs_run}"]
    lines += [",".join(repr(float(v)) for v in row) for row in protos.centers]
    return "\n".join(lines) + "\n"


def parse_prototypes(text: str, source="<string>") -> PrototypeSet:
    lines = [ln for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ValueError(f"{source}: empty prototype file")
    head = lines[0].split(",")
    if len(head) != 6:
        raise ValueError(f"{source}:1: expected 6 header fields k,D,metric,eps,r,epochs, "
                         f"got {len(head)}")
    try:
        k, D = int(head[0]), int(head[1])
        metric = Metric.parse(head[2])
        eps, r, epochs = float(head[3]), float(head[4]), int(head[5])
    except ValueError as exc:
        raise ValueError(f"{source}:1: bad header: {exc}") from None
    body = lines[1:]
    if len(body) != k:
        raise ValueError(f"{source}: header declares k={k} but body has {len(body)} rows")
    rows = []
    for lineno, line in enumerate(body, start=2):
        fields = line.split(",")
        if len(fields) != D:
            raise ValueError(f"{source}:{lineno}: expected {D} columns, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return PrototypeSet(np.array(rows), metric=metric, eps=eps, r=r, epochs_run=epochs)


def save_prototypes(protos: PrototypeSet, path) -> None:
    Path(path).write_text(format_prototypes(protos))


def load_prototypes(path) -> PrototypeSet:
    return parse_prototypes(Path(path).read_text(), source=str(path))
