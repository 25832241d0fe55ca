"""Accuracy, robustness curves, enclosure statistics and misclassification analyses."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .attacks import AdvResult, AttackConfig, pgd
from .data import Dataset
from .geometry import Metric, pairwise_distances
from .model import Mlp, forward
from .prototypes import PrototypeSet


def accuracy(model: Mlp, dataset: Dataset) -> float:
    return float(np.mean(model.predict(dataset.X) == dataset.y))


def robust_accuracy(model: Mlp, dataset: Dataset, cfg: AttackConfig, protos=None):
    """Fraction of samples that are correct naturally and survive every restart.

    Returns ``(robust_acc, AdvResult)``.
    """
    natural_ok = model.predict(dataset.X) == dataset.y
    res = pgd(model, dataset.X, dataset.y, cfg, protos=protos)
    robust = natural_ok & ~res.success
    return float(np.mean(robust)), res


@dataclass
class RobustnessCurve:
    eps_values: np.ndarray
    robust_acc: np.ndarray
    first_failure: np.ndarray     # eps at which each sample first fails; nan if never

    def retention(self, eps_from, eps_to) -> float:
        """``robust(eps_to) / robust(eps_from)``; both must be grid points."""
        a = self.robust_acc[_grid_index(self.eps_values, eps_from)]
        b = self.robust_acc[_grid_index(self.eps_values, eps_to)]
        return float(b / a) if a > 0 else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "robust_acc"])
        for e, a in zip(self.eps_values, self.robust_acc):
            w.writerow([repr(float(e)), repr(float(a))])
        return buf.getvalue()

    def to_svg(self, width=480, height=320, label="robust accuracy") -> str:
        return curves_svg([(label, self.eps_values, self.robust_acc)], width, height)


def _grid_index(grid, value):
    hits = np.flatnonzero(np.isclose(grid, value, rtol=1e-12, atol=1e-15))
    if not hits.size:
        raise ValueError(f"eps {value} is not on the curve grid")
    return int(hits[0])


def robustness_curve(model: Mlp, dataset: Dataset, eps_list, cfg: AttackConfig,
                     protos=None) -> RobustnessCurve:
    """Robust accuracy over an ascending eps grid, evaluated cumulatively.

    A sample broken at some eps stays broken at every larger eps (the smaller
    ball is contained in the larger one), and each eps warm-starts PGD from the
    previous eps's best point, so the curve can never increase.
    """
    eps_values = np.asarray(eps_list, dtype=np.float64)
    if np.any(np.diff(eps_values) < 0):
        raise ValueError("eps list must be ascending")
    natural_ok = model.predict(dataset.X) == dataset.y
    broken = ~natural_ok
    first = np.full(len(dataset), np.nan)
    first[broken] = eps_values[0] if eps_values.size else np.nan
    warm = None
    accs = []
    for eps in eps_values:
        res = pgd(model, dataset.X, dataset.y, cfg.with_eps(float(eps)), protos=protos,
                  x_init=warm)
        newly = res.success & ~broken
        first[newly] = eps
        broken |= res.success
        warm = res.x_adv
        accs.append(float(np.mean(~broken)))
    return RobustnessCurve(eps_values, np.array(accs), first)


def curves_svg(series, width=480, height=320) -> str:
    """Minimal SVG line plot of ``(label, xs, ys)`` series with ys in [0, 1]."""
    pad = 40
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    span = x1 - x0 if x1 > x0 else 1.0
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

    def px(x):
        return pad + (x - x0) / span * (width - 2 * pad)

    def py(y):
        return height - pad - y * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">eps</text>',
             f'<text x="{pad - 6}" y="{py(1.0):.2f}" text-anchor="end" font-size="10">1.0</text>',
             f'<text x="{pad - 6}" y="{py(0.0):.2f}" text-anchor="end" font-size="10">0.0</text>',
             f'<text x="{px(x0):.2f}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{x0:.4g}</text>',
             f'<text x="{px(x1):.2f}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{x1:.4g}</text>']
    for i, (label, xs, ys) in enumerate(series):
        colour = colours[i % len(colours)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" '
                     f'font-size="11" fill="{colour}">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# -- enclosure -------------------------------------------------------------

@dataclass
class EnclosureStats:
    own_ball_fraction: np.ndarray      # per class
    exclusion_violation: np.ndarray    # per class: outputs inside another class's ball
    mean_own_distance: np.ndarray      # per class

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "own_ball_fraction", "exclusion_violation", "mean_own_distance"])
        for c in range(self.own_ball_fraction.size):
            w.writerow([c, repr(float(self.own_ball_fraction[c])),
                        repr(float(self.exclusion_violation[c])),
                        repr(float(self.mean_own_distance[c]))])
        return buf.getvalue()


def enclosure_stats(model: Mlp, dataset: Dataset, protos: PrototypeSet | None = None,
                    eps: float | None = None) -> EnclosureStats:
    """How well outputs sit inside their own prototype's ball and outside the others'."""
    protos = protos if protos is not None else model.protos
    eps = protos.eps if eps is None else eps
    dist = pairwise_distances(forward(model, dataset.X), protos.centers, protos.metric)
    rows = np.arange(len(dataset))
    own = dist[rows, dataset.y]
    others = dist.copy()
    others[rows, dataset.y] = np.inf
    inside = own <= eps
    violates = np.any(others <= eps, axis=1)
    k = protos.k
    frac, viol, mean = np.zeros(k), np.zeros(k), np.zeros(k)
    for c in range(k):
        m = dataset.y == c
        if m.any():
            frac[c], viol[c], mean[c] = inside[m].mean(), violates[m].mean(), own[m].mean()
        else:
            frac[c] = viol[c] = mean[c] = np.nan
    return EnclosureStats(frac, viol, mean)


# -- confusion and overlap -------------------------------------------------

@dataclass
class ConfusionMatrix:
    counts: np.ndarray      # rows: true class, columns: predicted class
    source: str = "natural"

    @property
    def row_normalized(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, totals, out=np.zeros(self.counts.shape), where=totals > 0)

    def to_csv(self, normalized=False) -> str:
        mat = self.row_normalized if normalized else self.counts
        k = mat.shape[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true"] + [f"pred{j}" for j in range(k)])
        for i in range(k):
            w.writerow([i] + [repr(float(v)) if normalized else int(v) for v in mat[i]])
        return buf.getvalue()


def confusion_matrix(labels, predictions, k, source="natural") -> ConfusionMatrix:
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), np.asarray(predictions)), 1)
    return ConfusionMatrix(counts, source)


def adv_confusion(model: Mlp, dataset: Dataset, cfg: AttackConfig, protos=None):
    """Confusion matrix of predictions on the best adversarial examples.

    Returns ``(ConfusionMatrix, AdvResult)``.
    """
    res = pgd(model, dataset.X, dataset.y, cfg, protos=protos)
    return confusion_matrix(dataset.y, res.prediction, dataset.k, "adversarial"), res


def _top_targets(counts, m):
    k = counts.shape[0]
    out = []
    for i in range(k):
        row = counts[i].astype(np.float64).copy()
        row[i] = -np.inf
        order = sorted(range(k), key=lambda j: (-row[j], j))
        out.append(frozenset(j for j in order[:m] if j != i))
    return out


def top_m_agreement(cm_a, cm_b, m=1) -> float:
    """Fraction of true classes whose ``m`` most frequent wrong predictions coincide."""
    a = getattr(cm_a, "counts", cm_a)
    b = getattr(cm_b, "counts", cm_b)
    if a.shape != b.shape:
        raise ValueError("confusion matrices must have the same size")
    if m < 1:
        raise ValueError("m must be at least 1")
    ta, tb = _top_targets(a, m), _top_targets(b, m)
    return float(np.mean([x == y for x, y in zip(ta, tb)]))


def _failure_set(result):
    if isinstance(result, AdvResult):
        return set(np.flatnonzero(np.atleast_1d(result.success)).tolist())
    return set(result)


def misclass_overlap(result_a, result_b):
    """``(jaccard, overlap_over_smaller)`` between two sets of failing sample ids.

    Accepts :class:`AdvResult` objects (failures = successful attacks) or
    plain collections of sample ids.
    """
    fa, fb = _failure_set(result_a), _failure_set(result_b)
    inter = len(fa & fb)
    union = len(fa | fb)
    smaller = min(len(fa), len(fb))
    jaccard = inter / union if union else 1.0
    over_min = inter / smaller if smaller else (1.0 if not union else 0.0)
    return jaccard, over_min


def nearest_in_predicted_class(model: Mlp, sample, predicted: int, dataset: Dataset,
                               metric=Metric.L2):
    """Index of the correctly classified ``predicted``-class sample closest in output space.

    Returns None when no such sample exists.
    """
    preds = model.predict(dataset.X)
    pool = np.flatnonzero((dataset.y == predicted) & (preds == predicted))
    if not pool.size:
        return None
    rep = forward(model, np.asarray(sample, dtype=np.float64))
    dist = pairwise_distances(rep[None], forward(model, dataset.X[pool]), metric)[0]
    return int(pool[np.argmin(dist)])


def transfer_eval(substitute: Mlp, targets, dataset: Dataset, cfg: AttackConfig):
    """Black-box robust accuracy of each target on examples crafted once on ``substitute``.

    Returns ``(accuracies, AdvResult)`` with one accuracy per target.
    """
    for t in targets:
        if t.input_dim != substitute.input_dim:
            raise ValueError(f"target input dim {t.input_dim} != substitute {substitute.input_dim}")
    res = pgd(substitute, dataset.X, dataset.y, cfg)
    accs = []
    for t in targets:
        natural_ok = t.predict(dataset.X) == dataset.y
        accs.append(float(np.mean(natural_ok & (t.predict(res.x_adv) == dataset.y))))
    return accs, res
