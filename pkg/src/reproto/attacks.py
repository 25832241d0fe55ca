"""White-box FGSM and multi-restart PGD under L2 / L-infinity budgets."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Metric, clamp_domain, norm, project_ball
from .model import (Mlp, PrototypeLoss, PrototypeMargin, SoftmaxXent,
                    forward, input_gradient)


class Init(str, enum.Enum):
    AT_INPUT = "at_input"
    UNIFORM = "uniform"


class Surrogate(str, enum.Enum):
    AUTO = "auto"
    TRAINING_LOSS = "training_loss"
    PROTOTYPE_MARGIN = "prototype_margin"
    SOFTMAX_XENT = "softmax_xent"


@dataclass(frozen=True)
class AttackConfig:
    metric: Metric = Metric.LINF
    eps: float = 8 / 255
    step_size: float | None = None     # None -> 2.5 * eps / n_iters
    n_iters: int = 20
    restarts: int = 1
    init: Init = Init.AT_INPUT
    surrogate: Surrogate = Surrogate.AUTO
    domain: tuple = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "init", Init(self.init))
        object.__setattr__(self, "surrogate", Surrogate(self.surrogate))
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.n_iters < 0 or self.restarts < 1:
            raise ValueError("need n_iters >= 0 and restarts >= 1")
        if self.step_size is not None and self.step_size <= 0 and self.n_iters >= 1 and self.eps > 0:
            raise ValueError("step_size must be positive")
        if self.domain[0] > self.domain[1]:
            raise ValueError("empty input domain")

    @property
    def step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.eps / self.n_iters if self.n_iters else 0.0

    def with_eps(self, eps) -> "AttackConfig":
        return replace(self, eps=eps)


@dataclass
class AdvResult:
    """Best adversarial point per sample.

    Fields are arrays over the batch; a single-sample attack yields a 1-D
    ``x_adv`` and scalar bookkeeping.
    """
    x_adv: np.ndarray
    achieved_loss: np.ndarray
    success: np.ndarray
    restarts_used: np.ndarray
    prediction: np.ndarray
    flat_gradient: np.ndarray
    aborted_restarts: np.ndarray

    def __len__(self):
        return 1 if self.x_adv.ndim == 1 else self.x_adv.shape[0]


def surrogate_fn(model: Mlp, surrogate=Surrogate.AUTO, protos=None):
    """Loss callable that an attack ascends."""
    surrogate = Surrogate(surrogate)
    protos = protos if protos is not None else model.protos
    if surrogate is Surrogate.AUTO:
        surrogate = Surrogate.PROTOTYPE_MARGIN if protos is not None else Surrogate.SOFTMAX_XENT
    if surrogate is Surrogate.TRAINING_LOSS:
        return model.training_loss()
    if surrogate is Surrogate.PROTOTYPE_MARGIN:
        if protos is None:
            raise ValueError("prototype margin surrogate on a model without prototypes")
        return PrototypeMargin(protos)
    if protos is not None and model.protos is not None:
        raise ValueError("softmax cross-entropy surrogate on a prototype model")
    return SoftmaxXent()


def surrogate_loss(model: Mlp, x, label, surrogate=Surrogate.AUTO, protos=None):
    fn = surrogate_fn(model, surrogate, protos)
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    losses = fn(forward(model, X), np.atleast_1d(np.asarray(label, dtype=np.int64)))[0]
    return float(losses[0]) if np.ndim(x) == 1 else losses


def restart_rng(seed: int, sample_id: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([seed, sample_id, restart])


def sample_ball(rng, center, eps, metric) -> np.ndarray:
    """Uniform draw from the ``eps``-ball around ``center``."""
    d = center.shape[-1]
    if Metric.parse(metric) is Metric.LINF:
        return center + rng.uniform(-eps, eps, size=d)
    direction = rng.standard_normal(d)
    direction /= max(np.sqrt(direction @ direction), 1e-300)
    return center + direction * eps * rng.uniform() ** (1.0 / d)


def _ascent_direction(grad, metric):
    if metric is Metric.LINF:
        return np.sign(grad)
    length = norm(grad, Metric.L2)[:, None]
    return np.where(length > 0, grad / np.where(length > 0, length, 1.0), 0.0)


def pgd(model: Mlp, x, label, cfg: AttackConfig, protos=None, sample_ids=None,
        x_init=None, predict=None) -> AdvResult:
    """Projected gradient ascent on the configured surrogate.

    Each restart starts at ``x`` (or a uniform point in the ball), takes
    ``n_iters`` signed (L-inf) or normalised (L2) steps, and after every step
    projects onto the ball around the original ``x`` and clamps to the input
    domain.  Per sample, the first successful restart with the highest loss
    wins; otherwise the highest-loss restart.  ``x_init`` warm-starts the
    first restart.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    n = X.shape[0]
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    fn = surrogate_fn(model, cfg.surrogate, protos)
    predict = predict if predict is not None else model.predict
    lo, hi = cfg.domain
    step = cfg.step

    best_x = X.copy()
    best_loss = np.full(n, -np.inf)
    best_success = np.zeros(n, dtype=bool)
    used = np.zeros(n, dtype=np.int64)
    flat = np.zeros(n, dtype=bool)
    aborted = np.zeros(n, dtype=np.int64)

    for restart in range(cfg.restarts):
        if restart == 0 and x_init is not None:
            xa = np.atleast_2d(np.asarray(x_init, dtype=np.float64)).copy()
        elif cfg.init is Init.UNIFORM and cfg.eps > 0:
            xa = np.stack([sample_ball(restart_rng(cfg.seed, int(i), restart), X[j], cfg.eps,
                                       cfg.metric) for j, i in enumerate(ids)])
        else:
            xa = X.copy()
        xa = clamp_domain(project_ball(xa, X, cfg.eps, cfg.metric), lo, hi)
        ok = np.ones(n, dtype=bool)
        for it in range(cfg.n_iters):
            losses, grad = input_gradient(model, xa, y, fn)
            bad = ~(np.isfinite(losses) & np.all(np.isfinite(grad), axis=1))
            ok &= ~bad
            grad = np.where(ok[:, None], grad, 0.0)
            if it == 0 and restart == 0:
                flat = np.all(grad == 0.0, axis=1)
            xa = xa + step * _ascent_direction(grad, cfg.metric)
            xa = clamp_domain(project_ball(xa, X, cfg.eps, cfg.metric), lo, hi)
        losses = fn(forward(model, xa), y)[0]
        ok &= np.isfinite(losses)
        aborted += ~ok
        losses = np.where(ok, losses, -np.inf)
        success = ok & (predict(xa) != y)
        used += 1
        better = (success & ~best_success) | ((success == best_success) & (losses > best_loss))
        better &= ok | (restart == 0)
        best_x = np.where(better[:, None], xa, best_x)
        best_loss = np.where(better, losses, best_loss)
        best_success |= success

    pred = np.atleast_1d(predict(best_x))
    result = AdvResult(best_x, best_loss, best_success, used, pred, flat, aborted)
    if single:
        result = AdvResult(best_x[0], float(best_loss[0]), bool(best_success[0]),
                           int(used[0]), int(pred[0]), bool(flat[0]), int(aborted[0]))
    return result


def fgsm(model: Mlp, x, label, cfg: AttackConfig, protos=None, sample_ids=None) -> AdvResult:
    """One full-budget step: PGD with ``n_iters=1``, start at ``x``, ``step=eps``."""
    one_step = replace(cfg, n_iters=1, restarts=1, init=Init.AT_INPUT, step_size=cfg.eps)
    return pgd(model, x, label, one_step, protos=protos, sample_ids=sample_ids)


def adversarial_csv(result: AdvResult, labels, sample_ids=None) -> str:
    """CSV rows ``sample_id,label,prediction,x0,...`` for a batch of adversarial points."""
    X = np.atleast_2d(result.x_adv)
    labels = np.atleast_1d(labels)
    pred = np.atleast_1d(result.prediction)
    ids = np.arange(X.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "label", "prediction"] + [f"x{j}" for j in range(X.shape[1])])
    for i in range(X.shape[0]):
        w.writerow([int(ids[i]), int(labels[i]), int(pred[i])] + [repr(float(v)) for v in X[i]])
    return buf.getvalue()


def read_adversarial_csv(text: str):
    """Inverse of :func:`adversarial_csv`: ``(sample_ids, labels, predictions, X)``."""
    rows = list(csv.reader(io.StringIO(text)))
    body = rows[1:]
    if not body:
        return (np.zeros(0, int), np.zeros(0, int), np.zeros(0, int), np.zeros((0, 0)))
    arr = np.array([[float(v) for v in r] for r in body])
    return arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int), arr[:, 3:]
