"""SGD training loops: prototype loss, plain softmax, and PGD adversarial training."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, Surrogate, pgd
from .data import Dataset, augment
from .model import LossMode, Mlp, PrototypeLoss, SoftmaxXent, backward
from .prototypes import PrototypeSet


# -- learning-rate schedules -----------------------------------------------

@dataclass(frozen=True)
class Constant:
    lr: float = 0.01


@dataclass(frozen=True)
class Cyclical:
    """Triangular cycle from ``base`` up to ``max_lr`` and back."""
    base: float = 1e-4
    max_lr: float = 0.02
    cycle_epochs: float = 10.0

    def __post_init__(self):
        if self.base > self.max_lr:
            raise ValueError("cyclical schedule needs base <= max_lr")
        if self.cycle_epochs <= 0:
            raise ValueError("cycle_epochs must be positive")


@dataclass(frozen=True)
class MultiStep:
    lr: float = 0.1
    decay_epochs: tuple = (50, 100)
    factor: float = 0.1


def lr_at(step: int, schedule, steps_per_epoch: int = 1) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    if isinstance(schedule, Constant):
        return schedule.lr
    if isinstance(schedule, Cyclical):
        period = schedule.cycle_epochs * steps_per_epoch
        phase = (step % period) / period
        tri = 1.0 - abs(2.0 * phase - 1.0)
        return schedule.base + (schedule.max_lr - schedule.base) * tri
    if isinstance(schedule, MultiStep):
        epoch = step // steps_per_epoch
        n_decays = sum(1 for e in schedule.decay_epochs if epoch >= e)
        return schedule.lr * schedule.factor ** n_decays
    raise TypeError(f"unknown schedule {schedule!r}")


# -- regimes ---------------------------------------------------------------

@dataclass(frozen=True)
class Softmax:
    pass


@dataclass(frozen=True)
class Repulsive:
    protos: PrototypeSet
    loss_mode: LossMode = LossMode.SQUARED_DISTANCE


@dataclass(frozen=True)
class AdversarialTraining:
    """Mix of natural and adversarial loss; ``alpha=0`` trains on adversarial points only."""
    alpha: float = 0.0
    attack: AttackConfig = field(default_factory=lambda: AttackConfig(n_iters=7))
    base: Softmax | Repulsive = field(default_factory=Softmax)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class EarlyStop:
    enabled: bool = False
    eval_every: int = 1
    attack: AttackConfig = field(default_factory=lambda: AttackConfig(n_iters=5))
    patience: int | None = None
    subset: int | None = 200
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    schedule: Constant | Cyclical | MultiStep = field(default_factory=Cyclical)
    momentum: float = 0.9
    regime: Softmax | Repulsive | AdversarialTraining = field(default_factory=Softmax)
    early_stop: EarlyStop = field(default_factory=EarlyStop)
    augment: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("need epochs >= 0 and batch_size >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


# -- history ---------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    nat_acc: float
    rob_acc: float | None
    lr: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    best_robust_acc: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "nat_acc", "rob_acc", "lr"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.loss), _cell(r.nat_acc), _cell(r.rob_acc), repr(r.lr)])
        return buf.getvalue()


def _cell(value):
    return "" if value is None else repr(value)


class TrainingDiverged(FloatingPointError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


# -- loop ------------------------------------------------------------------

def _base_regime(regime):
    return regime.base if isinstance(regime, AdversarialTraining) else regime


def prepare_model(model: Mlp, regime) -> Mlp:
    """Copy of ``model`` carrying the prototypes / loss mode implied by ``regime``."""
    base = _base_regime(regime)
    out = model.copy()
    if isinstance(base, Repulsive):
        if base.protos.D != model.output_dim:
            raise ValueError(f"prototype dim {base.protos.D} != output dim {model.output_dim}")
        out.protos = base.protos
        out.loss_mode = LossMode.parse(base.loss_mode)
    else:
        out.protos = None
        out.loss_mode = LossMode.SOFTMAX_XENT
    return out


def evaluate_robust_checkpoint(model: Mlp, val: Dataset, attack: AttackConfig,
                               subset: int | None = 200, seed: int = 0) -> float:
    """Robust accuracy of ``model`` on a fixed seeded subset of ``val``."""
    idx = np.arange(len(val))
    if subset is not None and subset < len(val):
        idx = np.sort(np.random.default_rng(seed).choice(len(val), subset, replace=False))
    X, y = val.X[idx], val.y[idx]
    natural_ok = model.predict(X) == y
    res = pgd(model, X, y, attack, sample_ids=idx)
    return float(np.mean(natural_ok & ~res.success))


def train(model: Mlp, train_set: Dataset, val_set: Dataset | None, cfg: TrainConfig):
    """Mini-batch SGD with momentum; returns ``(trained_model, history)``.

    With early stopping enabled the returned model is the checkpoint with the
    best robust validation accuracy (earliest on ties).
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    model = prepare_model(model, cfg.regime)
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history
    if model.protos is not None and train_set.k > model.protos.k:
        raise ValueError("more classes than prototypes")
    if model.protos is None and train_set.k > model.output_dim:
        raise ValueError("more classes than logits")

    regime = cfg.regime
    base = _base_regime(regime)
    loss_fn = SoftmaxXent() if isinstance(base, Softmax) else PrototypeLoss(base.protos, base.loss_mode)
    adversarial = isinstance(regime, AdversarialTraining) and regime.alpha < 1.0
    if adversarial:
        adv_cfg = regime.attack
        if adv_cfg.surrogate is Surrogate.AUTO:
            adv_cfg = replace(adv_cfg, surrogate=Surrogate.TRAINING_LOSS)

    n = len(train_set)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(p) for p in model.params()]
    es = cfg.early_stop
    best_params = None
    evals_since_best = 0
    step = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_lr = lr_at(step, cfg.schedule, steps_per_epoch)
        total = 0.0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            X, y = train_set.X[idx], train_set.y[idx]
            if cfg.augment and train_set.shape is not None:
                X = np.stack([augment(x, train_set.shape, seed=[cfg.seed, step, int(i)])[0]
                              for x, i in zip(X, idx)])
            lr = lr_at(step, cfg.schedule, steps_per_epoch)
            try:
                if adversarial:
                    attack = replace(adv_cfg, seed=cfg.seed * 1_000_003 + step)
                    X_adv = pgd(model, X, y, attack, sample_ids=idx).x_adv
                    g_adv = backward(model, X_adv, y, loss_fn)
                    if regime.alpha > 0.0:
                        g_nat = backward(model, X, y, loss_fn)
                        grads = [regime.alpha * a + (1 - regime.alpha) * c
                                 for a, c in zip(g_nat.param_grads, g_adv.param_grads)]
                        batch_loss = regime.alpha * g_nat.loss_value + (1 - regime.alpha) * g_adv.loss_value
                    else:
                        grads, batch_loss = g_adv.param_grads, g_adv.loss_value
                else:
                    g = backward(model, X, y, loss_fn)
                    grads, batch_loss = g.param_grads, g.loss_value
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}, step {step}: {exc}", history) from exc
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"epoch {epoch}, step {step}: non-finite loss", history)
            for p, v, gr in zip(model.params(), velocity, grads):
                v *= cfg.momentum
                v += gr
                p -= lr * v
            total += batch_loss * len(idx)
            step += 1

        nat_acc = rob_acc = None
        if val_set is not None and len(val_set):
            nat_acc = float(np.mean(model.predict(val_set.X) == val_set.y))
        if es.enabled and val_set is not None and epoch % es.eval_every == 0:
            rob_acc = evaluate_robust_checkpoint(model, val_set, es.attack, es.subset, es.seed)
        history.records.append(EpochRecord(epoch, total / n, nat_acc, rob_acc, epoch_lr))

        if rob_acc is not None:
            if history.best_robust_acc is None or rob_acc > history.best_robust_acc:
                history.best_robust_acc = rob_acc
                history.best_epoch = epoch
                best_params = [p.copy() for p in model.params()]
                evals_since_best = 0
            else:
                evals_since_best += 1
                if es.patience is not None and evals_since_best >= es.patience:
                    break

    if best_params is not None:
        for p, best in zip(model.params(), best_params):
            p[...] = best
    else:
        history.best_epoch = history.records[-1].epoch
    return model, history
