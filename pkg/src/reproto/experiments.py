"""Desk-scale comparison of prototype-trained and softmax-trained networks.

The task is 5-class Gaussian blobs in 10-D with 500 training samples per
class; both networks share the hidden architecture and training schedule and
differ only in the output layer and loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig
from .data import Dataset, gen_gaussians, split
from .evaluation import RobustnessCurve, accuracy, robustness_curve
from .model import Mlp
from .prototypes import PrototypeSet, build_prototypes
from .training import Cyclical, Repulsive, Softmax, TrainConfig, train

EPS_GRID = np.round(np.arange(0.0, 0.305, 0.01), 10)


@dataclass
class BlobTask:
    k: int = 5
    input_dim: int = 10
    sigma: float = 0.08
    n_train: int = 500
    n_test: int = 100
    hidden: tuple = (64, 64)
    epochs: int = 30
    batch_size: int = 64
    max_lr: float = 0.02
    D: int = 50

    def data(self, seed):
        ds = gen_gaussians(self.k, self.input_dim, sigma=self.sigma,
                           n_per_class=self.n_train + self.n_test, seed=seed)
        return split(ds, self.n_train / (self.n_train + self.n_test), seed=seed)

    def train_config(self, regime, seed):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           schedule=Cyclical(1e-4, self.max_lr, self.epochs),
                           regime=regime, seed=seed)

    def train_softmax(self, train_set, seed):
        net = Mlp.init([self.input_dim, *self.hidden, self.k], seed=seed)
        return train(net, train_set, None, self.train_config(Softmax(), seed))[0]

    def train_repulsive(self, train_set, seed, D=None):
        protos = build_prototypes(self.k, D or self.D, seed=seed, r=1.0, mu=0.01, epochs=100)
        net = Mlp.init([self.input_dim, *self.hidden, protos.D], seed=seed)
        return train(net, train_set, None, self.train_config(Repulsive(protos), seed))[0]


@dataclass
class Comparison:
    seed: int
    test: Dataset
    repulsive: Mlp
    softmax: Mlp
    curve_repulsive: RobustnessCurve
    curve_softmax: RobustnessCurve

    @property
    def natural(self):
        return accuracy(self.repulsive, self.test), accuracy(self.softmax, self.test)

    def breaking_eps(self, threshold=0.4) -> float:
        """Smallest even grid eps where the softmax baseline drops below ``threshold``.

        Even grid points keep ``eps / 2`` on the grid for retention ratios.
        """
        grid = self.curve_softmax.eps_values
        for i in range(2, grid.size, 2):
            if self.curve_softmax.robust_acc[i] < threshold:
                return float(grid[i])
        raise ValueError("baseline never drops below the threshold on the grid")

    def robust_at(self, eps):
        i = int(np.flatnonzero(np.isclose(self.curve_softmax.eps_values, eps))[0])
        return self.curve_repulsive.robust_acc[i], self.curve_softmax.robust_acc[i]

    def retention(self, eps):
        return (self.curve_repulsive.retention(eps / 2, eps),
                self.curve_softmax.retention(eps / 2, eps))


def attack_for(metric="linf", n_iters=20, restarts=1, seed=0) -> AttackConfig:
    """PGD with the default adaptive surrogate (prototype margin / cross-entropy)."""
    return AttackConfig(metric=metric, eps=0.0, n_iters=n_iters, restarts=restarts,
                        init="uniform" if restarts > 1 else "at_input", seed=seed)


def compare(seed: int, task: BlobTask | None = None, attack: AttackConfig | None = None,
            eps_grid=EPS_GRID) -> Comparison:
    task = task or BlobTask()
    attack = attack or attack_for(seed=seed)
    train_set, test_set = task.data(seed)
    rep = task.train_repulsive(train_set, seed)
    soft = task.train_softmax(train_set, seed)
    return Comparison(seed, test_set, rep, soft,
                      robustness_curve(rep, test_set, eps_grid, attack),
                      robustness_curve(soft, test_set, eps_grid, attack))
