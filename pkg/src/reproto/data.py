"""Seeded synthetic datasets, CSV I/O, stratified splits and light augmentation.

Inputs always live in [0, 1] so that perturbation budgets mean the same thing
across datasets.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MissingClassWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    k: int
    shape: tuple | None = None          # (H, W, C) for image-like rows
    missing_classes: tuple = field(default=(), compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {X.shape} and labels {y.shape} disagree")
        if X.size and (X.min() < 0.0 or X.max() > 1.0 or not np.all(np.isfinite(X))):
            raise ValueError("input coordinates must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")
        if self.shape is not None and int(np.prod(self.shape)) != X.shape[1]:
            raise ValueError(f"shape {self.shape} does not match row length {X.shape[1]}")
        missing = tuple(int(c) for c in np.setdiff1d(np.arange(self.k), y))
        for a in (X, y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "missing_classes", missing)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.k, self.shape)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.k == other.k and self.shape == other.shape
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y))


def gen_gaussians(k=5, input_dim=10, center_spread=1.0, sigma=0.05, n_per_class=100,
                  seed=0) -> Dataset:
    """Isotropic Gaussian blobs.

    Centres are uniform in [0.2, 0.8]^dim, scaled about 0.5 by
    ``center_spread``; samples are clamped to [0, 1] and ordered by class.
    """
    if k < 2 or input_dim < 1 or n_per_class < 1:
        raise ValueError("need k >= 2, input_dim >= 1, n_per_class >= 1")
    if sigma < 0 or center_spread < 0:
        raise ValueError("sigma and center_spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = 0.5 + center_spread * (rng.uniform(0.2, 0.8, size=(k, input_dim)) - 0.5)
    y = np.repeat(np.arange(k), n_per_class)
    X = centers[y] + sigma * rng.standard_normal((y.size, input_dim))
    return Dataset(np.clip(X, 0.0, 1.0), y, k)


def spiral_curve(t, cls, k, turns=1.5):
    """Noise-free spiral arm ``cls`` of ``k`` at parameter ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    angle = 2 * np.pi * (turns * t + cls / k)
    radius = 0.05 + 0.4 * t
    return np.stack([0.5 + radius * np.cos(angle), 0.5 + radius * np.sin(angle)], axis=-1)


def gen_spirals(k=2, n_per_class=200, noise=0.0, seed=0, turns=1.5) -> Dataset:
    """Interleaved spirals in the unit square."""
    if k not in (2, 3):
        raise ValueError("spirals support k = 2 or 3")
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(k):
        t = rng.uniform(0.0, 1.0, n_per_class)
        X.append(spiral_curve(t, c, k, turns) + noise * rng.standard_normal((n_per_class, 2)))
        y.append(np.full(n_per_class, c))
    return Dataset(np.clip(np.concatenate(X), 0.0, 1.0), np.concatenate(y), k)


def split(dataset: Dataset, train_fraction=0.8, seed=0):
    """Stratified, seeded, disjoint and exhaustive train/test split."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(dataset.k):
        idx = np.flatnonzero(dataset.y == c)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(train_fraction * idx.size))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return dataset.subset(train_idx), dataset.subset(test_idx)


# -- CSV -------------------------------------------------------------------

def format_csv_dataset(ds: Dataset) -> str:
    buf = io.StringIO()
    if ds.shape is not None:
        buf.write("# shape=" + ",".join(str(s) for s in ds.shape) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label"] + [f"x{j}" for j in range(ds.dim)])
    for xi, yi in zip(ds.X, ds.y):
        w.writerow([int(yi)] + [repr(float(v)) for v in xi])
    return buf.getvalue()


def save_csv_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(format_csv_dataset(ds))


def load_csv_dataset(path, k: int | None = None) -> Dataset:
    """Read ``label,x0,x1,...`` rows; optional ``# shape=H,W,C`` comment first.

    Missing classes (with ``k`` given) raise :class:`MissingClassWarning`.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    shape = None
    start = 0
    if lines and lines[0].startswith("#"):
        key, _, value = lines[0][1:].strip().partition("=")
        if key.strip() == "shape":
            shape = tuple(int(v) for v in value.split(","))
        start = 1
    reader = csv.reader(lines[start:])
    header = next(reader, None)
    if not header or header[0] != "label":
        raise ValueError(f"{path}:{start + 1}: header must start with 'label'")
    dim = len(header) - 1
    X, y = [], []
    for lineno, row in enumerate(reader, start=start + 2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            label = int(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"{path}:{lineno}: coordinate outside [0, 1]")
        if label < 0 or (k is not None and label >= k):
            raise ValueError(f"{path}:{lineno}: label {label} out of range")
        X.append(vals)
        y.append(label)
    if k is None:
        k = max(y) + 1 if y else 2
    ds = Dataset(np.array(X).reshape(len(X), dim), np.array(y, dtype=np.int64), k, shape)
    if ds.missing_classes:
        warnings.warn(f"{path}: classes {list(ds.missing_classes)} have no samples",
                      MissingClassWarning, stacklevel=2)
    return ds


# -- augmentation ----------------------------------------------------------

def augment(sample, shape, seed=None, pad=2, flip=None, offset=None):
    """Random horizontal flip plus reflect-padded random crop.

    Returns ``(augmented, applied)``; ``applied`` is False for flat data with
    no ``shape``, in which case the sample comes back untouched.  ``flip`` and
    ``offset`` force the otherwise random choices.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if shape is None:
        return sample.copy(), False
    H, W, C = shape
    img = sample.reshape(H, W, C)
    rng = np.random.default_rng(seed)
    do_flip = rng.uniform() < 0.5 if flip is None else flip
    if offset is None:
        offset = tuple(rng.integers(0, 2 * pad + 1, size=2))
    if do_flip:
        img = img[:, ::-1, :]
    if pad > 0:
        padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
        oy, ox = offset
        img = padded[oy:oy + H, ox:ox + W, :]
    return np.clip(img, 0.0, 1.0).reshape(-1), True
