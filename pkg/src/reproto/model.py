"""Fully connected ReLU network with hand-written reverse-mode gradients.

Losses are small callables mapping ``(outputs, labels)`` to per-sample loss
values and their gradient with respect to the outputs; :func:`backward`
chains that through the network.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Metric, distance_gradient, norm, pairwise_distances
from .prototypes import PrototypeSet, format_prototypes, parse_prototypes

FORMAT_VERSION = 1
_MAGIC = "reproto-mlp"


class LossMode(str, enum.Enum):
    SQUARED_DISTANCE = "squared_distance"
    ONE_MINUS_COSINE = "one_minus_cosine"
    SOFTMAX_XENT = "softmax_xent"

    @classmethod
    def parse(cls, value) -> "LossMode":
        if isinstance(value, LossMode):
            return value
        return cls(str(value).strip().lower())


class Mlp:
    """ReLU hidden layers, identity output layer.

    ``weights[i]`` has shape ``(layer_dims[i], layer_dims[i+1])`` so a batch
    ``X`` of shape ``(n, in)`` maps through ``X @ W + b``.  When ``protos`` is
    set the network is a prototype classifier (nearest prototype wins);
    otherwise its outputs are logits.
    """

    def __init__(self, weights, biases, protos: PrototypeSet | None = None,
                 loss_mode: LossMode | None = None):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {W.shape} / bias {b.shape} mismatch")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim {W.shape[0]} does not follow "
                                 f"{self.weights[i - 1].shape[1]}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        if protos is not None and protos.D != self.output_dim:
            raise ValueError(f"prototype dim {protos.D} != output dim {self.output_dim}")
        self.protos = protos
        if loss_mode is None:
            loss_mode = LossMode.SOFTMAX_XENT if protos is None else LossMode.SQUARED_DISTANCE
        self.loss_mode = LossMode.parse(loss_mode)

    @classmethod
    def init(cls, layer_dims, seed=0, protos=None, loss_mode=None) -> "Mlp":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, protos=protos, loss_mode=loss_mode)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   protos=self.protos, loss_mode=self.loss_mode)

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return (self.layer_dims == other.layer_dims
                and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
                and self.protos == other.protos and self.loss_mode == other.loss_mode)

    def forward(self, x) -> np.ndarray:
        return forward(self, x)

    def predict(self, x) -> np.ndarray:
        """Class ids under this model's own classification rule."""
        if self.protos is not None:
            return classify_prototype(self, x, self.protos)
        return classify_softmax(self, x)

    def training_loss(self):
        if self.loss_mode is LossMode.SOFTMAX_XENT:
            return SoftmaxXent()
        return PrototypeLoss(self.protos, self.loss_mode)


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input dim {model.input_dim}")
    return X, single


def _forward_cache(model, X):
    acts = [X]
    pre = []
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(model: Mlp, x) -> np.ndarray:
    X, single = _as_batch(model, x)
    out = _forward_cache(model, X)[0][-1]
    return out[0] if single else out


# -- losses on network outputs ---------------------------------------------

def softmax_xent(logits, label) -> float:
    """``-log softmax(logits)[label]`` with max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} logits")
    loss, _ = SoftmaxXent()(logits[None], np.array([label]))
    return float(loss[0])


def proto_loss(output, label, protos: PrototypeSet, mode=LossMode.SQUARED_DISTANCE) -> float:
    output = np.asarray(output, dtype=np.float64)
    if output.shape[-1] != protos.D:
        raise ValueError(f"output dim {output.shape[-1]} != prototype dim {protos.D}")
    loss, _ = PrototypeLoss(protos, mode)(output[None], np.array([label]))
    return float(loss[0])


class SoftmaxXent:
    def __call__(self, out, y):
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=1))
        rows = np.arange(out.shape[0])
        loss = logz - shifted[rows, y]
        grad = np.exp(shifted - logz[:, None])
        grad[rows, y] -= 1.0
        return loss, grad


class PrototypeLoss:
    """Squared distance to the label's prototype, or ``(1 - cos)^2``."""

    def __init__(self, protos: PrototypeSet, mode=LossMode.SQUARED_DISTANCE):
        mode = LossMode.parse(mode)
        if mode is LossMode.SOFTMAX_XENT:
            raise ValueError("softmax cross-entropy is not a prototype loss")
        if protos is None:
            raise ValueError("prototype loss needs a PrototypeSet")
        self.protos = protos
        self.mode = mode

    def __call__(self, out, y):
        p = self.protos.centers[y]
        if self.mode is LossMode.SQUARED_DISTANCE:
            d = norm(out - p, self.protos.metric)
            g, _ = distance_gradient(out, p, self.protos.metric)
            return d * d, 2.0 * d[:, None] * g
        out_norm = np.sqrt(np.sum(out * out, axis=1))
        if np.any(out_norm == 0.0):
            raise ZeroDivisionError("cosine undefined for a zero-norm output")
        p_norm = np.sqrt(np.sum(p * p, axis=1))
        cos = np.sum(out * p, axis=1) / (out_norm * p_norm)
        dcos = p / (out_norm * p_norm)[:, None] - cos[:, None] * out / (out_norm ** 2)[:, None]
        return (1.0 - cos) ** 2, -2.0 * (1.0 - cos)[:, None] * dcos


class PrototypeMargin:
    """``d(f, p_y) - min_{j != y} d(f, p_j)``; positive means misclassified."""

    def __init__(self, protos: PrototypeSet):
        if protos is None:
            raise ValueError("margin surrogate needs a PrototypeSet")
        self.protos = protos

    def __call__(self, out, y):
        m = self.protos.metric
        dist = pairwise_distances(out, self.protos.centers, m)
        rows = np.arange(out.shape[0])
        own = dist[rows, y]
        masked = dist.copy()
        masked[rows, y] = np.inf
        rival = np.argmin(masked, axis=1)
        g_own, _ = distance_gradient(out, self.protos.centers[y], m)
        g_rival, _ = distance_gradient(out, self.protos.centers[rival], m)
        return own - masked[rows, rival], g_own - g_rival


def resolve_loss(model: Mlp, mode=None, protos=None):
    """Loss callable for ``mode`` (defaults to the model's training loss)."""
    if mode is None:
        return model.training_loss()
    mode = LossMode.parse(mode)
    if mode is LossMode.SOFTMAX_XENT:
        return SoftmaxXent()
    return PrototypeLoss(protos if protos is not None else model.protos, mode)


# -- gradients -------------------------------------------------------------

@dataclass
class GradientBundle:
    loss_value: float
    param_grads: list          # [dW0, db0, dW1, db1, ...], same shapes as Mlp.params()
    input_grad: np.ndarray     # (n, input_dim), gradient of the mean loss
    per_sample_loss: np.ndarray


def backward(model: Mlp, X, y, loss=None) -> GradientBundle:
    """Exact gradients of the mean batch loss w.r.t. parameters and inputs."""
    X, _ = _as_batch(model, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    loss = loss if loss is not None else model.training_loss()
    n = X.shape[0]
    acts, pre = _forward_cache(model, X)
    losses, delta = loss(acts[-1], y)
    if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(delta))):
        raise FloatingPointError(f"non-finite loss at output layer {len(model.weights) - 1}")
    delta = delta / n
    grads = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        if i != len(model.weights) - 1:
            delta = delta * (pre[i] > 0.0)
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ model.weights[i].T
        if not np.all(np.isfinite(delta)):
            raise FloatingPointError(f"non-finite gradient at layer {i}")
    return GradientBundle(float(losses.mean()), grads, delta, losses)


def input_gradient(model: Mlp, X, y, loss):
    """Per-sample losses and the gradient of each sample's own loss w.r.t. its input."""
    X, _ = _as_batch(model, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    acts, pre = _forward_cache(model, X)
    losses, delta = loss(acts[-1], y)
    for i in range(len(model.weights) - 1, -1, -1):
        if i != len(model.weights) - 1:
            delta = delta * (pre[i] > 0.0)
        delta = delta @ model.weights[i].T
    return losses, delta


def mixed_loss(model: Mlp, x, x_adv, label, alpha: float, base=None, protos=None) -> float:
    """``alpha * loss(x) + (1 - alpha) * loss(x_adv)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    fn = resolve_loss(model, base, protos)
    X, _ = _as_batch(model, x)
    Xa, _ = _as_batch(model, x_adv)
    y = np.asarray(label, dtype=np.int64).reshape(-1)
    nat = fn(forward(model, X), y)[0].mean()
    adv = fn(forward(model, Xa), y)[0].mean()
    return float(alpha * nat + (1.0 - alpha) * adv)


# -- classification --------------------------------------------------------

def nearest_prototype(outputs, protos: PrototypeSet) -> np.ndarray:
    outputs = np.atleast_2d(outputs)
    return np.argmin(pairwise_distances(outputs, protos.centers, protos.metric), axis=1)


def classify_prototype(model: Mlp, x, protos: PrototypeSet | None = None):
    protos = protos if protos is not None else model.protos
    X, single = _as_batch(model, x)
    pred = nearest_prototype(forward(model, X), protos)
    return int(pred[0]) if single else pred


def classify_softmax(model: Mlp, x):
    X, single = _as_batch(model, x)
    pred = np.argmax(forward(model, X), axis=1)
    return int(pred[0]) if single else pred


# -- persistence -----------------------------------------------------------
#
# Text container, one value per token, repr() precision:
#   reproto-mlp <version>
#   layer_dims <d0> <d1> ... <dL>
#   loss_mode <mode>
#   protos <0|1>
#   [prototype CSV block, if protos == 1]
#   W<i> then d_i rows of d_{i+1} values, b<i> then one row of d_{i+1} values
#   end

def format_model(model: Mlp) -> str:
    lines = [f"{_MAGIC} {FORMAT_VERSION}",
             "layer_dims " + " ".join(str(d) for d in model.layer_dims),
             f"loss_mode {model.loss_mode.value}",
             f"protos {int(model.protos is not None)}"]
    if model.protos is not None:
        lines += format_prototypes(model.protos).splitlines()
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"W{i}")
        lines += [" ".join(repr(float(v)) for v in row) for row in W]
        lines.append(f"b{i}")
        lines.append(" ".join(repr(float(v)) for v in b))
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_model(text: str, source="<string>") -> Mlp:
    lines = text.splitlines()
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            raise ValueError(f"{source}: truncated model file (expected {what})")
        pos += 1
        return lines[pos - 1]

    magic = take("header").split()
    if len(magic) != 2 or magic[0] != _MAGIC:
        raise ValueError(f"{source}:1: not a model file")
    if int(magic[1]) != FORMAT_VERSION:
        raise ValueError(f"{source}:1: unsupported model format version {magic[1]}")
    dims = [int(v) for v in take("layer_dims").split()[1:]]
    mode = LossMode.parse(take("loss_mode").split()[1])
    protos = None
    if take("protos").split()[1] == "1":
        k = int(lines[pos].split(",")[0]) if pos < len(lines) else 0
        block = [take("prototype rows") for _ in range(k + 1)]
        protos = parse_prototypes("\n".join(block), source)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        take(f"W{i}")
        W = np.array([[float(v) for v in take(f"W{i} row").split()] for _ in range(fan_in)])
        take(f"b{i}")
        b = np.array([float(v) for v in take(f"b{i}").split()])
        if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ValueError(f"{source}: layer {i} block has wrong shape")
        weights.append(W)
        biases.append(b)
    if take("end").strip() != "end":
        raise ValueError(f"{source}: missing end marker")
    return Mlp(weights, biases, protos=protos, loss_mode=mode)


def save_model(model: Mlp, path) -> None:
    Path(path).write_text(format_model(model))


def load_model(path) -> Mlp:
    return parse_model(Path(path).read_text(), source=str(path))
