"""Finite-difference oracle for network gradients."""
import numpy as np

from reproto.model import backward, forward


def mean_loss(model, X, y, loss):
    return float(loss(forward(model, X), y)[0].mean())


def probe_gradients(model, X, y, loss, n_probes=100, h=1e-5, seed=0):
    """Largest relative error between analytic and central-difference gradients.

    Probes are drawn at random over every parameter entry and every input
    coordinate.
    """
    rng = np.random.default_rng(seed)
    bundle = backward(model, X, y, loss)
    targets = [(p, g) for p, g in zip(model.params(), bundle.param_grads)]
    X = X.copy()
    targets.append((X, bundle.input_grad))
    sizes = np.array([p.size for p, _ in targets])
    worst = 0.0
    for _ in range(n_probes):
        t = rng.choice(len(targets), p=sizes / sizes.sum()) if rng.uniform() < 0.7 else len(targets) - 1
        param, grad = targets[t]
        flat = rng.integers(param.size)
        idx = np.unravel_index(flat, param.shape)
        orig = param[idx]
        param[idx] = orig + h
        up = mean_loss(model, X, y, loss)
        param[idx] = orig - h
        down = mean_loss(model, X, y, loss)
        param[idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = grad[idx]
        # floor sits well above central-difference round-off (~eps_mach * |loss| / h)
        denom = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
