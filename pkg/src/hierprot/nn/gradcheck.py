"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tape


def numeric_gradient(fn, param, eps=1e-4):
    """Central differences of scalar ``fn()`` with respect to every entry of ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(fn().data)
        flat[i] = orig - eps
        down = float(fn().data)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * eps)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """Max of ``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries sane."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn, params, eps=1e-4):
    """Return the worst relative error across ``params`` for scalar-valued ``fn``."""
    with Tape() as tape:
        out = fn()
    analytic = tape.backward(out, params)
    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, max_relative_error(a, numeric_gradient(fn, p, eps)))
    return worst
