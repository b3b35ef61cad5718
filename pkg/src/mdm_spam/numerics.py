"""Dense float64 helpers: activations, stable softmax, Adam and a gradient checker.

Arrays are plain ``numpy.ndarray`` objects of dtype float64; there is no
wrapper tensor type.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

DTYPE = np.float64


def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def tanh(x):
    return np.tanh(x)


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=DTYPE)
    return -np.logaddexp(0.0, -x)


def softmax(x, axis: int = -1, mask=None):
    """Max-shifted softmax along ``axis``.

    ``mask`` (boolean, broadcastable to ``x``) excludes entries: they get
    probability exactly zero. Every slice must keep at least one entry.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    if mask is not None:
        mask = np.broadcast_to(mask, x.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax: every entry of a slice is masked")
        x = np.where(mask, x, -np.inf)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def softmax_backward(p, dp, axis: int = -1):
    """Vector-Jacobian product of softmax given its output ``p``."""
    return p * (dp - np.sum(dp * p, axis=axis, keepdims=True))


@dataclass
class AdamState:
    """Moment accumulators for one parameter tensor."""

    shape: tuple
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.m is None:
            self.m = np.zeros(self.shape, dtype=DTYPE)
        if self.v is None:
            self.v = np.zeros(self.shape, dtype=DTYPE)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update. Returns the new parameter value and
    advances ``state`` (moments and step counter) in place."""
    param = np.asarray(param, dtype=DTYPE)
    grad = np.asarray(grad, dtype=DTYPE)
    if param.shape != grad.shape or param.shape != state.shape:
        raise ValueError(
            f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"state {state.shape}"
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Adam over a named collection of tensors."""

    def __init__(self, params: Mapping[str, np.ndarray], lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8):
        self.states = {
            name: AdamState(p.shape, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for name, p in params.items()
        }

    def step(self, params: dict, grads: Mapping[str, np.ndarray]) -> None:
        for name, state in self.states.items():
            params[name] = adam_step(params[name], grads[name], state)


def finite_diff_check(
    loss_fn: Callable[[dict], float],
    params: Mapping[str, np.ndarray],
    analytic_grads: Mapping[str, np.ndarray],
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central differences.

    Returns the max over checked coordinates of
    ``|a - n| / max(1, |a| + |n|)``. With ``max_coords`` set, that many
    coordinates are sampled uniformly across all tensors; otherwise every
    coordinate is checked. ``loss_fn`` receives a dict of perturbed copies.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = {k: np.array(v, dtype=DTYPE, copy=True) for k, v in params.items()}
    coords = [(name, idx) for name, arr in work.items()
              for idx in np.ndindex(arr.shape)]
    if max_coords is not None and max_coords < len(coords):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    def evaluate():
        value = float(loss_fn(work))
        if not np.isfinite(value):
            raise FloatingPointError("loss is not finite")
        return value

    evaluate()
    worst = 0.0
    for name, idx in coords:
        arr = work[name]
        orig = arr[idx]
        arr[idx] = orig + h
        up = evaluate()
        arr[idx] = orig - h
        down = evaluate()
        arr[idx] = orig
        numeric = (up - down) / (2.0 * h)
        analytic = float(np.asarray(analytic_grads[name])[idx])
        err = abs(analytic - numeric) / max(1.0, abs(analytic) + abs(numeric))
        worst = max(worst, err)
    return worst
