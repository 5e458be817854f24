"""Adam and gradient verification.

adam_step is pure: it returns fresh parameter tensors and a fresh state, so
a training step can be replayed exactly from a serialized state. Moments are
keyed by parameter name (node ids change every step; names do not).

grad_check compares the tape's gradient against central finite differences.
The relative-error denominator is max(1, |analytic|), so tiny gradients are
judged on absolute error and large ones on relative error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward

__all__ = ["AdamState", "adam_step", "grad_check", "finite_difference_grad"]


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict, lr: float = 1e-4, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        m = {k: np.zeros(p.shape) for k, p in params.items()}
        v = {k: np.zeros(p.shape) for k, p in params.items()}
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0, m=m, v=v)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One Adam update; returns (new_params, new_state), inputs untouched.

    params and grads are name -> Tensor with matching shapes. lr == 0 is the
    identity on parameter values (moments still advance).
    """
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params = {}
    new_m = {}
    new_v = {}
    for name, p in params.items():
        g = grads[name].values
        if g.shape != p.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for '{name}'")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params[name] = Tensor(p.values - step, requires_grad=True)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(lr=state.lr, beta1=b1, beta2=b2, eps=state.eps,
                                 t=t, m=new_m, v=new_v)


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array.

    f takes a plain float64 array and returns a float. This is the oracle
    side of every gradient check in the test suite, so it deliberately knows
    nothing about Tensors or the tape.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(x.shape)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp.reshape(x.shape))
        fm = f(xm.reshape(x.shape))
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between tape gradient and central differences.

    f maps a Tensor to a scalar Tensor and must be deterministic and
    differentiable at x. Error per coordinate is
    |analytic - numeric| / max(1, |analytic|).
    """
    leaf = Tensor(x.values, requires_grad=True)
    loss = f(leaf)
    gmap = backward(loss, params=[leaf])
    analytic = gmap[leaf.node_id].values

    def plain(vals: np.ndarray) -> float:
        return float(f(Tensor(vals)).values)

    numeric = finite_difference_grad(plain, x.values, h=h)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
