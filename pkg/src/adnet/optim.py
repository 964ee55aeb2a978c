"""Parameter update rules: plain SGD, an adaptive-moment rule, weight clipping.

Optimizer state is positional: moment buffers line up with the parameter list
the optimizer was built over, so the same list (same order) must be passed to
every step. Updates mutate parameter data in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    kind: str  # "sgd" | "adam"
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    n_params: int = 0


def make_optimizer(params: list[Tensor], kind: str = "adam", lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer kind '{kind}'")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    state = OptimizerState(kind=kind, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                           n_params=len(params))
    if kind == "adam":
        state.m = [np.zeros(p.shape, dtype=p.dtype) for p in params]
        state.v = [np.zeros(p.shape, dtype=p.dtype) for p in params]
    return state


def optimizer_step(state: OptimizerState, params: list[Tensor], grads: dict) -> list[Tensor]:
    """One update over ``params`` using gradients from a backward pass.

    grads maps Tensor -> ndarray (the map returned by tensor.backward).
    Every parameter must have a gradient; a missing one is an error rather
    than a silent no-op.
    """
    if len(params) != state.n_params:
        raise ValueError(f"optimizer built over {state.n_params} params, got {len(params)}")
    gs = []
    for i, p in enumerate(params):
        g = grads.get(p)
        if g is None:
            raise KeyError(f"missing gradient for parameter {i} (shape {p.shape})")
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        gs.append(np.asarray(g, dtype=p.dtype))

    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, gs):
            p.data -= state.lr * g
        return params

    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, gs)):
        m = state.m[i]
        v = state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def clip_weights(params: list[Tensor], c: float) -> list[Tensor]:
    """Clamp every element of every parameter into [-c, c], in place."""
    if c <= 0:
        raise ValueError(f"clip bound must be positive, got {c}")
    for p in params:
        np.clip(p.data, -c, c, out=p.data)
    return params
