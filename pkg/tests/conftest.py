"""Shared finite-difference oracle and small helpers.

The oracle is deliberately independent of the tape machinery: it re-evaluates
the forward function at perturbed inputs and differences the results, so any
agreement with backward() is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np

from adnet.tensor import Tape, Tensor, backward


def finite_difference_grad(fn, arrays: list[np.ndarray], wrt: int, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar fn(*arrays) w.r.t. arrays[wrt].

    All arrays must be float64; fn must be a pure function returning a python
    float or 0-d array.
    """
    x = arrays[wrt]
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(fn(*arrays))
        flat[i] = orig - eps
        f_minus = float(fn(*arrays))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def analytic_grads(build_loss, arrays: list[np.ndarray]) -> list[np.ndarray]:
    """Tape gradients of build_loss(tensors) w.r.t. each input array."""
    tensors = [Tensor(a, requires_grad=True, dtype=a.dtype) for a in arrays]
    with Tape() as tape:
        loss = build_loss(*tensors)
    grads = backward(tape, loss)
    return [grads.get(t, np.zeros(t.shape, dtype=t.dtype)) for t in tensors]


def rel_err(a: np.ndarray, n: np.ndarray) -> float:
    """Vector-level relative error between analytic a and numeric n."""
    num = float(np.max(np.abs(a - n))) if a.size else 0.0
    den = max(float(np.max(np.abs(n))) if n.size else 0.0, 1e-8)
    return num / den


def check_gradients(build_loss, arrays: list[np.ndarray], tol: float = 1e-6, eps: float = 1e-5):
    """Assert analytic vs finite-difference agreement for every input."""
    analytic = analytic_grads(build_loss, arrays)

    def scalar_fn(*arrs):
        tensors = [Tensor(a, dtype=a.dtype) for a in arrs]
        return float(build_loss(*tensors).data)

    for i in range(len(arrays)):
        numeric = finite_difference_grad(scalar_fn, [a.copy() for a in arrays], i, eps=eps)
        err = rel_err(analytic[i], numeric)
        assert err < tol, f"gradient mismatch for input {i}: rel err {err:.3g}"
