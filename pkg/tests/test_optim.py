"""Update-rule values against hand-computed oracles; clipping postconditions."""

import numpy as np
import pytest

from adnet.optim import clip_weights, make_optimizer, optimizer_step
from adnet.tensor import Tape, Tensor, backward, tensor_sum


def quadratic_grads(w: Tensor) -> dict:
    with Tape() as tape:
        loss = w * w
    return backward(tape, loss)


def test_sgd_quadratic_single_step():
    w = Tensor(np.array(1.0), requires_grad=True, dtype=np.float64)
    opt = make_optimizer([w], kind="sgd", lr=0.1)
    optimizer_step(opt, [w], quadratic_grads(w))
    assert abs(float(w.data) - 0.8) < 1e-12  # w - lr * 2w
    assert opt.step == 1


def test_zero_lr_leaves_params_unchanged():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, dtype=np.float64)
    before = w.data.copy()
    for kind in ("sgd", "adam"):
        opt = make_optimizer([w], kind=kind, lr=0.0)
        with Tape() as tape:
            loss = tensor_sum(w * w)
        optimizer_step(opt, [w], backward(tape, loss))
        np.testing.assert_array_equal(w.data, before)


def test_sgd_determinism_bit_identical():
    def run():
        w = Tensor(np.array([0.5, -0.25]), requires_grad=True, dtype=np.float64)
        opt = make_optimizer([w], kind="sgd", lr=0.05)
        for _ in range(10):
            with Tape() as tape:
                loss = tensor_sum(w * w)
            optimizer_step(opt, [w], backward(tape, loss))
        return w.data

    np.testing.assert_array_equal(run(), run())


def test_adam_matches_reference_recurrence():
    """Three steps of the adaptive rule against an independent recurrence."""
    rng = np.random.default_rng(3)
    w0 = rng.standard_normal(4)
    fixed_grads = [rng.standard_normal(4) for _ in range(3)]

    w = Tensor(w0.copy(), requires_grad=True, dtype=np.float64)
    opt = make_optimizer([w], kind="adam", lr=1e-3)
    for g in fixed_grads:
        optimizer_step(opt, [w], {w: g})

    # reference implementation written from the published update rule
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    ref = w0.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    for t, g in enumerate(fixed_grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        ref -= lr * mhat / (np.sqrt(vhat) + eps)

    np.testing.assert_allclose(w.data, ref, rtol=1e-12)
    assert opt.step == 3


def test_adam_first_step_size_is_lr():
    # bias correction makes the first step equal lr * sign(g) up to eps
    w = Tensor(np.array([1.0, 1.0]), requires_grad=True, dtype=np.float64)
    opt = make_optimizer([w], kind="adam", lr=1e-3)
    optimizer_step(opt, [w], {w: np.array([10.0, -0.01])})
    np.testing.assert_allclose(w.data, [1.0 - 1e-3, 1.0 + 1e-3], rtol=1e-5)


def test_missing_gradient_is_an_error():
    w = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    u = Tensor(np.array([2.0]), requires_grad=True, dtype=np.float64)
    opt = make_optimizer([w, u], kind="sgd", lr=0.1)
    with pytest.raises(KeyError, match="missing gradient"):
        optimizer_step(opt, [w, u], {w: np.array([1.0])})


def test_gradient_shape_mismatch_is_an_error():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
    opt = make_optimizer([w], kind="sgd", lr=0.1)
    with pytest.raises(ValueError, match="shape"):
        optimizer_step(opt, [w], {w: np.array([1.0])})


def test_clip_values():
    p = Tensor(np.array([-5.0, 0.05, 5.0]), dtype=np.float64)
    clip_weights([p], 0.1)
    np.testing.assert_array_equal(p.data, [-0.1, 0.05, 0.1])


def test_clip_noop_when_within_bound():
    p = Tensor(np.array([-0.05, 0.0, 0.09]), dtype=np.float64)
    before = p.data.copy()
    clip_weights([p], 0.1)
    np.testing.assert_array_equal(p.data, before)


def test_clip_idempotent_and_preserves_shape_order():
    rng = np.random.default_rng(11)
    params = [Tensor(rng.standard_normal((3, 2)), dtype=np.float64),
              Tensor(rng.standard_normal(5), dtype=np.float64)]
    shapes = [p.shape for p in params]
    out = clip_weights(params, 0.1)
    once = [p.data.copy() for p in out]
    out2 = clip_weights(params, 0.1)
    assert [p.shape for p in out2] == shapes
    assert out2 is params or out2 == params
    for a, b in zip(once, out2):
        np.testing.assert_array_equal(a, b.data)
    assert all(np.abs(p.data).max() <= 0.1 for p in params)


def test_clip_rejects_non_positive_bound():
    p = Tensor(np.array([1.0]))
    for bad in (0.0, -0.1):
        with pytest.raises(ValueError, match="positive"):
            clip_weights([p], bad)
