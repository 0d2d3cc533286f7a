"""Shared test helpers: central-difference gradient checking."""

import numpy as np
import pytest

from dscshadow.tensor import Graph, backward

FD_STEP = 1e-5
GRAD_RTOL = 1e-3


def numeric_grad(f, tensors, h=FD_STEP):
    """Central differences of the scalar f() w.r.t. each tensor's entries."""
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(t.data.shape))
    return grads


def assert_grads_close(analytic, numeric, rtol=GRAD_RTOL, floor=1e-3):
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    worst = float((diff / denom).max())
    assert worst < rtol, f"worst relative gradient error {worst:.3e} >= {rtol}"


def gradcheck(build, wrt):
    """Compare tape gradients of the scalar build() against central differences.

    build() must reconstruct the computation from the current .data of the
    checked tensors on every call.
    """
    with Graph() as g:
        loss = build()
    backward(g, loss)
    analytic = []
    for t in wrt:
        assert t.grad is not None, f"no gradient reached {t.name or t}"
        analytic.append(t.grad.copy())
        t.zero_grad()
    numeric = numeric_grad(lambda: build().item(), wrt)
    for a, n in zip(analytic, numeric):
        assert_grads_close(a, n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
