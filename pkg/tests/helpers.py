"""Finite-difference gradient oracle, kept independent of the library's backprop."""

import numpy as np

FD_STEP = 1e-6


def central_diff_grad(f, x, h=FD_STEP):
    """Gradient of scalar-valued f at array x via central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros(x.size)
    for i in range(x.size):
        xp = x.reshape(-1).copy()
        xm = x.reshape(-1).copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * h)
    return grad.reshape(x.shape)


def assert_grad_close(analytic, numeric, rtol=1e-5, atol=1e-8):
    """Entrywise |analytic - numeric| <= atol + rtol * |numeric|.

    The atol floor absorbs finite-difference roundoff on entries whose true
    value is ~0; every entry of meaningful size is held to the relative bound.
    """
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def low_rank_table(n=1024, rank=3, seed=0, noise=0.01):
    """Learnable synthetic table: rank-`rank` structure in [0, 1] plus noise."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(size=(n, rank))
    mix = rng.uniform(0.2, 1.0, size=(rank, 13))
    mix /= mix.sum(axis=0, keepdims=True)  # convex combinations stay in [0, 1]
    x = z @ mix + rng.normal(scale=noise, size=(n, 13))
    return np.clip(x, 0.0, 1.0)
