"""Pure numpy implementation of the hot numerical kernels.

This module and ``_kernels_cy`` expose the same contract; ``backend``
selects one at import time.  All arrays are C-contiguous float64.

Activation codes: 0 = identity, 1 = tanh, 2 = sine.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_SINE = 2

BACKEND_NAME = "numpy"


def linear_forward(x, w, b):
    """Affine map ``x @ w.T + b`` for a batch of rows.

    x: (B, d_in), w: (d_out, d_in), b: (d_out,) -> (B, d_out)
    """
    return x @ w.T + b


def act_forward(code, pre):
    """Elementwise activation of pre-activations. Identity returns its input."""
    if code == ACT_IDENTITY:
        return pre
    if code == ACT_TANH:
        return np.tanh(pre)
    if code == ACT_SINE:
        return np.sin(pre)
    raise ValueError(f"unknown activation code {code}")


def act_backward(code, pre, act, grad):
    """Chain an upstream gradient through the activation.

    ``pre`` and ``act`` are the cached pre/post activation arrays from the
    forward pass; tanh uses ``act`` (1 - act^2), sine uses ``pre`` (cos).
    """
    if code == ACT_IDENTITY:
        return grad
    if code == ACT_TANH:
        return grad * (1.0 - act * act)
    if code == ACT_SINE:
        return grad * np.cos(pre)
    raise ValueError(f"unknown activation code {code}")


def linear_backward(x, w, gy):
    """Gradients of ``y = x @ w.T + b`` given upstream ``gy``.

    Returns (gw, gb, gx) with gw = gy.T @ x, gb = gy.sum(0), gx = gy @ w.
    """
    gw = gy.T @ x
    gb = gy.sum(axis=0)
    gx = gy @ w
    return gw, gb, gx


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    """One fused Adam update, in place on flat views p, m, v.

    ``step`` is the 1-based step count after incrementing.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    denom = np.sqrt(v / c2)
    denom += eps
    p -= lr * (m / c1) / denom


def rk4_affine(bvec, amat, z0, dt, n_steps):
    """Classical RK4 rollout of the affine field f(z) = bvec + amat @ z.

    Returns (traj, bad_step): traj has shape (n_steps + 1, n) with row 0
    equal to z0; bad_step is the first row index holding a non-finite
    state, or -1 if the whole trajectory is finite.  Rows past a bad step
    are left unspecified.
    """
    n = z0.shape[0]
    traj = np.empty((n_steps + 1, n), dtype=np.float64)
    traj[0] = z0
    if not np.isfinite(traj[0]).all():
        return traj, 0
    z = traj[0]
    for i in range(1, n_steps + 1):
        k1 = bvec + amat @ z
        k2 = bvec + amat @ (z + 0.5 * dt * k1)
        k3 = bvec + amat @ (z + 0.5 * dt * k2)
        k4 = bvec + amat @ (z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        traj[i] = z
        if not np.isfinite(z).all():
            return traj, i
    return traj, -1


def time_derivative(z, dt):
    """Second-order time derivative of a (P, T, n) tensor, uniform step dt.

    Central differences at interior times, one-sided (-3, 4, -1)/(2 dt)
    stencils (mirrored) at the two boundaries.  Requires T >= 3.
    """
    dz = np.empty_like(z)
    inv = 1.0 / (2.0 * dt)
    dz[:, 1:-1] = (z[:, 2:] - z[:, :-2]) * inv
    dz[:, 0] = (-3.0 * z[:, 0] + 4.0 * z[:, 1] - z[:, 2]) * inv
    dz[:, -1] = (3.0 * z[:, -1] - 4.0 * z[:, -2] + z[:, -3]) * inv
    return dz


def time_derivative_adjoint(g, dt):
    """Adjoint of :func:`time_derivative` applied to a (P, T, n) tensor.

    Satisfies <D z, g> == <z, D^T g> for all z, g of matching shape.
    """
    out = np.zeros_like(g)
    # interior rows i: -1 at column i-1, +1 at column i+1
    out[:, :-2] -= g[:, 1:-1]
    out[:, 2:] += g[:, 1:-1]
    # boundary rows
    out[:, 0] += -3.0 * g[:, 0]
    out[:, 1] += 4.0 * g[:, 0]
    out[:, 2] += -1.0 * g[:, 0]
    out[:, -1] += 3.0 * g[:, -1]
    out[:, -2] += -4.0 * g[:, -1]
    out[:, -3] += 1.0 * g[:, -1]
    out *= 1.0 / (2.0 * dt)
    return out
