"""Latent linear ODE machinery.

The latent model is dz/dt = b + A z per training parameter.  Coefficients
are stacked as a tensor of shape (n_params, n_latent + 1, n_latent): row 0
holds b, rows 1.. hold A column-wise, so that the candidate library
(1, z^T) times the coefficient block reproduces b + A z row-wise.
"""

import numpy as np

from . import backend
from .errors import DivergenceError, ShapeError, ValidationError


def sindy_library(z_snapshots):
    """Candidate library (constant + linear): prepend a ones column.

    Accepts (T, n) or (P, T, n); returns the same leading shape with a
    trailing dimension n + 1 whose column 0 is all ones.
    """
    z = np.asarray(z_snapshots, dtype=np.float64)
    ones = np.ones(z.shape[:-1] + (1,), dtype=np.float64)
    return np.concatenate([ones, z], axis=-1)


def xi_to_ba(xi_single):
    """Split one (n+1, n) coefficient block into (b, A) with dz/dt = b + A z."""
    xi = np.asarray(xi_single, dtype=np.float64)
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1] + 1:
        raise ShapeError(f"coefficient block must be (n+1, n), got {xi.shape}")
    return xi[0].copy(), xi[1:].T.copy()


def ba_to_xi(bvec, amat):
    """Inverse of :func:`xi_to_ba`."""
    b = np.asarray(bvec, dtype=np.float64)
    a = np.asarray(amat, dtype=np.float64)
    n = b.shape[0]
    if a.shape != (n, n):
        raise ShapeError(f"A must be ({n}, {n}), got {a.shape}")
    return np.concatenate([b[None, :], a.T], axis=0)


def _as_batched(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        return z[None], True
    if z.ndim == 3:
        return z, False
    raise ShapeError(f"latent tensor must be 2-D or 3-D, got shape {z.shape}")


def estimate_derivative(z, dt):
    """Second-order finite-difference time derivative of latent trajectories.

    ``z`` is (T, n) or (P, T, n) sampled at uniform spacing ``dt``.  Central
    differences at interior times; one-sided (-3, 4, -1)/(2 dt) stencils,
    mirrored, at the two boundary times.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    zb, squeeze = _as_batched(z)
    if zb.shape[1] < 3:
        raise ValidationError(
            f"derivative stencil needs at least 3 times, got {zb.shape[1]}"
        )
    dz = backend.kernels.time_derivative(np.ascontiguousarray(zb), float(dt))
    return dz[0] if squeeze else dz


def di_residual_loss(z, xi, zdot):
    """Dynamics mismatch sum of squares for a supplied derivative tensor."""
    zb, _ = _as_batched(z)
    db, _ = _as_batched(zdot)
    xib = np.asarray(xi, dtype=np.float64)
    if xib.ndim == 2:
        xib = xib[None]
    r = db - sindy_library(zb) @ xib
    return float((r * r).sum())


def di_loss(z, xi, dt):
    """Dynamics-identification loss and its gradients.

    Returns (loss, grad_z, grad_xi) where loss sums squared mismatch between
    the stencil-estimated derivative and library @ xi over all parameters,
    times and latent coordinates.  grad_z includes both the flow through the
    library and the flow through the derivative stencils.
    """
    zb, squeeze = _as_batched(z)
    xib = np.asarray(xi, dtype=np.float64)
    if xib.ndim == 2:
        xib = xib[None]
    p, t, n = zb.shape
    if xib.shape != (p, n + 1, n):
        raise ShapeError(
            f"coefficients must have shape ({p}, {n + 1}, {n}) for latent shape "
            f"{zb.shape}, got {xib.shape}"
        )
    zb = np.ascontiguousarray(zb)
    dz = backend.kernels.time_derivative(zb, float(dt))
    theta = sindy_library(zb)
    r = dz - theta @ xib
    loss = float((r * r).sum())
    two_r = 2.0 * r
    # d loss / d xi = -Theta^T (2 r), batched over parameters
    grad_xi = -np.matmul(theta.transpose(0, 2, 1), two_r)
    # d loss / d z: stencil adjoint minus the linear library term
    amat_t = xib[:, 1:, :]  # (p, n, n), equals A^T per parameter
    grad_z = backend.kernels.time_derivative_adjoint(
        np.ascontiguousarray(two_r), float(dt)
    ) - np.matmul(two_r, amat_t.transpose(0, 2, 1))
    if squeeze:
        return loss, grad_z[0], grad_xi[0]
    return loss, grad_z, grad_xi


def rk4_rollout(bvec, amat, z0, dt, n_steps):
    """Classical 4-stage Runge-Kutta rollout of dz/dt = b + A z.

    Returns an (n_steps + 1, n) trajectory with row 0 equal to ``z0``.
    Raises DivergenceError with the step index if the state leaves the
    finite range.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    b = np.ascontiguousarray(bvec, dtype=np.float64)
    a = np.ascontiguousarray(amat, dtype=np.float64)
    z = np.ascontiguousarray(z0, dtype=np.float64)
    n = z.shape[0]
    if b.shape != (n,) or a.shape != (n, n):
        raise ShapeError(
            f"coefficients b {b.shape} / A {a.shape} do not match state dim {n}"
        )
    traj, bad = backend.kernels.rk4_affine(b, a, z, float(dt), int(n_steps))
    if bad >= 0:
        raise DivergenceError(f"non-finite latent state at rollout step {bad}")
    return traj
