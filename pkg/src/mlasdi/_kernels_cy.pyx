# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot numerical kernels.

Mirrors the contract of ``_kernels_py``: affine layers go through BLAS
dgemm, activations / Adam / stencils / RK4 are fused single-pass loops.
"""

import numpy as np

from libc.math cimport cos, exp, isfinite, sin, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_SINE = 2

cdef int C_IDENTITY = 0
cdef int C_TANH = 1
cdef int C_SINE = 2

BACKEND_NAME = "cython"


cdef void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                double* a, int lda, double* b, int ldb,
                double beta, double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def linear_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """y = x @ w.T + b via dgemm on the row-major buffers."""
    cdef Py_ssize_t bs = x.shape[0], din = x.shape[1], dout = w.shape[0]
    if w.shape[1] != din:
        raise ValueError(
            f"weight expects {w.shape[1]} inputs, batch has {din} columns"
        )
    y_arr = np.empty((bs, dout), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(bs):
            for j in range(dout):
                y[i, j] = b[j]
        if bs > 0 and dout > 0 and din > 0:
            # column-major view: Y^f = (W^f)^T X^f with W^f, X^f the
            # Fortran interpretations of the row-major buffers
            _gemm(b'T', b'N', <int>dout, <int>bs, <int>din, 1.0,
                  &w[0, 0], <int>din, &x[0, 0], <int>din,
                  1.0, &y[0, 0], <int>dout)
    return y_arr


def act_forward(int code, pre):
    """Elementwise activation; identity returns its input unchanged."""
    if code == ACT_IDENTITY:
        return pre
    out_arr = np.empty_like(pre)
    cdef double[::1] src = pre.reshape(-1)
    cdef double[::1] dst = out_arr.reshape(-1)
    cdef Py_ssize_t i, n = src.shape[0]
    with nogil:
        if code == ACT_TANH:
            for i in range(n):
                dst[i] = tanh(src[i])
        elif code == ACT_SINE:
            for i in range(n):
                dst[i] = sin(src[i])
    if code not in (ACT_TANH, ACT_SINE):
        raise ValueError(f"unknown activation code {code}")
    return out_arr


def act_backward(int code, pre, act, grad):
    """Upstream gradient through the activation, using the forward caches."""
    if code == ACT_IDENTITY:
        return grad
    out_arr = np.empty_like(grad)
    cdef double[::1] g = grad.reshape(-1)
    cdef double[::1] p = pre.reshape(-1)
    cdef double[::1] a = act.reshape(-1)
    cdef double[::1] dst = out_arr.reshape(-1)
    cdef Py_ssize_t i, n = g.shape[0]
    with nogil:
        if code == ACT_TANH:
            for i in range(n):
                dst[i] = g[i] * (1.0 - a[i] * a[i])
        elif code == ACT_SINE:
            for i in range(n):
                dst[i] = g[i] * cos(p[i])
    if code not in (ACT_TANH, ACT_SINE):
        raise ValueError(f"unknown activation code {code}")
    return out_arr


def linear_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] gy):
    """(gw, gb, gx) = (gy.T @ x, gy.sum(0), gy @ w)."""
    cdef Py_ssize_t bs = x.shape[0], din = x.shape[1], dout = w.shape[0]
    gw_arr = np.zeros((dout, din), dtype=np.float64)
    gb_arr = np.zeros(dout, dtype=np.float64)
    gx_arr = np.empty((bs, din), dtype=np.float64)
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(bs):
            for j in range(dout):
                gb[j] += gy[i, j]
        if bs > 0 and dout > 0 and din > 0:
            # gw^T (Fortran din x dout) = X^f GY^f^T
            _gemm(b'N', b'T', <int>din, <int>dout, <int>bs, 1.0,
                  &x[0, 0], <int>din, &gy[0, 0], <int>dout,
                  0.0, &gw[0, 0], <int>din)
            # gx^T (Fortran din x bs) = W^f GY^f
            _gemm(b'N', b'N', <int>din, <int>bs, <int>dout, 1.0,
                  &w[0, 0], <int>din, &gy[0, 0], <int>dout,
                  0.0, &gx[0, 0], <int>din)
    return gw_arr, gb_arr, gx_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long step, double lr, double beta1, double beta2, double eps):
    """Fused in-place Adam update on flat parameter views."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double om1 = 1.0 - beta1
    cdef double om2 = 1.0 - beta2
    with nogil:
        for i in range(n):
            m[i] = beta1 * m[i] + om1 * g[i]
            v[i] = beta2 * v[i] + om2 * (g[i] * g[i])
            p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def rk4_affine(double[::1] bvec, double[:, ::1] amat, double[::1] z0,
               double dt, long n_steps):
    """Classical RK4 rollout of dz/dt = b + A z; returns (traj, bad_step)."""
    cdef Py_ssize_t n = z0.shape[0]
    traj_arr = np.empty((n_steps + 1, n), dtype=np.float64)
    cdef double[:, ::1] traj = traj_arr
    k_arr = np.empty((5, n), dtype=np.float64)
    cdef double[:, ::1] kbuf = k_arr
    cdef Py_ssize_t i, j, r, step
    cdef double acc
    cdef long bad = -1
    with nogil:
        for j in range(n):
            traj[0, j] = z0[j]
            if not isfinite(z0[j]):
                bad = 0
        if bad < 0:
            for step in range(1, n_steps + 1):
                # k1 = f(z)
                for j in range(n):
                    acc = bvec[j]
                    for r in range(n):
                        acc += amat[j, r] * traj[step - 1, r]
                    kbuf[0, j] = acc
                # k2 = f(z + dt/2 k1)
                for j in range(n):
                    kbuf[4, j] = traj[step - 1, j] + 0.5 * dt * kbuf[0, j]
                for j in range(n):
                    acc = bvec[j]
                    for r in range(n):
                        acc += amat[j, r] * kbuf[4, r]
                    kbuf[1, j] = acc
                # k3 = f(z + dt/2 k2)
                for j in range(n):
                    kbuf[4, j] = traj[step - 1, j] + 0.5 * dt * kbuf[1, j]
                for j in range(n):
                    acc = bvec[j]
                    for r in range(n):
                        acc += amat[j, r] * kbuf[4, r]
                    kbuf[2, j] = acc
                # k4 = f(z + dt k3)
                for j in range(n):
                    kbuf[4, j] = traj[step - 1, j] + dt * kbuf[2, j]
                for j in range(n):
                    acc = bvec[j]
                    for r in range(n):
                        acc += amat[j, r] * kbuf[4, r]
                    kbuf[3, j] = acc
                for j in range(n):
                    traj[step, j] = traj[step - 1, j] + (dt / 6.0) * (
                        kbuf[0, j] + 2.0 * kbuf[1, j] + 2.0 * kbuf[2, j]
                        + kbuf[3, j]
                    )
                    if not isfinite(traj[step, j]):
                        bad = step
                if bad >= 0:
                    break
    return traj_arr, bad


def time_derivative(double[:, :, ::1] z, double dt):
    """Second-order stencils along the time axis of a (P, T, n) tensor."""
    cdef Py_ssize_t p = z.shape[0], t = z.shape[1], n = z.shape[2]
    dz_arr = np.empty((p, t, n), dtype=np.float64)
    cdef double[:, :, ::1] dz = dz_arr
    cdef double inv = 1.0 / (2.0 * dt)
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(p):
            for k in range(n):
                dz[i, 0, k] = (-3.0 * z[i, 0, k] + 4.0 * z[i, 1, k]
                               - z[i, 2, k]) * inv
                dz[i, t - 1, k] = (3.0 * z[i, t - 1, k] - 4.0 * z[i, t - 2, k]
                                   + z[i, t - 3, k]) * inv
            for j in range(1, t - 1):
                for k in range(n):
                    dz[i, j, k] = (z[i, j + 1, k] - z[i, j - 1, k]) * inv
    return dz_arr


def time_derivative_adjoint(double[:, :, ::1] g, double dt):
    """Adjoint of :func:`time_derivative` on a (P, T, n) tensor."""
    cdef Py_ssize_t p = g.shape[0], t = g.shape[1], n = g.shape[2]
    out_arr = np.zeros((p, t, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double inv = 1.0 / (2.0 * dt)
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(p):
            for j in range(1, t - 1):
                for k in range(n):
                    out[i, j - 1, k] -= g[i, j, k]
                    out[i, j + 1, k] += g[i, j, k]
            for k in range(n):
                out[i, 0, k] += -3.0 * g[i, 0, k]
                out[i, 1, k] += 4.0 * g[i, 0, k]
                out[i, 2, k] += -1.0 * g[i, 0, k]
                out[i, t - 1, k] += 3.0 * g[i, t - 1, k]
                out[i, t - 2, k] += -4.0 * g[i, t - 1, k]
                out[i, t - 3, k] += 1.0 * g[i, t - 1, k]
            for j in range(t):
                for k in range(n):
                    out[i, j, k] *= inv
    return out_arr
