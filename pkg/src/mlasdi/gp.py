"""Gaussian-process interpolation of latent ODE coefficients.

One Matern (nu = 3/2) GP is fitted per scalar coefficient over the training
parameter set.  Targets are centered; the predictive mean therefore reverts
to the per-coefficient target mean far from the data.  Hyperparameters are
found by a seeded multi-start coordinate search with log-space grid
refinement, which keeps fits deterministic and independent of fit order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ShapeError, ValidationError

log = logging.getLogger("mlasdi.gp")

_SQRT3 = math.sqrt(3.0)
_MAX_JITTER_ESCALATIONS = 5


def matern_kernel(x1, x2, sigma2, lengthscale):
    """Matern nu=3/2 covariance of two parameter vectors.

    k(r) = sigma2 * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l) with r the
    Euclidean distance.
    """
    if lengthscale <= 0:
        raise ValidationError(f"lengthscale must be positive, got {lengthscale}")
    if sigma2 < 0:
        raise ValidationError(f"signal variance must be >= 0, got {sigma2}")
    r = float(np.linalg.norm(np.asarray(x1, float) - np.asarray(x2, float)))
    s = _SQRT3 * r / lengthscale
    return sigma2 * (1.0 + s) * math.exp(-s)


def _pairwise_distances(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _kernel_matrix(a, b, sigma2, lengthscale):
    if lengthscale <= 0:
        raise ValidationError(f"lengthscale must be positive, got {lengthscale}")
    s = (_SQRT3 / lengthscale) * _pairwise_distances(a, b)
    return sigma2 * (1.0 + s) * np.exp(-s)


def _factor(kmat, jitter):
    """Cholesky of kmat + jitter I with x10 escalation, at most 5 times."""
    j = float(jitter)
    for _ in range(_MAX_JITTER_ESCALATIONS + 1):
        try:
            lmat = np.linalg.cholesky(kmat + j * np.eye(kmat.shape[0]))
            return lmat, j
        except np.linalg.LinAlgError:
            j = j * 10.0 if j > 0 else 1e-12
    raise ConditioningError(
        f"kernel matrix is not positive definite even with jitter {j:.3e}"
    )


class GpCoefficient:
    """A fitted zero-mean-on-residuals GP for one scalar coefficient."""

    def __init__(self, inputs, targets, sigma2, lengthscale, jitter):
        inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        targets = np.ascontiguousarray(targets, dtype=np.float64)
        if inputs.ndim != 2:
            raise ShapeError(f"inputs must be (n, d), got shape {inputs.shape}")
        if targets.shape != (inputs.shape[0],):
            raise ShapeError(
                f"targets shape {targets.shape} does not match {inputs.shape[0]} inputs"
            )
        self.inputs = inputs
        self.targets = targets
        self.sigma2 = float(sigma2)
        self.lengthscale = float(lengthscale)
        self.y_mean = float(targets.mean())
        resid = targets - self.y_mean
        kmat = _kernel_matrix(inputs, inputs, self.sigma2, self.lengthscale)
        self._chol, self.jitter = _factor(kmat, jitter)
        self._alpha = _cho_solve(self._chol, resid)
        self._resid = resid

    def log_marginal_likelihood(self):
        n = self.targets.shape[0]
        return float(
            -0.5 * self._resid @ self._alpha
            - np.log(np.diagonal(self._chol)).sum()
            - 0.5 * n * math.log(2.0 * math.pi)
        )

    def predict(self, query):
        """Posterior mean and std at query points (m, d) -> ((m,), (m,)).

        Std is clamped at zero when numerics produce a negative variance.
        """
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        kstar = _kernel_matrix(query, self.inputs, self.sigma2, self.lengthscale)
        mean = self.y_mean + kstar @ self._alpha
        half = np.linalg.solve(self._chol, kstar.T)
        var = self.sigma2 - (half * half).sum(axis=0)
        std = np.sqrt(np.maximum(var, 0.0))
        return mean, std


def _cho_solve(lmat, rhs):
    tmp = np.linalg.solve(lmat, rhs)
    return np.linalg.solve(lmat.T, tmp)


def _lml(inputs, resid, sigma2, lengthscale, jitter):
    """Log marginal likelihood of centered targets, or -inf if unfactorable."""
    kmat = _kernel_matrix(inputs, inputs, sigma2, lengthscale)
    try:
        lmat = np.linalg.cholesky(kmat + jitter * np.eye(kmat.shape[0]))
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = _cho_solve(lmat, resid)
    n = resid.shape[0]
    val = (
        -0.5 * resid @ alpha
        - np.log(np.diagonal(lmat)).sum()
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    return float(val) if np.isfinite(val) else -np.inf


def _coordinate_search(inputs, resid, jitter, rng):
    """Seeded multi-start coordinate search, 3 rounds of log-grid refinement."""
    dists = _pairwise_distances(inputs, inputs)
    off = dists[dists > 0]
    d_lo = float(off.min())
    d_hi = float(off.max())
    v = float(resid.var())

    ell_lo, ell_hi = 0.05 * d_lo, 32.0 * d_hi
    s2_lo, s2_hi = 1e-6 * v, 1e4 * v

    def clip_ell(x):
        return min(max(x, ell_lo), ell_hi)

    def clip_s2(x):
        return min(max(x, s2_lo), s2_hi)

    starts = [(math.sqrt(v), math.sqrt(d_lo * d_hi))]
    for _ in range(4):
        s2 = math.exp(rng.uniform(math.log(s2_lo), math.log(s2_hi)))
        ell = math.exp(rng.uniform(math.log(ell_lo), math.log(ell_hi)))
        starts.append((s2, ell))

    best = (-np.inf, None, None)
    for s2, ell in starts:
        span_ell = math.sqrt(ell_hi / ell_lo)
        span_s2 = math.sqrt(s2_hi / s2_lo)
        score = _lml(inputs, resid, s2, ell, jitter)
        for _ in range(3):
            # lengthscale sweep
            grid = np.exp(
                np.linspace(math.log(ell / span_ell), math.log(ell * span_ell), 13)
            )
            for cand in grid:
                cand = clip_ell(float(cand))
                val = _lml(inputs, resid, s2, cand, jitter)
                if val > score:
                    score, ell = val, cand
            # signal-variance sweep
            grid = np.exp(
                np.linspace(math.log(s2 / span_s2), math.log(s2 * span_s2), 13)
            )
            for cand in grid:
                cand = clip_s2(float(cand))
                val = _lml(inputs, resid, cand, ell, jitter)
                if val > score:
                    score, s2 = val, cand
            span_ell = span_ell ** 0.35
            span_s2 = span_s2 ** 0.35
        if score > best[0]:
            best = (score, s2, ell)
    if best[1] is None:
        raise ConditioningError("hyperparameter search found no factorable kernel")
    return best[1], best[2]


def fit_coefficient(inputs, targets, seed=0):
    """Fit one coefficient GP by maximizing log marginal likelihood.

    Requires at least 2 distinct training inputs; exact duplicate rows make
    the noiseless kernel matrix singular and are rejected up front.  Jitter
    is 1e-8 * var(targets) + 1e-12.
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] < 2:
        raise ValidationError(
            f"need at least 2 training inputs of shape (n, d), got {inputs.shape}"
        )
    if np.unique(inputs, axis=0).shape[0] != inputs.shape[0]:
        raise ConditioningError(
            "duplicate training inputs make the kernel matrix singular"
        )
    jitter = 1e-8 * float(targets.var()) + 1e-12
    resid = targets - targets.mean()
    if not resid.any():
        # constant targets: the centered GP is exact for any hyperparameters
        dmax = float(_pairwise_distances(inputs, inputs).max())
        return GpCoefficient(inputs, targets, 1.0, max(dmax, 1.0), jitter)
    rng = np.random.default_rng(seed)
    sigma2, ell = _coordinate_search(inputs, resid, jitter, rng)
    return GpCoefficient(inputs, targets, sigma2, ell, jitter)


@dataclass
class CoefficientGps:
    """One GP per scalar entry of the (n_latent + 1, n_latent) coefficient block."""

    inputs: np.ndarray
    latent_dim: int
    gps: list

    @classmethod
    def fit(cls, inputs, xi, seed=0, threads=1):
        """Fit all (n+1) * n coefficient GPs over the training parameter set.

        ``xi`` has shape (n_params, n+1, n).  Fits are independent; with
        threads > 1 they run in a thread pool, and results never depend on
        fit order (each coefficient gets its own seeded search stream).
        """
        inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        if xi.ndim != 3 or xi.shape[1] != xi.shape[2] + 1:
            raise ShapeError(f"coefficient tensor must be (p, n+1, n), got {xi.shape}")
        if inputs.shape[0] != xi.shape[0]:
            raise ShapeError(
                f"{inputs.shape[0]} parameter rows but {xi.shape[0]} coefficient blocks"
            )
        n = xi.shape[2]
        flat_targets = [
            (r, c, xi[:, r, c]) for r in range(n + 1) for c in range(n)
        ]

        def fit_one(item):
            r, c, targets = item
            return fit_coefficient(inputs, targets, seed=(seed, 101, r * n + c))

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                gps = list(pool.map(fit_one, flat_targets))
        else:
            gps = [fit_one(item) for item in flat_targets]
        log.debug("fitted %d coefficient GPs", len(gps))
        return cls(inputs, n, gps)

    def _check_fitted(self):
        if not self.gps:
            raise ValidationError("coefficient GPs have not been fitted")
        want = (self.latent_dim + 1) * self.latent_dim
        if len(self.gps) != want:
            raise ValidationError(
                f"expected {want} coefficient GPs, have {len(self.gps)}"
            )

    def predict_xi(self, mu):
        """Predictive mean and std tensors, each (n+1, n), at one parameter."""
        self._check_fitted()
        mu = np.asarray(mu, dtype=np.float64).reshape(1, -1)
        if mu.shape[1] != self.inputs.shape[1]:
            raise ShapeError(
                f"query parameter has {mu.shape[1]} components, training inputs "
                f"have {self.inputs.shape[1]}"
            )
        n = self.latent_dim
        mean = np.empty((n + 1, n))
        std = np.empty((n + 1, n))
        for idx, gp in enumerate(self.gps):
            r, c = divmod(idx, n)
            m, s = gp.predict(mu)
            mean[r, c] = m[0]
            std[r, c] = s[0]
        return mean, std

    def interpolate(self, mu):
        """Assembled (b, A) predictive means plus their std tensors at ``mu``."""
        mean, std = self.predict_xi(mu)
        return mean[0].copy(), mean[1:].T.copy(), std[0].copy(), std[1:].T.copy()
