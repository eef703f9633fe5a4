"""Snapshot tensors, synthetic data generation, and the MLSD binary format.

The on-disk format is little-endian throughout: magic "MLSD", u32 version,
u64 n_params, u64 n_times, u64 state_dim, u64 n_param_dims, f64 dt, the
float64 parameter matrix (row-major), then the float64 data block in
[param][time][state] order.  No padding, no compression.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    ShapeError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ValidationError,
)

MAGIC = b"MLSD"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQQd")

# a single declared dimension past this is treated as corrupt, not large
_MAX_DIM = 1 << 48


@dataclass
class SnapshotTensor:
    """Training/test snapshots: values[param][time][state] plus parameters.

    The time grid is uniform with spacing ``dt``; parameter rows are unique
    and all values finite.
    """

    params: np.ndarray
    values: np.ndarray
    dt: float

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.params.ndim != 2:
            raise ValidationError(
                f"parameter matrix must be 2-D, got shape {self.params.shape}"
            )
        if self.values.ndim != 3:
            raise ValidationError(
                f"values must be [param][time][state], got shape {self.values.shape}"
            )
        if self.values.shape[0] != self.params.shape[0]:
            raise ValidationError(
                f"{self.values.shape[0]} trajectories but "
                f"{self.params.shape[0]} parameter rows"
            )
        if self.dt <= 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not np.isfinite(self.params).all():
            raise ValidationError("parameter matrix contains non-finite entries")
        if not np.isfinite(self.values).all():
            raise ValidationError("snapshot values contain non-finite entries")
        if self.params.shape[0]:
            uniq = np.unique(self.params, axis=0).shape[0]
            if uniq != self.params.shape[0]:
                raise ValidationError("parameter rows must be unique")
        self.dt = float(self.dt)

    @property
    def n_params(self):
        return self.values.shape[0]

    @property
    def n_times(self):
        return self.values.shape[1]

    @property
    def state_dim(self):
        return self.values.shape[2]

    def subset(self, indices):
        """New tensor restricted to the given parameter rows."""
        idx = np.asarray(indices, dtype=np.intp)
        return SnapshotTensor(self.params[idx].copy(), self.values[idx].copy(), self.dt)


@dataclass(frozen=True)
class ParamGrid:
    """Regular parameter grid: one (min, max, step) triple per dimension."""

    axes: tuple

    def __post_init__(self):
        axes = []
        for ax in self.axes:
            lo, hi, step = (float(v) for v in ax)
            if step <= 0:
                raise ValidationError(f"grid step must be positive, got {step}")
            if lo > hi:
                raise ValidationError(f"grid min {lo} exceeds max {hi}")
            n = int(round((hi - lo) / step)) + 1
            if abs(lo + (n - 1) * step - hi) > 1e-9 * max(1.0, abs(hi)):
                raise ValidationError(
                    f"step {step} does not evenly divide [{lo}, {hi}]"
                )
            axes.append((lo, hi, step))
        object.__setattr__(self, "axes", tuple(axes))

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(
            int(round((hi - lo) / step)) + 1 for lo, hi, step in self.axes
        )

    @property
    def size(self):
        n = 1
        for s in self.shape:
            n *= s
        return n

    def axis_values(self, d):
        lo, _, step = self.axes[d]
        return lo + step * np.arange(self.shape[d], dtype=np.float64)

    def points(self):
        """All grid points, row-major over dimensions (first dim slowest)."""
        grids = np.meshgrid(*(self.axis_values(d) for d in range(self.ndim)),
                            indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)


def pulse_snapshot(speed, width, nx, t):
    """One spatial snapshot of the traveling pulse at time ``t``."""
    x = np.arange(nx, dtype=np.float64) / nx
    d = x - speed * t
    d -= np.round(d)
    return np.exp(-(d * d) / (2.0 * width * width))


def generate_pulse_dataset(grid, nx, nt, dt):
    """Analytic traveling Gaussian pulse family on the periodic domain [0, 1).

    u(x, t; mu) = exp(-wrap(x - mu1 t)^2 / (2 mu2^2)) with mu1 the pulse
    speed and mu2 its width, sampled on nx uniform points and nt + 1
    uniform times.  Deterministic: same arguments give bit-identical
    tensors.
    """
    if grid.ndim != 2:
        raise ValidationError(
            f"pulse generator needs a 2-D (speed, width) grid, got {grid.ndim} dims"
        )
    if nx < 16:
        raise ValidationError(f"nx must be >= 16, got {nx}")
    if nt < 3:
        raise ValidationError(f"nt must be >= 3, got {nt}")
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    params = grid.points()
    x = np.arange(nx, dtype=np.float64) / nx
    t = dt * np.arange(nt + 1, dtype=np.float64)
    values = np.empty((params.shape[0], nt + 1, nx))
    for i, (speed, width) in enumerate(params):
        d = x[None, :] - speed * t[:, None]
        d -= np.round(d)  # nearest periodic image on [0, 1)
        values[i] = np.exp(-(d * d) / (2.0 * width * width))
    return SnapshotTensor(params, values, float(dt))


def random_indices(n_total, n_select, seed):
    """Seeded uniform draw of n_select indices without replacement, sorted."""
    if n_select > n_total:
        raise ValidationError(
            f"cannot select {n_select} from {n_total} available points"
        )
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_total, size=n_select, replace=False))


def select_training_params(grid, n_select, seed):
    """Choose training points from a grid: stratified subgrid when possible.

    When n_select is a d-th power s**d with s >= 2 and every axis length
    satisfies (len - 1) % (s - 1) == 0, an evenly spaced subgrid including
    all corner points is returned.  Otherwise falls back to a seeded
    uniform draw without replacement.  Indices are into the row-major
    flattened grid, sorted ascending.
    """
    total = grid.size
    if n_select > total:
        raise ValidationError(f"cannot select {n_select} from a grid of {total}")
    if n_select == total:
        return np.arange(total, dtype=np.intp)
    shape = grid.shape
    s = round(n_select ** (1.0 / grid.ndim))
    stratified = (
        s >= 2
        and s ** grid.ndim == n_select
        and all(n >= s and (n - 1) % (s - 1) == 0 for n in shape)
    )
    if not stratified:
        return random_indices(total, n_select, seed).astype(np.intp)
    per_axis = [
        np.arange(s, dtype=np.intp) * ((n - 1) // (s - 1)) for n in shape
    ]
    mesh = np.meshgrid(*per_axis, indexing="ij")
    flat = np.ravel_multi_index([m.reshape(-1) for m in mesh], shape)
    return np.sort(flat.astype(np.intp))


def save_snapshots(tensor, path):
    """Write a SnapshotTensor in the MLSD format; bit-exact round trip."""
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        tensor.n_params,
        tensor.n_times,
        tensor.state_dim,
        tensor.params.shape[1],
        tensor.dt,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(tensor.params, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def load_snapshots(path):
    """Read an MLSD file back into a validated SnapshotTensor."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[:4] != MAGIC:
            raise BadMagicError(f"{path}: not an MLSD snapshot file")
        raise TruncatedPayloadError(f"{path}: header truncated at {len(blob)} bytes")
    magic, version, n_mu, n_t, n_u, n_p, dt = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version} unsupported (reader handles {VERSION})"
        )
    for name, dim in (("n_params", n_mu), ("n_times", n_t),
                      ("state_dim", n_u), ("n_param_dims", n_p)):
        if dim > _MAX_DIM:
            raise DimensionOverflowError(f"{path}: {name}={dim} is implausibly large")
    n_param_vals = n_mu * n_p
    n_data_vals = n_mu * n_t * n_u
    need = _HEADER.size + 8 * (n_param_vals + n_data_vals)
    if need > (1 << 62):
        raise DimensionOverflowError(
            f"{path}: declared payload of {need} bytes overflows sane limits"
        )
    if len(blob) < need:
        raise TruncatedPayloadError(
            f"{path}: header declares {need} bytes but file has {len(blob)}"
        )
    if len(blob) > need:
        raise TruncatedPayloadError(
            f"{path}: {len(blob) - need} trailing bytes after declared payload"
        )
    off = _HEADER.size
    params = np.frombuffer(blob, dtype="<f8", count=n_param_vals, offset=off)
    params = params.reshape(n_mu, n_p).astype(np.float64)
    off += 8 * n_param_vals
    values = np.frombuffer(blob, dtype="<f8", count=n_data_vals, offset=off)
    values = values.reshape(n_mu, n_t, n_u).astype(np.float64)
    return SnapshotTensor(params, values, dt)
