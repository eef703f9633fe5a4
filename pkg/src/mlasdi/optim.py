"""Adam optimizer over named parameter blocks.

Blocks are float64 C-contiguous arrays updated in place; moment arrays
shadow every block.  Step counts are 1-based after the first update.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DivergenceError, ShapeError


@dataclass
class AdamState:
    """Optimizer state: per-block first/second moments plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    names: list = field(default_factory=list)
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def create(cls, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        """Build a fresh state for ``named_params``, a list of (name, array)."""
        names = [name for name, _ in named_params]
        first = [np.zeros_like(p) for _, p in named_params]
        second = [np.zeros_like(p) for _, p in named_params]
        return cls(lr, beta1, beta2, eps, 0, names, first, second)


def adam_step(params, grads, state):
    """One Adam update with bias correction, in place on ``params``.

    Raises DivergenceError naming the offending block if any gradient entry
    is non-finite; no block is modified in that case.
    """
    if len(params) != len(state.names) or len(grads) != len(state.names):
        raise ShapeError(
            f"expected {len(state.names)} parameter blocks, got "
            f"{len(params)} params / {len(grads)} grads"
        )
    for name, p, g, m in zip(state.names, params, grads, state.first_moment):
        if p.shape != m.shape:
            raise ShapeError(
                f"block '{name}' has shape {p.shape}, state expects {m.shape}"
            )
        if g.shape != p.shape:
            raise ShapeError(
                f"gradient for block '{name}' has shape {g.shape}, expected {p.shape}"
            )
        if not np.isfinite(g).all():
            raise DivergenceError(
                f"non-finite gradient in parameter block '{name}' at step "
                f"{state.step + 1}"
            )
    state.step += 1
    k = backend.kernels
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        k.adam_update(
            p.reshape(-1),
            np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            m.reshape(-1),
            v.reshape(-1),
            state.step,
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
        )
    return params, state
