"""Deterministic numeric kernels: normalization, cosine, seeded RNG, momentum SGD.

Storage is float32 throughout the package; reductions (dot products, means)
accumulate in float64 to bound drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVector, ShapeMismatch

# Vectors with smaller L2 norm are rejected rather than renormalized: a zero
# embedding indicates upstream corruption.
EPS_NORM = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(seed))


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||_2 as float32.

    Raises DegenerateVector when ||v||_2 <= EPS_NORM.
    """
    v64 = np.asarray(v, dtype=np.float64)
    norm = float(np.sqrt(np.dot(v64, v64)))
    if norm <= EPS_NORM:
        raise DegenerateVector(f"vector norm {norm:.3e} <= {EPS_NORM:.0e}")
    return (v64 / norm).astype(np.float32)


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise l2_normalize of a matrix, rejecting any degenerate row."""
    m64 = np.asarray(m, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m64, m64))
    if np.any(norms <= EPS_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateVector(f"row {bad} has norm {norms[bad]:.3e}")
    return (m64 / norms[:, None]).astype(np.float32)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    u64 = np.asarray(u, dtype=np.float64)
    v64 = np.asarray(v, dtype=np.float64)
    if u64.shape != v64.shape:
        raise ShapeMismatch(f"{u64.shape} vs {v64.shape}")
    return float(np.clip(np.dot(u64, v64), -1.0, 1.0))


@dataclass
class SgdState:
    """Momentum SGD with L2-penalty-style weight decay (g <- g + lambda*p)."""

    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        # lr = 0 is admitted so a zero-lr run degenerates to the identity.
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


def sgd_step(params: dict, grads: dict, state: SgdState) -> dict:
    """One SGD step over a dict of named parameter arrays.

    g <- g + lambda*p; m <- mu*m + g; p <- p - lr*m.  Returns new float32
    parameter arrays; momentum buffers live in state.velocity.
    """
    out = {}
    for name, p in params.items():
        if name not in grads:
            raise ShapeMismatch(f"missing gradient for {name!r}")
        g = np.asarray(grads[name], dtype=np.float32)
        p = np.asarray(p, dtype=np.float32)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if state.weight_decay:
            g = g + np.float32(state.weight_decay) * p
        m = state.velocity.get(name)
        if m is None:
            m = np.zeros_like(p)
        m = np.float32(state.momentum) * m + g
        state.velocity[name] = m
        out[name] = p - np.float32(state.lr) * m
    return out
