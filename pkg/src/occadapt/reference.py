"""Frozen reference benchmark: fixed-seed synthetic specs and training
protocols used by the acceptance tests and the experiment scripts.

The multi-class benchmark places 16 inlier classes on the 64-sphere with a
heavy-tailed radial profile and puts outliers midway between random pairs of
class centers ("between" mode), the near-distribution regime where cluster
adaptation helps and center collapse hurts.  The single-class benchmark is
one broad cluster with an overlapping outlier cluster.

Everything here is deterministic: specs carry fixed seeds and the training
configs use a fixed shuffle seed, so repeated runs reproduce bit-identical
numbers on the same platform.
"""

from __future__ import annotations

from .adapt import TrainConfig
from .features import SyntheticSpec

# Fixed epoch budget for the multi-class protocol.  The gated objective
# keeps improving AUROC for roughly this long on the reference geometry and
# declines slowly afterwards, so comparisons across beta values are made at
# this common budget.
MULTICLASS_EPOCHS = 160

# Longer fixed budget used when recording epoch-wise AUROC traces, so the
# post-peak behavior of each objective is visible.
TRACE_EPOCHS = 200


def multiclass_spec() -> SyntheticSpec:
    """16 inlier classes in d=64 with between-cluster outliers."""
    return SyntheticSpec(
        d=64, m=16, n_per_class=64, noise_sigma=0.09,
        o=4, n_per_outlier_class=64, min_center_cosine_gap=0.5,
        radial_spread=0.6, outlier_mode="between", seed=42)


def singleclass_spec() -> SyntheticSpec:
    """One broad inlier cluster with an overlapping outlier cluster."""
    return SyntheticSpec(
        d=64, m=1, n_per_class=256, noise_sigma=0.25,
        o=1, n_per_outlier_class=256, min_center_cosine_gap=0.5, seed=7)


def multiclass_config(objective: str = "ca2", beta: float = 0.3,
                      max_epochs: int = MULTICLASS_EPOCHS,
                      patience: int = None) -> TrainConfig:
    """Residual-MLP protocol for the multi-class benchmark.

    Default runs the full fixed budget (patience = max_epochs); pass a
    smaller patience to stop on loss plateau instead.
    """
    return TrainConfig(
        objective=objective, beta=beta, lr=1.0, weight_decay=1e-4,
        arch="residual-mlp", hidden=512, seed=1,
        max_epochs=max_epochs,
        patience=max_epochs if patience is None else patience)


def center_convergence_config() -> TrainConfig:
    """Center-loss run to its own loss-plateau convergence."""
    return multiclass_config(objective="center", max_epochs=500, patience=10)


def singleclass_config(objective: str) -> TrainConfig:
    """Linear-adapter protocol for the single-class benchmark."""
    return TrainConfig(objective=objective, lr=0.03, seed=1,
                       max_epochs=200, patience=10)
