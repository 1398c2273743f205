"""Exact k-NN search and the frozen neighbor plan (targets, tau, sigma).

The plan is computed once from the initial features and never updated during
adaptation: each sample keeps its own fixed attraction target.  Neighbor
search is plain Euclidean over raw (unnormalized) features; normalization
enters only when targets and similarities are formed.

Plan binary layout ("OCCP", little-endian):
    magic   4 bytes  "OCCP"
    version u32      = 1
    n       u64
    k       u32
    tau     f64
    sigma   f64
    beta    f64
    ids     n*k u32  neighbor indices, row-major
    targets OCCF blob (unit target vectors, no labels)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import features as fstore
from .errors import FormatError, IoError, KTooLarge
from .features import FeatureMatrix
from .numeric import l2_normalize_rows

PLAN_MAGIC = b"OCCP"
PLAN_VERSION = 1
_PLAN_HEADER = struct.Struct("<4sIQIddd")


def _sq_dists_to(data64: np.ndarray, q: int) -> np.ndarray:
    diffs = data64 - data64[q]
    return np.einsum("ij,ij->i", diffs, diffs)


def knn_query(features: FeatureMatrix, query_row: int, k: int):
    """Exact k nearest rows to `query_row` (self excluded), ascending distance.

    Ties break toward the lower row index.  Returns (ids, distances).
    """
    n = features.n
    if not 1 <= k <= n - 1:
        raise KTooLarge(f"k={k} with n={n}")
    d2 = _sq_dists_to(features.data.astype(np.float64), query_row)
    d2[query_row] = np.inf
    order = np.argsort(d2, kind="stable")[:k]
    return order, np.sqrt(d2[order])


@dataclass
class NeighborPlan:
    """Frozen neighbor ids, unit centroid targets, and the gate threshold."""

    neighbor_ids: np.ndarray   # (n, k) int64
    targets: np.ndarray        # (n, d) float32, unit rows
    tau: float
    sigma: float
    k: int
    beta: float


def build_plan(features: FeatureMatrix, k: int, beta: float) -> NeighborPlan:
    """Neighbor sets, unit-normalized neighbor-mean targets, tau and sigma.

    tau is the mean cosine between each unit-normalized sample and its target;
    sigma = tau + beta * (1 - tau).
    """
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    n = features.n
    if n < k + 1:
        raise KTooLarge(f"need n >= k+1, got n={n}, k={k}")
    data64 = features.data.astype(np.float64)
    ids = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        d2 = _sq_dists_to(data64, i)
        d2[i] = np.inf
        ids[i] = np.argsort(d2, kind="stable")[:k]
    means = data64[ids].mean(axis=1)
    targets = l2_normalize_rows(means)
    f_star = l2_normalize_rows(data64)
    sims = np.einsum("ij,ij->i", f_star.astype(np.float64),
                     targets.astype(np.float64))
    tau = float(sims.mean())
    sigma = tau + beta * (1.0 - tau)
    return NeighborPlan(neighbor_ids=ids, targets=targets,
                        tau=tau, sigma=sigma, k=k, beta=beta)


def save_plan(plan: NeighborPlan, path) -> None:
    n = plan.neighbor_ids.shape[0]
    blob = fstore.to_bytes(FeatureMatrix(data=plan.targets))
    try:
        with open(path, "wb") as f:
            f.write(_PLAN_HEADER.pack(PLAN_MAGIC, PLAN_VERSION, n, plan.k,
                                      plan.tau, plan.sigma, plan.beta))
            f.write(plan.neighbor_ids.astype("<u4").tobytes())
            f.write(blob)
    except OSError as e:
        raise IoError(str(e)) from e


def load_plan(path) -> NeighborPlan:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoError(str(e)) from e
    if len(buf) < _PLAN_HEADER.size:
        raise FormatError("truncated plan header")
    magic, version, n, k, tau, sigma, beta = _PLAN_HEADER.unpack_from(buf)
    if magic != PLAN_MAGIC:
        raise FormatError(f"bad plan magic {magic!r}")
    if version != PLAN_VERSION:
        raise FormatError(f"unsupported plan version {version}")
    off = _PLAN_HEADER.size
    ids_bytes = n * k * 4
    if len(buf) < off + ids_bytes:
        raise FormatError("truncated neighbor ids")
    ids = np.frombuffer(buf, dtype="<u4", count=n * k, offset=off)
    ids = ids.reshape(n, k).astype(np.int64)
    targets_fm = fstore.from_bytes(buf[off + ids_bytes:])
    if targets_fm.n != n:
        raise FormatError(f"target rows {targets_fm.n} != n {n}")
    return NeighborPlan(neighbor_ids=ids, targets=targets_fm.data,
                        tau=tau, sigma=sigma, k=k, beta=beta)
