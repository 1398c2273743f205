"""Trainable adapter over frozen embeddings, both objectives, and the loop.

The adapter stands in for fine-tuning a full backbone: it is initialized as
the exact identity, so before any step the adapted features equal the raw
pre-trained ones bit for bit, and everything it learns is a displacement
relative to those features.

Objectives:
  * "ca2"    — pull each unit-normalized adapted feature toward its frozen
               unit neighbor-centroid target, gated by a binary hard weight
               (cosine > sigma activates the sample; the gate carries no
               gradient).
  * "center" — squared distance to the single fixed mean of the initial
               features (the classic one-center baseline).

Gradients are hand-derived; no autodiff.

Adapter binary layout ("OCCA", little-endian):
    magic "OCCA", u32 version = 1, u8 arch (0 linear, 1 residual-mlp),
    u32 d, u32 h (0 for linear), parameter blocks as f32:
    linear: W (d*d); residual-mlp: W1 (h*d), b1 (h), W2 (d*h).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ConfigError, DegenerateVector, FormatError, IoError,
                     ShapeMismatch)
from .features import FeatureMatrix
from .neighbors import NeighborPlan, build_plan
from .numeric import EPS_NORM, SgdState, make_rng, sgd_step

ARCH_LINEAR = "linear"
ARCH_RESIDUAL = "residual-mlp"

ADAPTER_MAGIC = b"OCCA"
ADAPTER_VERSION = 1
_ADAPTER_HEADER = struct.Struct("<4sIBII")


@dataclass
class AdapterParams:
    arch: str
    tensors: dict          # name -> float32 ndarray

    @property
    def d(self) -> int:
        if self.arch == ARCH_LINEAR:
            return self.tensors["W"].shape[0]
        return self.tensors["W2"].shape[0]

    def copy(self) -> "AdapterParams":
        return AdapterParams(self.arch,
                             {k: v.copy() for k, v in self.tensors.items()})


def init_adapter(arch: str, d: int, hidden: Optional[int] = None,
                 seed: int = 0) -> AdapterParams:
    """Identity-initialized adapter: linear W = I, residual-mlp W2 = 0."""
    if arch == ARCH_LINEAR:
        return AdapterParams(arch, {"W": np.eye(d, dtype=np.float32)})
    if arch == ARCH_RESIDUAL:
        h = hidden or d
        rng = make_rng(seed)
        w1 = (rng.standard_normal((h, d)) / np.sqrt(d)).astype(np.float32)
        return AdapterParams(arch, {
            "W1": w1,
            "b1": np.zeros(h, dtype=np.float32),
            "W2": np.zeros((d, h), dtype=np.float32),
        })
    raise ConfigError(f"unknown adapter arch {arch!r}")


def _forward64(tensors: dict, arch: str, x64: np.ndarray):
    """Forward pass in float64; returns (output, cache for backprop)."""
    if arch == ARCH_LINEAR:
        w = np.asarray(tensors["W"], dtype=np.float64)
        return x64 @ w.T, {}
    w1 = np.asarray(tensors["W1"], dtype=np.float64)
    b1 = np.asarray(tensors["b1"], dtype=np.float64)
    w2 = np.asarray(tensors["W2"], dtype=np.float64)
    z = x64 @ w1.T + b1
    h = np.maximum(z, 0.0)
    return x64 + h @ w2.T, {"z": z, "h": h, "w2": w2}


def _backward64(tensors: dict, arch: str, x64, du, cache) -> dict:
    """Gradients of a scalar loss w.r.t. adapter tensors given dL/d(output)."""
    if arch == ARCH_LINEAR:
        return {"W": du.T @ x64}
    dw2 = du.T @ cache["h"]
    dh = du @ cache["w2"]
    dz = dh * (cache["z"] > 0)
    return {"W1": dz.T @ x64, "b1": dz.sum(axis=0), "W2": dw2}


def adapter_forward(params: AdapterParams, x: np.ndarray) -> np.ndarray:
    """Apply the adapter to a vector or a batch of row vectors (float32 out)."""
    x = np.asarray(x)
    single = x.ndim == 1
    x64 = np.atleast_2d(x).astype(np.float64)
    if x64.shape[1] != params.d:
        raise ShapeMismatch(f"input dim {x64.shape[1]} != adapter d {params.d}")
    out, _ = _forward64(params.tensors, params.arch, x64)
    out = out.astype(np.float32)
    return out[0] if single else out


def hard_weight(fx_unit: np.ndarray, target_unit: np.ndarray,
                sigma: float) -> int:
    """Binary gate: 1 when cosine strictly exceeds sigma, else 0."""
    c = float(np.dot(np.asarray(fx_unit, dtype=np.float64),
                     np.asarray(target_unit, dtype=np.float64)))
    return 1 if c > sigma else 0


def _normalize_batch64(u: np.ndarray):
    norms = np.sqrt(np.einsum("ij,ij->i", u, u))
    if np.any(norms <= EPS_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateVector(f"adapted feature {bad} has norm {norms[bad]:.3e}")
    return u / norms[:, None], norms


def ca2_loss_and_grad(params: AdapterParams, batch_rows: np.ndarray,
                      raw_features: FeatureMatrix, plan: NeighborPlan):
    """Gated cosine-to-target loss, its analytic gradients, and the gates.

    loss = mean_i -w_i * f*(x_i)^T target_i with f* the unit-normalized
    adapter output; w_i is recomputed from the current features against the
    frozen target and sigma, and treated as a constant in the gradient.
    """
    batch_rows = np.asarray(batch_rows)
    x64 = raw_features.data[batch_rows].astype(np.float64)
    u, cache = _forward64(params.tensors, params.arch, x64)
    f_star, norms = _normalize_batch64(u)
    t = plan.targets[batch_rows].astype(np.float64)
    cos = np.einsum("ij,ij->i", f_star, t)
    w = (cos > plan.sigma).astype(np.float64)
    b = len(batch_rows)
    loss = float(-(w * cos).sum() / b)
    # d(u.t/||u||)/du = (t - cos * f*) / ||u||
    du = -(w / b)[:, None] * (t - cos[:, None] * f_star) / norms[:, None]
    grads = _backward64(params.tensors, params.arch, x64, du, cache)
    return loss, grads, w


def center_loss_and_grad(params: AdapterParams, batch_rows: np.ndarray,
                         raw_features: FeatureMatrix, center: np.ndarray):
    """Mean squared distance of adapted features to one fixed center."""
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (raw_features.d,):
        raise ShapeMismatch(f"center shape {center.shape} != ({raw_features.d},)")
    batch_rows = np.asarray(batch_rows)
    x64 = raw_features.data[batch_rows].astype(np.float64)
    u, cache = _forward64(params.tensors, params.arch, x64)
    diff = u - center
    b = len(batch_rows)
    loss = float(np.einsum("ij,ij->", diff, diff) / b)
    du = 2.0 * diff / b
    grads = _backward64(params.tensors, params.arch, x64, du, cache)
    return loss, grads


@dataclass
class TrainConfig:
    """Optimization and gating hyperparameters (defaults are the canonical
    recipe: lr 3e-4, momentum 0.9, weight decay 1e-3, batch 512, k=5,
    k*=2, beta=0.3)."""

    objective: str = "ca2"         # "ca2" | "center"
    k: int = 5
    k_star: int = 2
    beta: float = 0.3
    lr: float = 3e-4
    momentum: float = 0.9
    weight_decay: float = 1e-3
    batch_size: int = 512
    patience: int = 10
    max_epochs: int = 500
    seed: int = 0
    arch: str = ARCH_LINEAR
    hidden: Optional[int] = None   # residual-mlp width, defaults to d
    nonlinearity: str = "relu"     # recorded for provenance; relu is the only one

    def validate(self):
        if self.objective not in ("ca2", "center"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.arch not in (ARCH_LINEAR, ARCH_RESIDUAL):
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.k < 1 or self.k_star < 1:
            raise ConfigError("k and k_star must be >= 1")
        if not 0 <= self.beta <= 1:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.lr < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("bad optimizer hyperparameters")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("patience and max_epochs must be >= 1")


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)           # epoch-mean loss
    active_fraction: list = field(default_factory=list)  # share of w_i = 1
    epochs: int = 0
    stop_reason: str = ""
    best_epoch: int = 0
    trace: list = field(default_factory=list)            # optional epoch_hook values


def train(features: FeatureMatrix, cfg: TrainConfig,
          epoch_hook: Optional[Callable] = None):
    """Run the adaptation loop; returns (best AdapterParams, TrainLog).

    The neighbor plan (or the single center) is built once from the raw input
    features and frozen.  Hard weights are recomputed at every batch visit
    from the current adapted features.  Stops when the epoch-mean loss has
    not improved for `patience` epochs, or at max_epochs; parameters from the
    best-loss epoch are returned.  `epoch_hook(epoch, params)` may return a
    value appended to log.trace (e.g. an AUROC probe).
    """
    cfg.validate()
    n = features.n
    if n < cfg.k + 1:
        raise ConfigError(f"need n >= k+1, got n={n}, k={cfg.k}")

    plan = None
    center = None
    if cfg.objective == "ca2":
        plan = build_plan(features, cfg.k, cfg.beta)
    else:
        # Identity init makes the initial adapted features equal the raw ones.
        center = features.data.astype(np.float64).mean(axis=0)

    params = init_adapter(cfg.arch, features.d, cfg.hidden, cfg.seed)
    state = SgdState(lr=cfg.lr, momentum=cfg.momentum,
                     weight_decay=cfg.weight_decay)
    rng = make_rng(cfg.seed)
    batch = min(cfg.batch_size, n)

    log = TrainLog()
    best_loss = np.inf
    best_params = params.copy()
    stall = 0

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        active_sum = 0.0
        for start in range(0, n, batch):
            rows = perm[start:start + batch]
            if cfg.objective == "ca2":
                loss, grads, w = ca2_loss_and_grad(params, rows, features, plan)
                active_sum += float(w.sum())
            else:
                loss, grads = center_loss_and_grad(params, rows, features,
                                                   center)
                active_sum += float(len(rows))
            loss_sum += loss * len(rows)
            params.tensors = sgd_step(params.tensors, grads, state)
            if not all(np.all(np.isfinite(v)) for v in params.tensors.values()):
                raise ConfigError(f"non-finite parameters at epoch {epoch}")
        epoch_loss = loss_sum / n
        log.losses.append(epoch_loss)
        log.active_fraction.append(active_sum / n)
        if epoch_hook is not None:
            log.trace.append(epoch_hook(epoch, params))
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_params = params.copy()
            log.best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                log.stop_reason = "patience"
                break
    else:
        log.stop_reason = "max_epochs"
    log.epochs = len(log.losses)
    return best_params, log


def save_adapter(params: AdapterParams, path) -> None:
    arch_code = 0 if params.arch == ARCH_LINEAR else 1
    d = params.d
    h = 0 if params.arch == ARCH_LINEAR else params.tensors["W1"].shape[0]
    order = (["W"] if params.arch == ARCH_LINEAR else ["W1", "b1", "W2"])
    try:
        with open(path, "wb") as f:
            f.write(_ADAPTER_HEADER.pack(ADAPTER_MAGIC, ADAPTER_VERSION,
                                         arch_code, d, h))
            for name in order:
                f.write(params.tensors[name].astype("<f4").tobytes())
    except OSError as e:
        raise IoError(str(e)) from e


def load_adapter(path) -> AdapterParams:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoError(str(e)) from e
    if len(buf) < _ADAPTER_HEADER.size:
        raise FormatError("truncated adapter header")
    magic, version, arch_code, d, h = _ADAPTER_HEADER.unpack_from(buf)
    if magic != ADAPTER_MAGIC:
        raise FormatError(f"bad adapter magic {magic!r}")
    if version != ADAPTER_VERSION:
        raise FormatError(f"unsupported adapter version {version}")
    off = _ADAPTER_HEADER.size
    payload = np.frombuffer(buf, dtype="<f4", offset=off)
    if arch_code == 0:
        if payload.size != d * d:
            raise FormatError("adapter payload size mismatch")
        return AdapterParams(ARCH_LINEAR, {"W": payload.reshape(d, d).copy()})
    if arch_code == 1:
        if payload.size != h * d + h + d * h:
            raise FormatError("adapter payload size mismatch")
        w1 = payload[:h * d].reshape(h, d).copy()
        b1 = payload[h * d:h * d + h].copy()
        w2 = payload[h * d + h:].reshape(d, h).copy()
        return AdapterParams(ARCH_RESIDUAL, {"W1": w1, "b1": b1, "W2": w2})
    raise FormatError(f"unknown arch code {arch_code}")
