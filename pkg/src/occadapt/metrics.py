"""Evaluation metrics: AUROC, FPR at 95% inlier acceptance, linear probe."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingleClass
from .features import FeatureMatrix
from .numeric import make_rng


def _split_classes(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} vs labels {labels.shape}")
    inl = scores[labels == 0]
    out = scores[labels == 1]
    if len(inl) == 0 or len(out) == 0:
        raise SingleClass(f"{len(inl)} inliers, {len(out)} outliers")
    return inl, out


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group-average rank."""
    order = np.argsort(x, kind="stable")
    sx = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j < len(x) and sx[j] == sx[i]:
            j += 1
        ranks[order[i:j]] = (i + 1 + j) / 2.0
        i = j
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(random outlier score > random inlier score),
    ties counted 0.5, via a single rank pass."""
    inl, out = _split_classes(scores, labels)
    n0, n1 = len(inl), len(out)
    ranks = _average_ranks(np.concatenate([inl, out]))
    r1 = ranks[n0:].sum()
    return float((r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def acceptance_threshold(inlier_scores: np.ndarray, tpr: float = 0.95) -> float:
    """Smallest score value accepting (score <= theta) at least `tpr` of inliers."""
    s = np.sort(np.asarray(inlier_scores, dtype=np.float64))
    idx = math.ceil(tpr * len(s))
    return float(s[idx - 1])


def fpr_at_95tpr(scores, labels, tpr: float = 0.95) -> float:
    """Fraction of outliers accepted by the threshold that keeps `tpr` of the
    inliers accepted (inliers are the positives here)."""
    inl, out = _split_classes(scores, labels)
    theta = acceptance_threshold(inl, tpr)
    return float(np.mean(out <= theta))


@dataclass
class ProbeConfig:
    holdout_ratio: float = 0.25
    lr: float = 0.5
    epochs: int = 300
    seed: int = 0

    def validate(self):
        if not 0 < self.holdout_ratio < 1:
            raise ConfigError(f"holdout_ratio must be in (0, 1)")
        if self.lr < 0 or self.epochs < 1:
            raise ConfigError("bad probe lr/epochs")


def linear_probe(features: FeatureMatrix, cfg: ProbeConfig = None) -> float:
    """Top-1 held-out accuracy of multinomial logistic regression on frozen
    features, trained full-batch from zero-initialized weights.

    The split is per-class so both sides see every class; needs >= 2 samples
    per class.
    """
    cfg = cfg or ProbeConfig()
    cfg.validate()
    if features.labels is None:
        raise ConfigError("linear_probe needs class labels")
    labels = features.labels
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ConfigError("need >= 2 classes")
    remap = {c: i for i, c in enumerate(classes)}
    y = np.array([remap[c] for c in labels])

    rng = make_rng(cfg.seed)
    train_idx, test_idx = [], []
    for c in range(len(classes)):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise ConfigError(f"class {classes[c]} has < 2 samples")
        idx = rng.permutation(idx)
        n_hold = min(max(1, round(cfg.holdout_ratio * len(idx))), len(idx) - 1)
        test_idx.append(idx[:n_hold])
        train_idx.append(idx[n_hold:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    x = features.data.astype(np.float64)
    n_cls = len(classes)
    w = np.zeros((n_cls, features.d))
    b = np.zeros(n_cls)
    xt, yt = x[train_idx], y[train_idx]
    onehot = np.eye(n_cls)[yt]
    for _ in range(cfg.epochs):
        logits = xt @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        delta = (p - onehot) / len(yt)
        w -= cfg.lr * (delta.T @ xt)
        b -= cfg.lr * delta.sum(axis=0)
    pred = np.argmax(x[test_idx] @ w.T + b, axis=1)
    return float(np.mean(pred == y[test_idx]))


@dataclass
class EvalReport:
    auroc: float
    tpr95fpr: float
    n_inliers: int
    n_outliers: int
    threshold: float

    CSV_HEADER = "auroc,tpr95fpr,n_inliers,n_outliers,threshold"

    def csv_line(self) -> str:
        return (f"{self.auroc!r},{self.tpr95fpr!r},"
                f"{self.n_inliers},{self.n_outliers},{self.threshold!r}")

    def pretty(self) -> str:
        return ("evaluation report\n"
                f"  AUROC     : {self.auroc:.4f}\n"
                f"  TPR95FPR  : {self.tpr95fpr:.4f}\n"
                f"  inliers   : {self.n_inliers}\n"
                f"  outliers  : {self.n_outliers}\n"
                f"  threshold : {self.threshold:.6g}")


def evaluate_scores(scores, labels) -> EvalReport:
    inl, out = _split_classes(scores, labels)
    return EvalReport(
        auroc=auroc(scores, labels),
        tpr95fpr=fpr_at_95tpr(scores, labels),
        n_inliers=len(inl),
        n_outliers=len(out),
        threshold=acceptance_threshold(inl),
    )
