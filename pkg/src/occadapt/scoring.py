"""k-NN outlier scoring: mean squared distance to the k* nearest train rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KTooLarge
from .features import FeatureMatrix
from .numeric import l2_normalize_rows


@dataclass
class ScoreResult:
    scores: np.ndarray    # float64, one per test row; larger = more outlier-like
    k_star: int


def occ_score(train_adapted: FeatureMatrix, test_adapted: FeatureMatrix,
              k_star: int, normalize: bool = False) -> ScoreResult:
    """score(x) = mean over the k* nearest train rows t of ||t - x||^2.

    Test rows are scored against the whole train set (no self-exclusion: the
    sets are disjoint).  With normalize=True both sides are L2-normalized
    first, matching the normalized-feature scoring variant.
    """
    if not 1 <= k_star <= train_adapted.n:
        raise KTooLarge(f"k_star={k_star} with {train_adapted.n} train rows")
    train = train_adapted.data
    test = test_adapted.data
    if normalize:
        train = l2_normalize_rows(train)
        test = l2_normalize_rows(test)
    train64 = train.astype(np.float64)
    scores = np.empty(test.shape[0], dtype=np.float64)
    for i in range(test.shape[0]):
        diffs = train64 - test[i].astype(np.float64)
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        nearest = np.partition(d2, k_star - 1)[:k_star]
        scores[i] = nearest.sum() / k_star
    return ScoreResult(scores=scores, k_star=k_star)
