import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occadapt.errors import KTooLarge
from occadapt.features import FeatureMatrix
from occadapt.numeric import make_rng
from occadapt.scoring import occ_score


def fm(rows):
    return FeatureMatrix(data=np.asarray(rows, dtype=np.float32))


def brute_force_scores(train, test, k_star):
    """Quadratic oracle over all train-test pairs."""
    out = []
    for x in test:
        d2 = sorted(
            sum((float(t[j]) - float(x[j])) ** 2 for j in range(len(x)))
            for t in train)
        out.append(sum(d2[:k_star]) / k_star)
    return np.array(out)


def test_exact_match_scores_zero():
    train = fm([[1.0, 2.0], [3.0, 4.0]])
    test = fm([[1.0, 2.0]])
    assert occ_score(train, test, 1).scores[0] == 0.0


def test_1d_hand_case():
    train = fm([[0.0, 0.0], [10.0, 0.0]])
    test = fm([[1.0, 0.0]])
    assert occ_score(train, test, 2).scores[0] == pytest.approx(41.0)


def test_k_star_too_large():
    train = fm([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(KTooLarge):
        occ_score(train, fm([[0.0, 0.0]]), 3)


def test_matches_brute_force_oracle():
    rng = make_rng(21)
    train = rng.standard_normal((100, 6)).astype(np.float32)
    test = rng.standard_normal((20, 6)).astype(np.float32)
    got = occ_score(FeatureMatrix(data=train), FeatureMatrix(data=test),
                    k_star=3).scores
    want = brute_force_scores(train, test, 3)
    np.testing.assert_allclose(got, want, rtol=1e-10)


def test_translation_invariance():
    rng = make_rng(22)
    train = rng.standard_normal((30, 4)).astype(np.float32)
    test = rng.standard_normal((10, 4)).astype(np.float32)
    shift = np.array([5.0, -3.0, 2.0, 0.5], dtype=np.float32)
    a = occ_score(FeatureMatrix(data=train),
                  FeatureMatrix(data=test), 2).scores
    b = occ_score(FeatureMatrix(data=train + shift),
                  FeatureMatrix(data=test + shift), 2).scores
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-5)


@given(st.integers(1, 8))
@settings(max_examples=20, deadline=None)
def test_monotone_in_k_star(k):
    rng = make_rng(23)
    train = FeatureMatrix(
        data=rng.standard_normal((10, 3)).astype(np.float32))
    test = FeatureMatrix(data=rng.standard_normal((4, 3)).astype(np.float32))
    lo = occ_score(train, test, k).scores
    hi = occ_score(train, test, k + 1).scores
    assert np.all(hi >= lo - 1e-12)


def test_scale_covariance():
    rng = make_rng(24)
    train = rng.standard_normal((20, 5)).astype(np.float32)
    test = rng.standard_normal((6, 5)).astype(np.float32)
    a = occ_score(FeatureMatrix(data=train), FeatureMatrix(data=test),
                  2).scores
    b = occ_score(FeatureMatrix(data=3.0 * train),
                  FeatureMatrix(data=3.0 * test), 2).scores
    np.testing.assert_allclose(b, 9.0 * a, rtol=1e-5)


def test_normalized_variant():
    rng = make_rng(25)
    train = rng.standard_normal((20, 5)).astype(np.float32)
    test = rng.standard_normal((6, 5)).astype(np.float32)
    tn = train / np.linalg.norm(train, axis=1, keepdims=True)
    xn = test / np.linalg.norm(test, axis=1, keepdims=True)
    a = occ_score(FeatureMatrix(data=train), FeatureMatrix(data=test),
                  2, normalize=True).scores
    b = brute_force_scores(tn.astype(np.float32), xn.astype(np.float32), 2)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-7)


def test_scores_nonnegative_finite():
    rng = make_rng(26)
    train = FeatureMatrix(
        data=rng.standard_normal((15, 4)).astype(np.float32))
    test = FeatureMatrix(data=rng.standard_normal((7, 4)).astype(np.float32))
    res = occ_score(train, test, 4)
    assert res.k_star == 4
    assert len(res.scores) == 7
    assert np.all(res.scores >= 0) and np.all(np.isfinite(res.scores))
