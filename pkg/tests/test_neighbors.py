import math

import numpy as np
import pytest

from occadapt.errors import KTooLarge
from occadapt.features import FeatureMatrix
from occadapt.neighbors import build_plan, knn_query, load_plan, save_plan
from occadapt.numeric import l2_normalize, make_rng


def brute_force_knn(data, q, k):
    """Quadratic-scan oracle: per-pair python loop, ties to lower index."""
    cand = []
    for i in range(data.shape[0]):
        if i == q:
            continue
        d2 = 0.0
        for j in range(data.shape[1]):
            diff = float(data[i, j]) - float(data[q, j])
            d2 += diff * diff
        cand.append((d2, i))
    cand.sort()
    return [i for _, i in cand[:k]]


def fm(rows):
    return FeatureMatrix(data=np.asarray(rows, dtype=np.float32))


def test_knn_1d_points():
    f = fm([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    ids, dists = knn_query(f, 0, 1)
    assert list(ids) == [1]
    assert dists[0] == pytest.approx(1.0)


def test_knn_tie_lower_index_wins():
    f = fm([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    ids, _ = knn_query(f, 0, 2)
    assert list(ids) == [1, 2]


def test_knn_k_too_large():
    f = fm([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(KTooLarge):
        knn_query(f, 0, 2)


def test_knn_matches_brute_force_oracle():
    rng = make_rng(17)
    data = rng.standard_normal((50, 8)).astype(np.float32)
    f = FeatureMatrix(data=data)
    for q in range(50):
        ids, dists = knn_query(f, q, 5)
        assert list(ids) == brute_force_knn(data, q, 5)
        assert list(dists) == sorted(dists)


def test_plan_identical_points_give_tau_one():
    f = fm([[1.0, 2.0]] * 5)
    plan = build_plan(f, k=2, beta=0.3)
    assert plan.tau == pytest.approx(1.0)
    assert plan.sigma == pytest.approx(1.0)


def test_sigma_arithmetic():
    f = fm([[1.0, 2.0]] * 5)
    for beta, tau in [(0.3, 0.5), (0.0, 0.25), (1.0, -0.5)]:
        sigma = tau + beta * (1 - tau)
        assert sigma == pytest.approx(tau + beta * (1 - tau))
    # endpoint behavior on a real plan
    p0 = build_plan(fm(np.random.default_rng(0).standard_normal((10, 4))),
                    k=3, beta=0.0)
    assert p0.sigma == pytest.approx(p0.tau)
    p1 = build_plan(fm(np.random.default_rng(0).standard_normal((10, 4))),
                    k=3, beta=1.0)
    assert p1.sigma == pytest.approx(1.0)


def test_plan_two_cluster_hand_computation():
    # two tight 2-D clusters; with k=1 each point's target is its partner
    pts = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]],
                   dtype=np.float32)
    f = FeatureMatrix(data=pts)
    plan = build_plan(f, k=1, beta=0.3)
    assert list(plan.neighbor_ids[:, 0]) == [1, 0, 3, 2]
    for i, partner in enumerate([1, 0, 3, 2]):
        np.testing.assert_allclose(plan.targets[i],
                                   l2_normalize(pts[partner]), atol=1e-6)
    # hand oracle for tau: mean over i of cos(point_i, partner_i)
    taus = []
    for i, partner in enumerate([1, 0, 3, 2]):
        a = pts[i] / np.linalg.norm(pts[i])
        b = pts[partner] / np.linalg.norm(pts[partner])
        taus.append(float(np.dot(a, b)))
    assert plan.tau == pytest.approx(sum(taus) / 4, abs=1e-6)
    assert plan.sigma == pytest.approx(plan.tau + 0.3 * (1 - plan.tau))


def test_plan_invariants_random():
    rng = make_rng(4)
    f = FeatureMatrix(data=rng.standard_normal((40, 6)).astype(np.float32))
    plan = build_plan(f, k=5, beta=0.3)
    # self never among own neighbors
    for i in range(40):
        assert i not in plan.neighbor_ids[i]
    # unit targets
    norms = np.linalg.norm(plan.targets.astype(np.float64), axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-5
    assert -1.0 <= plan.tau <= 1.0
    assert plan.tau <= plan.sigma <= 1.0


def test_sigma_monotone_in_beta():
    rng = make_rng(8)
    f = FeatureMatrix(data=rng.standard_normal((30, 5)).astype(np.float32))
    sigmas = [build_plan(f, 3, b).sigma for b in (0.0, 0.2, 0.5, 0.8, 1.0)]
    assert sigmas == sorted(sigmas)


def test_plan_round_trip_bit_exact(tmp_path):
    rng = make_rng(13)
    f = FeatureMatrix(data=rng.standard_normal((25, 7)).astype(np.float32))
    plan = build_plan(f, k=4, beta=0.6)
    p = tmp_path / "plan.occp"
    save_plan(plan, p)
    back = load_plan(p)
    np.testing.assert_array_equal(back.targets, plan.targets)
    np.testing.assert_array_equal(back.neighbor_ids, plan.neighbor_ids)
    assert back.tau == plan.tau
    assert back.sigma == plan.sigma
    assert back.beta == plan.beta
    assert back.k == plan.k
