import numpy as np
import pytest

from occadapt.adapt import (ARCH_LINEAR, ARCH_RESIDUAL, AdapterParams,
                            TrainConfig, adapter_forward, ca2_loss_and_grad,
                            center_loss_and_grad, hard_weight, init_adapter,
                            load_adapter, save_adapter, train)
from occadapt.errors import ConfigError, ShapeMismatch
from occadapt.features import FeatureMatrix, SyntheticSpec, gen_synthetic
from occadapt.neighbors import build_plan
from occadapt.numeric import l2_normalize, make_rng


def random_params(arch, d, h, seed):
    rng = make_rng(seed)
    if arch == ARCH_LINEAR:
        return AdapterParams(arch, {
            "W": rng.standard_normal((d, d)).astype(np.float32)})
    return AdapterParams(arch, {
        "W1": rng.standard_normal((h, d)).astype(np.float32),
        "b1": rng.standard_normal(h).astype(np.float32),
        "W2": (0.3 * rng.standard_normal((d, h))).astype(np.float32)})


def reference_forward(params, x):
    """Independent duplicate-arithmetic oracle for the adapter map."""
    x = np.asarray(x, dtype=np.float64)
    t = {k: v.astype(np.float64) for k, v in params.tensors.items()}
    if params.arch == ARCH_LINEAR:
        return t["W"] @ x
    z = t["W1"] @ x + t["b1"]
    return x + t["W2"] @ np.where(z > 0, z, 0.0)


def finite_diff_grads(loss_fn, params, step=1e-3):
    """Central finite differences on a float64 copy of every parameter."""
    base = {k: v.astype(np.float64) for k, v in params.tensors.items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            for sign in (+1, -1):
                pert = {k: v.copy() for k, v in base.items()}
                pert[name][idx] += sign * step
                p = AdapterParams(params.arch, pert)
                loss = loss_fn(p)
                g[idx] += sign * loss / (2 * step)
        grads[name] = g
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4):
    for name in numeric:
        a = np.asarray(analytic[name], dtype=np.float64)
        n = numeric[name]
        scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-8)
        assert np.max(np.abs(a - n)) / scale < rel, name


# --- forward ----------------------------------------------------------------

def test_identity_init_is_exact_identity():
    rng = make_rng(0)
    x = rng.standard_normal((6, 5)).astype(np.float32)
    for arch in (ARCH_LINEAR, ARCH_RESIDUAL):
        params = init_adapter(arch, 5, seed=1)
        np.testing.assert_array_equal(adapter_forward(params, x), x)


def test_linear_forward_scaling():
    params = AdapterParams(ARCH_LINEAR,
                           {"W": 2 * np.eye(2, dtype=np.float32)})
    np.testing.assert_allclose(adapter_forward(params, np.array([1.0, -1.0])),
                               [2.0, -2.0])


def test_forward_matches_reference_oracle():
    rng = make_rng(2)
    for arch in (ARCH_LINEAR, ARCH_RESIDUAL):
        params = random_params(arch, 6, 4, seed=7)
        for _ in range(5):
            x = rng.standard_normal(6).astype(np.float32)
            np.testing.assert_allclose(adapter_forward(params, x),
                                       reference_forward(params, x),
                                       rtol=1e-5, atol=1e-5)


def test_forward_shape_mismatch():
    params = init_adapter(ARCH_LINEAR, 4)
    with pytest.raises(ShapeMismatch):
        adapter_forward(params, np.zeros(5, dtype=np.float32))


# --- hard weight ------------------------------------------------------------

def test_hard_weight_cases():
    u = l2_normalize(np.array([1.0, 1.0]))
    assert hard_weight(u, u, sigma=0.99) == 1
    assert hard_weight(u, u, sigma=1.0) == 0          # equality maps to 0
    a = np.array([1.0, 0.0])
    b = np.array([0.64, float(np.sqrt(1 - 0.64 ** 2))])
    assert hard_weight(a, b, sigma=0.65) == 0
    assert hard_weight(a, b, sigma=0.63) == 1


def test_hard_weight_equality_is_zero():
    a = np.array([1.0, 0.0])
    b = np.array([0.0, 1.0])
    assert hard_weight(a, b, sigma=0.0) == 0


# --- losses and gradients ---------------------------------------------------

def small_instance(seed, n=12, d=5):
    rng = make_rng(seed)
    data = rng.standard_normal((n, d)).astype(np.float32)
    f = FeatureMatrix(data=data)
    plan = build_plan(f, k=3, beta=0.3)
    return f, plan


def test_ca2_all_weights_zero_gives_zero():
    f, plan = small_instance(0)
    plan.sigma = 1.0  # nothing can strictly exceed 1
    params = random_params(ARCH_LINEAR, 5, None, seed=1)
    loss, grads, w = ca2_loss_and_grad(params, np.arange(5), f, plan)
    assert loss == 0.0
    assert np.all(w == 0)
    assert np.all(grads["W"] == 0)


def test_ca2_perfect_alignment_loss_minus_one():
    # single sample, identity adapter, feature parallel to its target
    data = np.array([[2.0, 0.0], [1.0, 0.0], [1.5, 0.0], [0.5, 0.0]],
                    dtype=np.float32)
    f = FeatureMatrix(data=data)
    plan = build_plan(f, k=2, beta=0.0)
    params = init_adapter(ARCH_LINEAR, 2)
    plan.sigma = 0.5  # make the sample active
    loss, grads, w = ca2_loss_and_grad(params, np.array([0]), f, plan)
    assert w[0] == 1
    assert loss == pytest.approx(-1.0, abs=1e-6)
    assert np.max(np.abs(grads["W"])) < 1e-9


@pytest.mark.parametrize("arch,h", [(ARCH_LINEAR, None), (ARCH_RESIDUAL, 4)])
def test_ca2_grads_match_finite_differences(arch, h):
    f, plan = small_instance(3, n=10, d=5)
    params = random_params(arch, 5, h, seed=9)
    rows = np.arange(6)
    # place sigma in the widest gap between current cosines so the batch has
    # active and inactive samples and no gate flips under FD perturbation
    u = np.array([reference_forward(params, x) for x in f.data[rows]])
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    cos = np.sort(np.einsum("ij,ij->i",
                            u, plan.targets[rows].astype(np.float64)))
    gaps = np.diff(cos)
    mid = int(np.argmax(gaps[1:-1])) + 1 if len(gaps) > 2 else 0
    plan.sigma = float((cos[mid] + cos[mid + 1]) / 2)
    _, grads, w = ca2_loss_and_grad(params, rows, f, plan)
    assert 0 < w.sum() < len(rows)
    numeric = finite_diff_grads(
        lambda p: ca2_loss_and_grad(p, rows, f, plan)[0], params)
    assert_grads_close(grads, numeric)


def test_center_loss_zero_at_center():
    data = np.tile(np.array([[1.0, 2.0, 3.0]], dtype=np.float32), (5, 1))
    f = FeatureMatrix(data=data)
    params = init_adapter(ARCH_LINEAR, 3)
    c = np.array([1.0, 2.0, 3.0])
    loss, grads = center_loss_and_grad(params, np.arange(5), f, c)
    assert loss == pytest.approx(0.0, abs=1e-10)
    assert np.max(np.abs(grads["W"])) < 1e-9


def test_center_loss_hand_case():
    # single 2-D sample mapped to (3, 0), center (1, 0): loss 4
    data = np.array([[3.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    f = FeatureMatrix(data=data)
    params = init_adapter(ARCH_LINEAR, 2)
    loss, _ = center_loss_and_grad(params, np.array([0]),
                                   f, np.array([1.0, 0.0]))
    assert loss == pytest.approx(4.0)


@pytest.mark.parametrize("arch,h", [(ARCH_LINEAR, None), (ARCH_RESIDUAL, 3)])
def test_center_grads_match_finite_differences(arch, h):
    f, _ = small_instance(4, n=8, d=4)
    params = random_params(arch, 4, h, seed=2)
    c = make_rng(6).standard_normal(4)
    rows = np.arange(8)
    _, grads = center_loss_and_grad(params, rows, f, c)
    numeric = finite_diff_grads(
        lambda p: center_loss_and_grad(p, rows, f, c)[0], params)
    assert_grads_close(grads, numeric)


def test_weight_monotone_in_beta():
    f, _ = small_instance(5, n=30, d=6)
    plan_lo = build_plan(f, k=4, beta=0.3)
    plan_hi = build_plan(f, k=4, beta=0.6)
    params = init_adapter(ARCH_LINEAR, 6)
    rows = np.arange(30)
    _, _, w_lo = ca2_loss_and_grad(params, rows, f, plan_lo)
    _, _, w_hi = ca2_loss_and_grad(params, rows, f, plan_hi)
    assert np.all(w_hi <= w_lo)  # active set at higher beta is a subset


# --- training loop ----------------------------------------------------------

def synthetic_features(m=4, seed=0, d=8, n_per_class=20, noise=0.08):
    spec = SyntheticSpec(d=d, m=m, o=1, n_per_class=n_per_class,
                         noise_sigma=noise, seed=seed)
    return gen_synthetic(spec)[0]


def test_train_lr_zero_keeps_identity():
    f = synthetic_features()
    cfg = TrainConfig(lr=0.0, max_epochs=3, patience=1, batch_size=16)
    params, _ = train(f, cfg)
    np.testing.assert_array_equal(adapter_forward(params, f.data), f.data)


def test_train_determinism():
    f = synthetic_features(seed=2)
    cfg = TrainConfig(lr=1e-2, max_epochs=10, patience=3, batch_size=32,
                      seed=5)
    p1, log1 = train(f, cfg)
    p2, log2 = train(f, cfg)
    for k in p1.tensors:
        np.testing.assert_array_equal(p1.tensors[k], p2.tensors[k])
    assert log1.losses == log2.losses
    assert log1.active_fraction == log2.active_fraction


def test_train_tightens_clusters():
    f = synthetic_features(m=4, seed=7, noise=0.1)
    plan = build_plan(f, k=5, beta=0.3)
    cfg = TrainConfig(lr=1e-2, max_epochs=40, patience=10, batch_size=64,
                      seed=1)
    params, log = train(f, cfg)

    def mean_cos(features):
        u = features.astype(np.float64)
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        t = plan.targets.astype(np.float64)
        return float(np.mean(np.einsum("ij,ij->i", u, t)))

    before = mean_cos(f.data)
    after = mean_cos(adapter_forward(params, f.data))
    assert after > before


def test_train_high_beta_keeps_identity():
    f = synthetic_features(m=2, seed=3, noise=0.02)
    cfg = TrainConfig(beta=0.99, lr=3e-4, max_epochs=50, patience=5,
                      batch_size=64, seed=0)
    params, log = train(f, cfg)
    assert log.active_fraction[0] < 0.05
    delta = np.max(np.abs(params.tensors["W"] - np.eye(f.d, dtype=np.float32)))
    assert delta < 10 * cfg.lr


def test_train_loss_decreases_and_logs():
    f = synthetic_features(m=1, seed=4)
    cfg = TrainConfig(objective="center", lr=1e-3, max_epochs=30,
                      patience=10, batch_size=32, seed=0)
    params, log = train(f, cfg)
    assert log.losses[-1] <= log.losses[0]
    assert log.epochs == len(log.losses) == len(log.active_fraction)
    assert log.stop_reason in ("patience", "max_epochs")
    assert all(np.isfinite(v) for v in log.losses)
    assert all(0 <= a <= 1 for a in log.active_fraction)


def test_train_rejects_bad_config():
    f = synthetic_features()
    with pytest.raises(ConfigError):
        train(f, TrainConfig(objective="nope"))
    with pytest.raises(ConfigError):
        train(f, TrainConfig(beta=1.5))
    with pytest.raises(ConfigError):
        train(f, TrainConfig(k=f.n))  # needs n >= k+1


# --- serialization ----------------------------------------------------------

@pytest.mark.parametrize("arch,h", [(ARCH_LINEAR, None), (ARCH_RESIDUAL, 6)])
def test_adapter_round_trip(tmp_path, arch, h):
    params = random_params(arch, 5, h, seed=11)
    p = tmp_path / "a.occa"
    save_adapter(params, p)
    back = load_adapter(p)
    assert back.arch == params.arch
    for k in params.tensors:
        np.testing.assert_array_equal(back.tensors[k], params.tensors[k])
