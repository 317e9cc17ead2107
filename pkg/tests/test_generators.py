"""Generator oracles and gallery objectives: values, derivatives, determinism."""

import numpy as np
import pytest

from noisecouple.generators import (
    make_brightness_surrogate,
    make_linear,
    make_random_feature,
    noise_objective,
    objective_brightness_cluster,
    objective_pairwise_l2,
    objective_rbf,
)


def directional_fd(f, z, u, h=1e-5):
    """Central finite-difference gradient of z -> <u, f(z)>."""
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp.flat[i] += h
        zm.flat[i] -= h
        grad.flat[i] = (np.dot(f(zp), u) - np.dot(f(zm), u)) / (2 * h)
    return grad


def gradient_fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return grad


def assert_vjp_matches_fd(gen, n_probes=10, seed=0, rtol=1e-4):
    rng = np.random.default_rng(seed)
    for _ in range(n_probes):
        z = rng.standard_normal(gen.d)
        u = rng.standard_normal(gen.m)
        analytic = gen.vjp(z, u)
        numeric = directional_fd(gen.evaluate, z, u)
        err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert err < rtol


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def test_linear_identity_passthrough():
    gen = make_linear(np.eye(3))
    z = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(gen.evaluate(z), z)


def test_linear_affine_example():
    gen = make_linear(np.array([[1.0, 0.0], [0.0, 2.0]]), a=np.array([1.0, 1.0]))
    np.testing.assert_array_equal(gen.evaluate(np.array([1.0, 1.0])), [2.0, 3.0])


def test_linear_vjp_is_transpose_action():
    J = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    gen = make_linear(J)
    z = np.zeros(3)
    np.testing.assert_array_equal(gen.vjp(z, np.array([1.0, 0.0])), J[0])
    assert_vjp_matches_fd(gen)


def test_linear_batched_evaluate():
    J = np.array([[1.0, -1.0], [0.5, 2.0]])
    gen = make_linear(J, a=np.array([1.0, 0.0]))
    zs = np.random.default_rng(0).standard_normal((4, 3, 2))
    batched = gen.evaluate(zs)
    for i in range(4):
        for j in range(3):
            np.testing.assert_allclose(batched[i, j], gen.evaluate(zs[i, j]))


def test_random_feature_reproducible_and_bounded():
    gen_a = make_random_feature(seed=9, d=4, m=3, width=16)
    gen_b = make_random_feature(seed=9, d=4, m=3, width=16)
    z = np.random.default_rng(1).standard_normal(4)
    np.testing.assert_array_equal(gen_a.evaluate(z), gen_b.evaluate(z))
    # tanh output in [-1, 1] bounds each coordinate by the l1 norm of the
    # mixing row over sqrt(width).
    rng = np.random.default_rng(2)
    big = rng.standard_normal((200, 4)) * 10
    out = gen_a.evaluate(big)
    assert np.all(np.isfinite(out))
    assert np.max(np.abs(out)) < 20


def test_random_feature_vjp():
    gen = make_random_feature(seed=3, d=5, m=2, width=12)
    assert_vjp_matches_fd(gen)


def test_random_feature_jacobian_matches_vjp():
    gen = make_random_feature(seed=4, d=3, m=2, width=8)
    z = np.random.default_rng(5).standard_normal(3)
    J = gen.jacobian(z)
    for p in range(2):
        u = np.zeros(2)
        u[p] = 1.0
        np.testing.assert_allclose(J[p], gen.vjp(z, u), atol=1e-12)


def test_brightness_surrogate_values():
    gen = make_brightness_surrogate(seed=0, d=6)
    np.testing.assert_allclose(gen.evaluate(np.zeros(6)), [0.5], atol=1e-15)
    z = np.random.default_rng(6).standard_normal(6)
    np.testing.assert_allclose(
        gen.evaluate(-z), 1.0 - gen.evaluate(z), atol=1e-14
    )
    assert_vjp_matches_fd(gen)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def test_pairwise_l2_identical_inputs_is_zero():
    obj = objective_pairwise_l2(4)
    xs = np.tile(np.array([1.0, -2.0]), (4, 1))
    assert obj.evaluate(xs) == pytest.approx(0.0, abs=1e-12)


def test_pairwise_l2_matches_direct_sum():
    obj = objective_pairwise_l2(3, average=False)
    xs = np.random.default_rng(7).standard_normal((3, 4))
    direct = sum(
        np.sum((xs[i] - xs[j]) ** 2) for i in range(3) for j in range(i + 1, 3)
    )
    assert obj.evaluate(xs) == pytest.approx(direct, rel=1e-12)


def test_rbf_identical_inputs_is_one():
    obj = objective_rbf(3, tau=2.0)
    xs = np.tile(np.array([0.5, 0.5]), (3, 1))
    assert obj.evaluate(xs) == pytest.approx(1.0, abs=1e-12)


def test_brightness_cluster_value():
    obj = objective_brightness_cluster(lam=0.35)
    b = np.array([0.9, 0.8, 0.2, 0.1])[:, None]
    # |0.85 - 0.15| + 0.35 * (0.1 + 0.1) / 2 = 0.735 up to the abs smoothing.
    assert obj.evaluate(b) == pytest.approx(0.735, abs=1e-4)
    assert obj.maximize


def test_objective_direction_flags():
    assert objective_pairwise_l2(2).maximize
    assert not objective_rbf(2, 1.0).maximize


@pytest.mark.parametrize(
    "objective,k,m",
    [
        (objective_pairwise_l2(3), 3, 4),
        (objective_pairwise_l2(4, average=False), 4, 2),
        (objective_rbf(3, tau=1.5), 3, 3),
        (objective_brightness_cluster(lam=0.35), 4, 1),
    ],
    ids=["pairwise-avg", "pairwise-raw", "rbf", "brightness"],
)
def test_objective_gradients_match_fd(objective, k, m):
    rng = np.random.default_rng(11)
    for _ in range(5):
        xs = rng.standard_normal((k, m))
        analytic = objective.gradient(xs)
        numeric = gradient_fd(lambda flat: objective.evaluate(flat.reshape(k, m)), xs.ravel())
        err = np.linalg.norm(analytic.ravel() - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert err < 1e-4


def test_objective_batched_evaluate():
    obj = objective_rbf(3, tau=1.0)
    xs = np.random.default_rng(12).standard_normal((5, 3, 2))
    batched = obj.evaluate(xs)
    for i in range(5):
        assert batched[i] == pytest.approx(obj.evaluate(xs[i]))


# ---------------------------------------------------------------------------
# Composition with generators
# ---------------------------------------------------------------------------


def test_noise_objective_value_and_gradient():
    gen = make_random_feature(seed=1, d=4, m=3, width=10)
    obj = noise_objective(objective_pairwise_l2(3), gen)
    zs = np.random.default_rng(13).standard_normal((3, 4))
    expected = objective_pairwise_l2(3).evaluate(gen.evaluate(zs))
    assert obj.evaluate(zs) == pytest.approx(expected, rel=1e-12)
    numeric = gradient_fd(lambda flat: obj.evaluate(flat.reshape(3, 4)), zs.ravel())
    err = np.linalg.norm(obj.gradient(zs).ravel() - numeric) / np.linalg.norm(numeric)
    assert err < 1e-4


def test_noise_objective_exact_mixed_trace():
    gen = make_random_feature(seed=2, d=3, m=2, width=8)
    obj = noise_objective(objective_pairwise_l2(3), gen)
    zs = np.random.default_rng(14).standard_normal((3, 3))
    # Oracle: second-order central differences of H over the shared
    # coordinates of members i and j.
    h = 1e-4
    i, j = 0, 2
    total = 0.0
    for l in range(3):
        zpp, zpm, zmp, zmm = (zs.copy() for _ in range(4))
        zpp[i, l] += h
        zpp[j, l] += h
        zpm[i, l] += h
        zpm[j, l] -= h
        zmp[i, l] -= h
        zmp[j, l] += h
        zmm[i, l] -= h
        zmm[j, l] -= h
        total += (
            obj.evaluate(zpp) - obj.evaluate(zpm) - obj.evaluate(zmp) + obj.evaluate(zmm)
        ) / (4 * h * h)
    assert obj.mixed_trace(zs, i, j) == pytest.approx(total, rel=1e-4)


def test_noise_objective_without_generator_passthrough():
    obj = noise_objective(objective_pairwise_l2(3))
    zs = np.random.default_rng(15).standard_normal((3, 5))
    assert obj.evaluate(zs) == pytest.approx(objective_pairwise_l2(3).evaluate(zs))
    # Direct quadratic objective has constant mixed trace -2 * w * d.
    w = 2.0 / (3 * 2)
    assert obj.mixed_trace(zs, 0, 1) == pytest.approx(-2.0 * w * 5)
