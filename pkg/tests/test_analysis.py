"""Separation, RBF similarity, local-linear prediction, first-order effects."""

import numpy as np
import pytest

from noisecouple.analysis import (
    EffectReport,
    LinearFeatureMap,
    RBFSimilaritySpec,
    coupling_effect_first_order,
    local_linear_prediction,
    pairwise_separation,
    rbf_similarity_closed_form,
    rbf_similarity_mc,
    separation_bound,
)
from noisecouple.core import CouplingSpec, FeasibilityError, correlation_of, equicorrelated_matrix
from noisecouple.generators import (
    GalleryObjective,
    make_random_feature,
    noise_objective,
    objective_pairwise_l2,
)
from noisecouple.samplers import RandomStream, sample_many


# ---------------------------------------------------------------------------
# Separation
# ---------------------------------------------------------------------------


def test_separation_repulsive_k2_identity_features():
    spec = CouplingSpec.repulsive(2, 2)
    batches = sample_many(spec, RandomStream(1), 20_000)
    est = pairwise_separation(batches, LinearFeatureMap.identity(2))
    assert est.estimate == pytest.approx(8.0, abs=4 * est.stderr)


def test_separation_identical_is_zero():
    spec = CouplingSpec.identical(3, 4)
    batches = sample_many(spec, RandomStream(2), 50)
    est = pairwise_separation(batches, LinearFeatureMap(np.random.default_rng(0).standard_normal((2, 4))))
    assert est.estimate == pytest.approx(0.0, abs=1e-12)


def test_separation_independent_is_2d():
    d = 6
    spec = CouplingSpec.independent(3, d)
    batches = sample_many(spec, RandomStream(3), 20_000)
    est = pairwise_separation(batches, LinearFeatureMap.identity(d))
    assert est.estimate == pytest.approx(2 * d, abs=4 * est.stderr)


def test_separation_bound_values():
    assert separation_bound(2, LinearFeatureMap(np.eye(2))) == pytest.approx(8.0)
    assert separation_bound(3, LinearFeatureMap(np.diag([1.0, 2.0]))) == pytest.approx(15.0)
    assert separation_bound(10_000, LinearFeatureMap(np.eye(1))) == pytest.approx(2.0, rel=1e-3)


def test_separation_dimension_mismatch():
    spec = CouplingSpec.independent(2, 3)
    batches = sample_many(spec, RandomStream(0), 2)
    with pytest.raises(ValueError):
        pairwise_separation(batches, LinearFeatureMap.identity(4))


@pytest.mark.parametrize("k", [2, 3, 5])
def test_separation_matches_local_linear_prediction(k):
    rng = np.random.default_rng(100 + k)
    d = 6
    fmap = LinearFeatureMap(rng.standard_normal((3, d)))
    lo = -1.0 / (k - 1)
    for c in [lo, -0.25 if -0.25 >= lo else lo / 2, 0.0, 0.5, 1.0]:
        spec = CouplingSpec.equicorrelated(k, d, c)
        batches = sample_many(spec, RandomStream(50 + k), 6_000)
        est = pairwise_separation(batches, fmap)
        predicted = local_linear_prediction(k, c, fmap)
        tol = 4 * est.stderr if est.stderr > 0 else 1e-9
        assert est.estimate == pytest.approx(predicted, abs=tol)


def test_repulsive_attains_but_never_exceeds_bound():
    k, d = 4, 5
    fmap = LinearFeatureMap(np.random.default_rng(7).standard_normal((3, d)))
    bound = separation_bound(k, fmap)
    est = pairwise_separation(
        sample_many(CouplingSpec.repulsive(k, d), RandomStream(8), 20_000), fmap
    )
    assert est.estimate == pytest.approx(bound, abs=4 * est.stderr)
    for spec in [
        CouplingSpec.independent(k, d),
        CouplingSpec.equicorrelated(k, d, -0.2),
        CouplingSpec.identical(k, d),
    ]:
        other = pairwise_separation(sample_many(spec, RandomStream(9), 10_000), fmap)
        assert other.estimate <= bound + 4 * max(other.stderr, 1e-12)


# ---------------------------------------------------------------------------
# RBF similarity
# ---------------------------------------------------------------------------


def test_rbf_closed_form_scalar_example():
    spec = RBFSimilaritySpec(map=LinearFeatureMap(np.array([[1.0]])), tau=1.0)
    assert rbf_similarity_closed_form(2, spec) == pytest.approx(5.0**-0.5, abs=1e-12)


def test_rbf_closed_form_flat_limits():
    fmap = LinearFeatureMap(np.random.default_rng(1).standard_normal((2, 3)))
    wide = RBFSimilaritySpec(map=fmap, tau=1e9)
    assert rbf_similarity_closed_form(3, wide) == pytest.approx(1.0, abs=1e-12)
    zero = RBFSimilaritySpec(map=LinearFeatureMap(np.zeros((2, 3))), tau=1.0)
    assert rbf_similarity_closed_form(3, zero) == pytest.approx(1.0, abs=1e-15)


def test_rbf_mc_repulsive_matches_closed_form():
    spec = CouplingSpec.repulsive(3, 2)
    rbf = RBFSimilaritySpec(map=LinearFeatureMap.identity(2), tau=1.0)
    result = rbf_similarity_mc(spec, rbf, RandomStream(4), 40_000)
    assert result.exact == pytest.approx(0.25, abs=1e-12)
    assert result.exact == pytest.approx(
        rbf_similarity_closed_form(3, rbf), abs=1e-10
    )
    assert result.mc.estimate == pytest.approx(result.exact, abs=4 * result.mc.stderr)


def test_rbf_mc_independent_pair():
    spec = CouplingSpec.independent(2, 1)
    rbf = RBFSimilaritySpec(map=LinearFeatureMap(np.array([[1.0]])), tau=1.0)
    result = rbf_similarity_mc(spec, rbf, RandomStream(5), 40_000)
    assert result.exact == pytest.approx(3.0**-0.5, abs=1e-12)
    assert result.mc.estimate == pytest.approx(result.exact, abs=4 * result.mc.stderr)


def test_rbf_lower_bound_over_couplings():
    d = 3
    fmap = LinearFeatureMap(np.random.default_rng(2).standard_normal((2, d)))
    for tau in (0.7, 1.5, 4.0):
        rbf = RBFSimilaritySpec(map=fmap, tau=tau)
        for k in (2, 3, 4):
            floor = rbf_similarity_closed_form(k, rbf)
            for spec in [
                CouplingSpec.independent(k, d),
                CouplingSpec.equicorrelated(k, d, -0.3 if k > 3 else 0.2),
                CouplingSpec.identical(k, d),
                CouplingSpec.repulsive(k, d),
            ]:
                result = rbf_similarity_mc(spec, rbf, RandomStream(6), 2_000)
                assert result.exact >= floor - 1e-12


def test_rbf_weighted_sum():
    fmap = LinearFeatureMap.identity(2)
    weighted = RBFSimilaritySpec(map=fmap, weights=((1.0, 0.25), (2.0, 0.5)))
    single1 = RBFSimilaritySpec(map=fmap, tau=1.0)
    single2 = RBFSimilaritySpec(map=fmap, tau=2.0)
    k = 3
    combined = rbf_similarity_closed_form(k, weighted)
    assert combined == pytest.approx(
        0.25 * rbf_similarity_closed_form(k, single1)
        + 0.5 * rbf_similarity_closed_form(k, single2)
    )
    with pytest.raises(ValueError):
        RBFSimilaritySpec(map=fmap, weights=((1.0, -0.1),))


# ---------------------------------------------------------------------------
# Local linear prediction
# ---------------------------------------------------------------------------


def test_local_linear_values():
    fmap = LinearFeatureMap(np.array([[1.0]]))
    assert local_linear_prediction(3, -0.5, fmap) == pytest.approx(3.0)
    assert local_linear_prediction(3, 0.0, fmap) == pytest.approx(2.0)
    assert local_linear_prediction(3, 1.0, fmap) == pytest.approx(0.0)
    with pytest.raises(FeasibilityError):
        local_linear_prediction(3, -0.6, fmap)


# ---------------------------------------------------------------------------
# First-order coupling effect
# ---------------------------------------------------------------------------


def quadratic_sum_objective(k):
    """H = sum_{i<j} ||z_i - z_j||^2 acting directly on noise."""
    return noise_objective(objective_pairwise_l2(k, average=False))


def test_effect_quadratic_repulsive_k3():
    k, d = 3, 4
    R = correlation_of(CouplingSpec.repulsive(k, d))
    report = coupling_effect_first_order(
        quadratic_sum_objective(k), R, d, RandomStream(10), 30_000,
        estimate_remainder=True,
    )
    # Hand computation: per pair E||z_i - z_j||^2 = 2d(1 - rho); against the
    # independent baseline the difference is -2d * sum_{i<j} rho_ij = +3d.
    expected = 3.0 * d
    assert report.first_order.estimate == pytest.approx(expected, abs=1e-9)
    assert report.first_order.stderr == pytest.approx(0.0, abs=1e-12)
    assert report.direct.estimate == pytest.approx(expected, abs=4 * report.direct.stderr)
    assert report.interpolation.estimate == pytest.approx(
        expected, abs=max(4 * report.interpolation.stderr, 1e-9)
    )
    # Quadratic H: second application of the mixed-derivative trace vanishes.
    assert report.remainder_max_mixed == pytest.approx(0.0, abs=1e-6)
    assert report.remainder_bound == pytest.approx(0.0, abs=1e-6)


def test_effect_identity_correlation_is_null():
    k, d = 3, 2
    from noisecouple.core import SampleCorrelation

    report = coupling_effect_first_order(
        quadratic_sum_objective(k), SampleCorrelation(np.eye(k)), d, RandomStream(11), 2_000
    )
    assert report.direct.estimate == 0.0
    assert report.first_order.estimate == 0.0
    assert report.interpolation.estimate == 0.0
    assert report.sum_abs_B == 0.0


def test_effect_single_sample_objective_is_invariant():
    k, d = 3, 3
    obj = GalleryObjective(
        k=k,
        evaluate=lambda z: (np.asarray(z) ** 2).sum(axis=(-2, -1)),
        gradient=lambda z: 2.0 * np.asarray(z),
        maximize=True,
    )
    R = correlation_of(CouplingSpec.repulsive(k, d))
    report = coupling_effect_first_order(obj, R, d, RandomStream(12), 20_000)
    assert report.direct.estimate == pytest.approx(0.0, abs=4 * max(report.direct.stderr, 1e-12))
    assert report.first_order.estimate == pytest.approx(0.0, abs=1e-6)
    assert report.interpolation.estimate == pytest.approx(0.0, abs=1e-6)


def test_effect_equicorrelated_quadratic_agreement():
    k, d = 4, 3
    R = equicorrelated_matrix(k, -0.25)
    report = coupling_effect_first_order(
        quadratic_sum_objective(k), R, d, RandomStream(13), 30_000
    )
    expected = -2.0 * d * (-0.25) * (k * (k - 1) / 2)
    combined = np.hypot(report.direct.stderr, report.first_order.stderr)
    assert report.direct.estimate == pytest.approx(expected, abs=4 * max(combined, 1e-12))
    assert report.first_order.estimate == pytest.approx(expected, abs=1e-9)


def test_effect_nonlinear_identity_and_remainder():
    k, d = 3, 4
    gen = make_random_feature(seed=21, d=d, m=3, width=8)
    obj = noise_objective(objective_pairwise_l2(k), gen)
    R = correlation_of(CouplingSpec.repulsive(k, d))
    report = coupling_effect_first_order(
        obj, R, d, RandomStream(14), 40_000,
        node_samples=10_000, estimate_remainder=True, remainder_samples=200,
    )
    # Exact interpolation identity: the integral reproduces the direct effect.
    combined = report.direct.stderr + report.interpolation.stderr
    assert report.direct.estimate == pytest.approx(
        report.interpolation.estimate, abs=4 * combined
    )
    # The first-order truncation is off by at most (M/2)(sum |B_ij|)^2.
    gap = abs(report.direct.estimate - report.first_order.estimate)
    slack = 4 * np.hypot(report.direct.stderr, report.first_order.stderr)
    assert gap <= report.remainder_bound + slack
    assert report.remainder_max_mixed > 0


def test_effect_report_json():
    import json

    k, d = 2, 2
    R = correlation_of(CouplingSpec.antithetic(d))
    report = coupling_effect_first_order(
        quadratic_sum_objective(k), R, d, RandomStream(15), 2_000
    )
    doc = report.to_json_dict()
    assert {"direct", "first_order", "interpolation", "sum_abs_B"} <= set(doc)
    json.dumps(doc)


def test_effect_fd_paths_agree_with_exact():
    k, d = 3, 3
    obj = quadratic_sum_objective(k)
    R = correlation_of(CouplingSpec.repulsive(k, d))
    stream = RandomStream(16)
    exact = coupling_effect_first_order(
        obj, R, d, stream, 4_000, mixed_trace_method="exact"
    )
    grad_fd = coupling_effect_first_order(
        obj, R, d, stream, 4_000, mixed_trace_method="grad_fd"
    )
    value_fd = coupling_effect_first_order(
        obj, R, d, stream, 2_000, mixed_trace_method="value_fd"
    )
    hutch = coupling_effect_first_order(
        obj, R, d, stream, 2_000, mixed_trace_method="hutchinson"
    )
    target = exact.first_order.estimate
    assert grad_fd.first_order.estimate == pytest.approx(target, rel=1e-6)
    assert value_fd.first_order.estimate == pytest.approx(target, rel=1e-4)
    assert hutch.first_order.estimate == pytest.approx(target, rel=1e-4)
