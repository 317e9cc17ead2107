"""Validator behavior: preset contracts, fault detection, minimax, invariance."""

import numpy as np
import pytest

import noisecouple.validation as validation
from noisecouple.core import (
    CouplingSpec,
    correlation_of,
    equicorrelated_matrix,
    factor_correlation,
)
from noisecouple.generators import make_linear, make_random_feature
from noisecouple.samplers import RandomStream, sample_block
from noisecouple.validation import (
    check_marginal_invariance,
    check_minimax,
    validate_cross_covariance,
    validate_marginals,
)


def coordinate_basis(d, coords):
    basis = np.zeros((d, len(coords)))
    for j, c in enumerate(coords):
        basis[c, j] = 1.0
    return basis


def preset_specs():
    random_rows = np.random.default_rng(77).standard_normal((4, 4))
    random_rows /= np.linalg.norm(random_rows, axis=1, keepdims=True)
    from noisecouple.core import CouplingMatrix

    return [
        CouplingSpec.identical(5, 8),
        CouplingSpec.independent(3, 16),
        CouplingSpec.antithetic(64),
        CouplingSpec.repulsive(6, 16),
        CouplingSpec.equicorrelated(5, 8, -1.0 / 4),  # boundary for k=5
        CouplingSpec.equicorrelated(3, 8, -0.25),
        CouplingSpec.equicorrelated(4, 8, 0.5),
        CouplingSpec.from_matrix(CouplingMatrix(random_rows), d=8),
        CouplingSpec.on_subspace(
            coordinate_basis(6, [0, 1]),
            CouplingSpec.identical(3, 6),
            CouplingSpec.independent(3, 6),
        ),
    ]


# ---------------------------------------------------------------------------
# Full-contract preset run (the heavy test of this module)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("spec", preset_specs(), ids=lambda s: f"{s.kind.value}-k{s.k}-d{s.d}")
def test_presets_pass_full_contract(spec):
    n = 200_000
    stream = RandomStream(2024)
    marg = validate_marginals(spec, stream, n)
    assert marg.passed, marg.to_json_dict()
    cov = validate_cross_covariance(spec, stream.child(1_000_000), n)
    assert cov.passed, cov.to_json_dict()


def test_repulsive_k2_and_antithetic_same_law():
    rep = CouplingSpec.repulsive(2, 8)
    anti = CouplingSpec.antithetic(8)
    np.testing.assert_array_equal(
        correlation_of(rep).entries, correlation_of(anti).entries
    )
    stream = RandomStream(5)
    r1 = validate_cross_covariance(rep, stream, 50_000)
    r2 = validate_cross_covariance(anti, stream, 50_000)
    assert r1.passed and r2.passed
    np.testing.assert_array_equal(r1.expected, r2.expected)


# ---------------------------------------------------------------------------
# Fault injection: corrupted samplers must be flagged
# ---------------------------------------------------------------------------


def corrupt_sampler(transform):
    def sampler(spec, stream, n):
        return transform(sample_block(spec, stream, n))

    return sampler


def test_scaling_fault_fails_variance(monkeypatch):
    monkeypatch.setattr(validation, "sample_block", corrupt_sampler(lambda z: 1.1 * z))
    report = validate_marginals(CouplingSpec.independent(2, 4), RandomStream(0), 20_000)
    assert not report.passed
    failing = {c.name for c in report.checks if not c.passed}
    assert "max_abs_variance_deviation" in failing


def test_mean_shift_fault_fails_mean(monkeypatch):
    monkeypatch.setattr(validation, "sample_block", corrupt_sampler(lambda z: z + 0.05))
    report = validate_marginals(CouplingSpec.independent(2, 4), RandomStream(0), 20_000)
    assert not report.passed
    failing = {c.name for c in report.checks if not c.passed}
    assert "max_abs_mean" in failing


def test_non_gaussian_fault_fails_kurtosis(monkeypatch):
    # Rescale to unit variance but heavy tails: z^3 / sqrt(15).
    monkeypatch.setattr(
        validation, "sample_block", corrupt_sampler(lambda z: z**3 / np.sqrt(15.0))
    )
    report = validate_marginals(CouplingSpec.independent(2, 4), RandomStream(0), 20_000)
    failing = {c.name for c in report.checks if not c.passed}
    assert "max_abs_excess_kurtosis" in failing


def test_row_norm_fault_fails_cross_covariance(monkeypatch):
    def break_row(z):
        out = z.copy()
        out[:, 0, :] *= 1.05
        return out

    monkeypatch.setattr(validation, "sample_block", corrupt_sampler(break_row))
    report = validate_cross_covariance(
        CouplingSpec.repulsive(3, 8), RandomStream(0), 20_000
    )
    assert not report.passed


# ---------------------------------------------------------------------------
# Minimax
# ---------------------------------------------------------------------------


def test_minimax_candidate_ordering():
    k, n = 3, 100_000
    specs = [
        CouplingSpec.independent(k, 8),
        CouplingSpec.equicorrelated(k, 8, -0.2),
        CouplingSpec.repulsive(k, 8),
    ]
    report = check_minimax(k, specs, RandomStream(31), n)
    assert report.passed
    tol = 5.0 / np.sqrt(n * 8)
    assert report.worst_pair[0] == pytest.approx(0.0, abs=tol)
    assert report.worst_pair[1] == pytest.approx(-0.2, abs=tol)
    assert report.worst_pair[2] == pytest.approx(-0.5, abs=tol)
    assert report.attains_bound == (False, False, True)
    assert report.bound == -0.5


def test_minimax_antithetic_attains_k2():
    report = check_minimax(
        2, [CouplingSpec.antithetic(8)], RandomStream(32), 100_000
    )
    assert report.passed
    assert report.worst_pair[0] == pytest.approx(-1.0, abs=5.0 / np.sqrt(100_000 * 8))
    assert report.attains_bound[0]


def test_minimax_identical_is_respected():
    report = check_minimax(
        4, [CouplingSpec.identical(4, 8)], RandomStream(33), 50_000
    )
    assert report.passed
    assert report.worst_pair[0] == pytest.approx(1.0, abs=5 * np.sqrt(2.0 / (50_000 * 8)))
    assert not report.attains_bound[0]


def test_minimax_rejects_mixed_k():
    with pytest.raises(ValueError):
        check_minimax(
            3,
            [CouplingSpec.independent(3, 4), CouplingSpec.independent(4, 4)],
            RandomStream(0),
            10_000,
        )


# ---------------------------------------------------------------------------
# Marginal invariance of averaged single-output scores
# ---------------------------------------------------------------------------


def test_invariance_linear_squared_norm():
    k, d = 3, 6
    rng = np.random.default_rng(41)
    J = rng.standard_normal((4, d))
    a = rng.standard_normal(4)
    gen = make_linear(J, a)
    specs = [CouplingSpec.independent(k, d), CouplingSpec.repulsive(k, d)]
    score = lambda x: np.sum(x**2, axis=-1)
    report = check_marginal_invariance(specs, gen, score, RandomStream(42), 200_000)
    assert report.passed
    # Gaussian moment oracle: E||a + Jz||^2 = ||a||^2 + ||J||_F^2.
    analytic = float(np.sum(a**2) + np.sum(J**2))
    for mean, se in zip(report.means, report.stderrs):
        assert mean == pytest.approx(analytic, abs=6 * se)


def test_invariance_first_coordinate_score():
    k, d = 2, 4
    a = np.array([0.7, -0.3, 0.0, 0.1])
    gen = make_linear(np.eye(d), a)
    specs = [CouplingSpec.identical(k, d), CouplingSpec.independent(k, d)]
    report = check_marginal_invariance(
        specs, gen, lambda x: x[..., 0], RandomStream(43), 100_000
    )
    assert report.passed
    for mean, se in zip(report.means, report.stderrs):
        assert mean == pytest.approx(a[0], abs=6 * max(se, 1e-12))


def test_invariance_nonlinear_generator():
    k, d = 3, 5
    gen = make_random_feature(seed=8, d=d, m=3, width=16)
    specs = [
        CouplingSpec.independent(k, d),
        CouplingSpec.repulsive(k, d),
        CouplingSpec.equicorrelated(k, d, -0.3),
    ]
    report = check_marginal_invariance(
        specs, gen, lambda x: x.mean(axis=-1), RandomStream(44), 150_000
    )
    assert report.passed


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def test_report_json_schema():
    import json

    spec = CouplingSpec.repulsive(3, 4)
    report = validate_marginals(spec, RandomStream(1), 5_000)
    doc = report.to_json_dict()
    assert set(doc) == {"spec", "n", "statistics", "thresholds", "pass"}
    assert doc["n"] == 5_000
    assert all(set(s) == {"name", "value"} for s in doc["statistics"])
    assert all(set(t) == {"name", "value"} for t in doc["thresholds"])
    json.dumps(doc)  # must be plain-JSON serializable

    mm = check_minimax(3, [spec], RandomStream(2), 5_000)
    json.dumps(mm.to_json_dict())


def test_marginals_rejects_tiny_n():
    with pytest.raises(ValueError):
        validate_marginals(CouplingSpec.independent(2, 2), RandomStream(0), 100)


def test_reports_reproducible_across_thread_counts(monkeypatch):
    spec = CouplingSpec.repulsive(3, 4)
    monkeypatch.setenv("NOISECOUPLE_THREADS", "1")
    serial = validate_cross_covariance(spec, RandomStream(9), 60_000, chunk_size=10_000)
    monkeypatch.setenv("NOISECOUPLE_THREADS", "4")
    threaded = validate_cross_covariance(spec, RandomStream(9), 60_000, chunk_size=10_000)
    np.testing.assert_array_equal(serial.estimated, threaded.estimated)
    assert serial.to_json_dict() == threaded.to_json_dict()
