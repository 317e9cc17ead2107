"""Monte Carlo verification that samplers honor their coupling contracts.

Every check compares an estimated moment against its exact target using a
z-score-style threshold: a small multiple (4-6, or 10 for kurtosis) of the
exact standard error of the estimator, so thresholds stay valid across n and
d without retuning.  Failures are reported, never raised.

Estimators accumulate over chunks drawn from derived sub-streams
(``stream.child(j)`` for chunk j), so a report is reproducible given
(seed, stream_id, n, chunk_size).  Chunks may be evaluated in parallel;
the reduction order is fixed.  The environment variable NOISECOUPLE_THREADS
caps the worker count (0 or unset = auto).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    CouplingKind,
    CouplingSpec,
    correlation_of,
    effective_correlation,
)
from .samplers import RandomStream, sample_block

__all__ = [
    "CheckResult",
    "MomentReport",
    "CovarianceReport",
    "MinimaxReport",
    "InvarianceReport",
    "validate_marginals",
    "validate_cross_covariance",
    "check_minimax",
    "check_marginal_invariance",
    "thread_count",
]

DEFAULT_CHUNK = 25_000


def thread_count() -> int:
    """Worker cap from NOISECOUPLE_THREADS; 0 or unset picks a small default."""
    raw = os.environ.get("NOISECOUPLE_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value > 0:
        return value
    return min(4, os.cpu_count() or 1)


def _chunk_sizes(n: int, chunk_size: int) -> list[int]:
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def _map_chunks(fn: Callable[[int], object], n_chunks: int) -> list:
    workers = min(thread_count(), n_chunks)
    if workers <= 1:
        return [fn(j) for j in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_chunks)))


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return abs(self.value) <= self.threshold


@dataclass(frozen=True)
class _Report:
    spec_json: object
    n: int
    checks: tuple[CheckResult, ...]
    extra_statistics: tuple[tuple[str, float], ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        statistics = [{"name": c.name, "value": c.value} for c in self.checks]
        statistics += [{"name": k, "value": v} for k, v in self.extra_statistics]
        thresholds = [{"name": c.name, "value": c.threshold} for c in self.checks]
        return {
            "spec": self.spec_json,
            "n": self.n,
            "statistics": statistics,
            "thresholds": thresholds,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class MomentReport(_Report):
    """Per-sample-index marginal moments against the standard-normal law."""

    mean_vector_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_abs_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_abs_variance_deviation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_abs_excess_kurtosis: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class CovarianceReport(_Report):
    """Pairwise correlation estimates against the spec's exact correlation."""

    estimated: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    expected: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


@dataclass(frozen=True)
class MinimaxReport(_Report):
    bound: float = 0.0
    worst_pair: tuple[float, ...] = ()
    attains_bound: tuple[bool, ...] = ()


@dataclass(frozen=True)
class InvarianceReport(_Report):
    means: tuple[float, ...] = ()
    stderrs: tuple[float, ...] = ()


def validate_marginals(
    spec: CouplingSpec,
    stream: RandomStream,
    n: int,
    *,
    chunk_size: int = DEFAULT_CHUNK,
) -> MomentReport:
    """Check that every sample index is marginally standard normal.

    Per coordinate and sample index the estimated mean, variance, and excess
    kurtosis are compared against 0, 1, and 0 with thresholds 4/sqrt(n),
    5*sqrt(2/n), and 10*sqrt(24/n).
    """
    if n < 1_000:
        raise ValueError(f"marginal validation needs n >= 1000, got {n}")
    k, d = spec.k, spec.d
    sizes = _chunk_sizes(n, chunk_size)

    def one_chunk(j: int):
        z = sample_block(spec, stream.child(j), sizes[j])
        return (
            z.sum(axis=0),
            (z**2).sum(axis=0),
            (z**3).sum(axis=0),
            (z**4).sum(axis=0),
        )

    parts = _map_chunks(one_chunk, len(sizes))
    s1, s2, s3, s4 = (sum(p[i] for p in parts) for i in range(4))
    mean = s1 / n
    var = s2 / n - mean**2
    m4 = s4 / n - 4 * mean * (s3 / n) + 6 * mean**2 * (s2 / n) - 3 * mean**4
    kurt = m4 / var**2 - 3.0

    mean_thr = 4.0 / np.sqrt(n)
    var_thr = 5.0 * np.sqrt(2.0 / n)
    kurt_thr = 10.0 * np.sqrt(24.0 / n)
    checks = (
        CheckResult("max_abs_mean", float(np.max(np.abs(mean))), mean_thr),
        CheckResult("max_abs_variance_deviation", float(np.max(np.abs(var - 1.0))), var_thr),
        CheckResult("max_abs_excess_kurtosis", float(np.max(np.abs(kurt))), kurt_thr),
    )
    return MomentReport(
        spec_json=spec.to_json_dict(),
        n=n,
        checks=checks,
        mean_vector_norms=np.linalg.norm(mean, axis=1),
        max_abs_mean=np.max(np.abs(mean), axis=1),
        max_abs_variance_deviation=np.max(np.abs(var - 1.0), axis=1),
        max_abs_excess_kurtosis=np.max(np.abs(kurt), axis=1),
    )


def _complement_basis(basis: np.ndarray) -> np.ndarray:
    d, s = basis.shape
    q, _ = np.linalg.qr(basis, mode="complete")
    return q[:, s:]


def validate_cross_covariance(
    spec: CouplingSpec,
    stream: RandomStream,
    n: int,
    *,
    chunk_size: int = DEFAULT_CHUNK,
    structure_pair: tuple[int, int] = (0, 1),
) -> CovarianceReport:
    """Check estimated pair correlations (1/d) E<z_i, z_j> entrywise.

    Also verifies, for one chosen pair, that the estimated d x d
    cross-covariance matrix is scalar * I_d: its largest off-diagonal entry
    must stay below 5/sqrt(n).  Subspace specs replace that structure check
    with restricted correlation checks on the subspace and its complement.
    """
    if n < 1_000:
        raise ValueError(f"cross-covariance validation needs n >= 1000, got {n}")
    k, d = spec.k, spec.d
    expected = effective_correlation(spec).entries
    sizes = _chunk_sizes(n, chunk_size)
    is_subspace = spec.kind is CouplingKind.SUBSPACE
    do_structure = k >= 2 and not is_subspace
    i0, i1 = structure_pair
    if is_subspace:
        b_in = spec.subspace.basis
        b_out = _complement_basis(b_in)

    def one_chunk(j: int):
        z = sample_block(spec, stream.child(j), sizes[j])
        gram = np.einsum("nkd,nld->kl", z, z)
        cross = np.einsum("nd,ne->de", z[:, i0], z[:, i1]) if do_structure else None
        gram_in = gram_out = None
        if is_subspace:
            z_in = np.matmul(z, b_in)
            z_out = np.matmul(z, b_out)
            gram_in = np.einsum("nkd,nld->kl", z_in, z_in)
            gram_out = np.einsum("nkd,nld->kl", z_out, z_out)
        return gram, cross, gram_in, gram_out

    parts = _map_chunks(one_chunk, len(sizes))
    est = sum(p[0] for p in parts) / (n * d)
    pair_thr = 5.0 / np.sqrt(n * d)
    checks = [
        CheckResult(
            "max_abs_correlation_deviation",
            float(np.max(np.abs(est - expected))),
            pair_thr,
        )
    ]
    extra: list[tuple[str, float]] = []
    if do_structure:
        cross = sum(p[1] for p in parts) / n
        off = cross[~np.eye(d, dtype=bool)]
        checks.append(
            CheckResult(
                "structure_max_offdiagonal",
                float(np.max(np.abs(off))) if off.size else 0.0,
                5.0 / np.sqrt(n),
            )
        )
        extra.append(("structure_scalar_estimate", float(np.mean(np.diag(cross)))))
    if is_subspace:
        corr = correlation_of(spec)
        s = spec.subspace.s
        est_in = sum(p[2] for p in parts) / (n * s)
        est_out = sum(p[3] for p in parts) / (n * (d - s))
        checks.append(
            CheckResult(
                "subspace_max_abs_correlation_deviation",
                float(np.max(np.abs(est_in - corr.on_subspace.entries))),
                5.0 / np.sqrt(n * s),
            )
        )
        checks.append(
            CheckResult(
                "complement_max_abs_correlation_deviation",
                float(np.max(np.abs(est_out - corr.on_complement.entries))),
                5.0 / np.sqrt(n * (d - s)),
            )
        )
    return CovarianceReport(
        spec_json=spec.to_json_dict(),
        n=n,
        checks=tuple(checks),
        extra_statistics=tuple(extra),
        estimated=est,
        expected=expected,
    )


def check_minimax(
    k: int,
    candidate_specs: Sequence[CouplingSpec],
    stream: RandomStream,
    n: int,
    *,
    chunk_size: int = DEFAULT_CHUNK,
) -> MinimaxReport:
    """Estimate each candidate's worst (largest) pair correlation.

    No coupling can push its worst pair below -1/(k-1); the repulsive
    coupling attains that bound.  Each candidate's estimate is checked
    against the bound minus five standard errors.
    """
    specs = list(candidate_specs)
    if any(s.k != k for s in specs):
        raise ValueError("all candidate specs must share the same k")
    bound = -1.0 / (k - 1)
    sizes = _chunk_sizes(n, chunk_size)
    n_chunks = len(sizes)
    worst: list[float] = []
    attains: list[bool] = []
    checks: list[CheckResult] = []
    for idx, spec in enumerate(specs):

        def one_chunk(j: int, spec=spec, idx=idx):
            z = sample_block(spec, stream.child(idx * n_chunks + j), sizes[j])
            return np.einsum("nkd,nld->kl", z, z)

        gram = sum(_map_chunks(one_chunk, n_chunks))
        est = gram / (n * spec.d)
        pairs = est[np.triu_indices(k, 1)]
        w = float(np.max(pairs)) if k >= 2 else 1.0
        tol = 5.0 / np.sqrt(n * spec.d)
        worst.append(w)
        attains.append(abs(w - bound) <= tol)
        # Signed margin: negative means the bound was beaten beyond tolerance.
        checks.append(CheckResult(f"bound_violation[{idx}]", min(0.0, w - bound), tol))
    return MinimaxReport(
        spec_json=[s.to_json_dict() for s in specs],
        n=n,
        checks=tuple(checks),
        extra_statistics=tuple(
            (f"worst_pair[{i}]", w) for i, w in enumerate(worst)
        ),
        bound=bound,
        worst_pair=tuple(worst),
        attains_bound=tuple(attains),
    )


def check_marginal_invariance(
    specs: Sequence[CouplingSpec],
    generator,
    score: Callable[[np.ndarray], np.ndarray],
    stream: RandomStream,
    n: int,
    *,
    chunk_size: int = DEFAULT_CHUNK,
) -> InvarianceReport:
    """Averaged single-output scores must not depend on the coupling.

    Estimates E[(1/k) sum_i q(G(z_i))] for each spec through a deterministic
    generator; all pairwise differences must stay within 6 pooled standard
    errors.  The invariance holds in expectation only.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one spec")
    kd = {(s.k, s.d) for s in specs}
    if len(kd) != 1:
        raise ValueError("all specs must share (k, d)")
    sizes = _chunk_sizes(n, chunk_size)
    n_chunks = len(sizes)
    means: list[float] = []
    ses: list[float] = []
    for idx, spec in enumerate(specs):

        def one_chunk(j: int, spec=spec, idx=idx):
            z = sample_block(spec, stream.child(idx * n_chunks + j), sizes[j])
            values = np.asarray(score(generator.evaluate(z)))
            v = values.mean(axis=1)
            return v.sum(), (v**2).sum()

        parts = _map_chunks(one_chunk, n_chunks)
        total = sum(p[0] for p in parts)
        total_sq = sum(p[1] for p in parts)
        mean = total / n
        var = max(total_sq / n - mean**2, 0.0)
        means.append(float(mean))
        ses.append(float(np.sqrt(var / n)))
    checks = []
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            pooled = np.sqrt(ses[i] ** 2 + ses[j] ** 2)
            checks.append(
                CheckResult(
                    f"mean_difference[{i},{j}]",
                    means[i] - means[j],
                    6.0 * pooled,
                )
            )
    return InvarianceReport(
        spec_json=[s.to_json_dict() for s in specs],
        n=n,
        checks=tuple(checks),
        extra_statistics=tuple((f"mean[{i}]", m) for i, m in enumerate(means)),
        means=tuple(means),
        stderrs=tuple(ses),
    )
