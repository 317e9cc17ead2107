"""Gallery-level quantities: separation, RBF similarity, first-order effects.

Closed forms implemented here:

- separation bound      avg pairwise E||J z_i - J z_j||^2 <= (2k/(k-1)) ||J||_F^2,
                        attained exactly by the repulsive coupling
- RBF similarity        for a centered Gaussian pair difference with
                        covariance V, E exp(-||y_i - y_j||^2 / (2 tau^2))
                        = det(I + V / tau^2)^(-1/2); the repulsive coupling
                        minimizes the gallery average at
                        det(I + (2k/((k-1) tau^2)) J J^T)^(-1/2)
- local linear          E||G(z_i) - G(z_j)||^2 = 2 (1 - c) ||J||_F^2 for a
                        linear generator under pair correlation c
- first-order effect    E_R[H] - E_iid[H] equals the integral over t of
                        sum_{i<j} B_ij E_t[D_ij H] along R_t = (1-t) I + t R,
                        with B = R - I and D_ij H the trace of the mixed
                        Hessian block; truncating at t=0 leaves a remainder
                        bounded by (M/2) (sum_{i<j} |B_ij|)^2 when every
                        |E_t[D_kl D_ij H]| <= M

Monte Carlo estimates report means with standard errors; interpolation nodes
share common random numbers (one base normal block pushed through each R_t
factor), which makes the identity checkable at moderate sample sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    CouplingKind,
    CouplingSpec,
    FeasibilityError,
    NoiseBatch,
    SampleCorrelation,
    correlation_of,
    feasible_interval,
)
from .generators import GalleryObjective
from .samplers import RandomStream, sample_block

__all__ = [
    "LinearFeatureMap",
    "RBFSimilaritySpec",
    "MCEstimate",
    "RBFSimilarityResult",
    "EffectReport",
    "pairwise_separation",
    "separation_bound",
    "rbf_similarity_closed_form",
    "rbf_similarity_mc",
    "coupling_effect_first_order",
    "local_linear_prediction",
]

_FD_STEP = float(np.cbrt(np.finfo(np.float64).eps))  # ~6.06e-6
_CHUNK = 25_000


@dataclass(frozen=True)
class LinearFeatureMap:
    """Affine feature map z -> a + J z with J of shape (m, d)."""

    J: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        J = np.array(self.J, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] < 1 or J.shape[1] < 1:
            raise ValueError(f"J must be a nonempty matrix, got shape {J.shape}")
        if not np.all(np.isfinite(J)):
            raise ValueError("J contains non-finite entries")
        J.flags.writeable = False
        object.__setattr__(self, "J", J)
        if self.offset is not None:
            a = np.array(self.offset, dtype=np.float64)
            if a.shape != (J.shape[0],):
                raise ValueError(f"offset shape {a.shape} does not match J rows {J.shape[0]}")
            a.flags.writeable = False
            object.__setattr__(self, "offset", a)

    @property
    def m(self) -> int:
        return self.J.shape[0]

    @property
    def d(self) -> int:
        return self.J.shape[1]

    @property
    def frobenius_sq(self) -> float:
        return float(np.sum(self.J**2))

    @classmethod
    def identity(cls, d: int) -> "LinearFeatureMap":
        return cls(np.eye(d))


@dataclass(frozen=True)
class RBFSimilaritySpec:
    """RBF feature-similarity target: exp(-||J z_i - J z_j||^2 / (2 tau^2)),
    optionally a nonnegative weighted sum over several bandwidths."""

    map: LinearFeatureMap
    tau: float = 1.0
    weights: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"bandwidth tau must be positive, got {self.tau}")
        if self.weights is not None:
            terms = tuple((float(t), float(w)) for t, w in self.weights)
            if any(t <= 0 for t, _ in terms):
                raise ValueError("all bandwidths must be positive")
            if any(w < 0 for _, w in terms):
                raise ValueError("weights must be nonnegative")
            object.__setattr__(self, "weights", terms)

    def terms(self) -> tuple[tuple[float, float], ...]:
        """(bandwidth, weight) pairs; a bare tau counts with weight one."""
        if self.weights is not None:
            return self.weights
        return ((self.tau, 1.0),)


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n: int

    def to_json_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n": self.n}


@dataclass(frozen=True)
class RBFSimilarityResult:
    mc: MCEstimate
    exact: float

    def to_json_dict(self) -> dict:
        return {"mc": self.mc.to_json_dict(), "exact": self.exact}


def _mean_se(values: np.ndarray) -> MCEstimate:
    n = values.shape[0]
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return MCEstimate(mean, se, n)


def _pairwise_sq_sum(y: np.ndarray) -> np.ndarray:
    # sum_{i<j} ||y_i - y_j||^2 = k sum_i ||y_i||^2 - ||sum_i y_i||^2
    k = y.shape[-2]
    total = y.sum(axis=-2)
    return k * (y**2).sum(axis=(-2, -1)) - (total**2).sum(axis=-1)


def pairwise_separation(batches: Sequence[NoiseBatch], fmap: LinearFeatureMap) -> MCEstimate:
    """Monte Carlo average squared feature separation of sampled galleries:
    (2/(k(k-1))) sum_{i<j} ||J z_i - J z_j||^2, with standard error."""
    if not batches:
        raise ValueError("need at least one batch")
    k, d = batches[0].k, batches[0].d
    if any(b.k != k or b.d != d for b in batches):
        raise ValueError("all batches must share (k, d)")
    if fmap.d != d:
        raise ValueError(f"feature map expects d={fmap.d}, batches have d={d}")
    if k < 2:
        raise ValueError("separation needs k >= 2")
    z = np.stack([b.vectors for b in batches])
    y = z @ fmap.J.T
    per_gallery = _pairwise_sq_sum(y) * (2.0 / (k * (k - 1)))
    return _mean_se(per_gallery)


def separation_bound(k: int, fmap: LinearFeatureMap) -> float:
    """Upper bound (2k/(k-1)) ||J||_F^2 on the average squared separation."""
    if k < 2:
        raise ValueError("separation bound needs k >= 2")
    return 2.0 * k / (k - 1.0) * fmap.frobenius_sq


def _log_kernel_value(gram_eigs: np.ndarray, alpha: float) -> float:
    # det(I + alpha * JJ^T)^(-1/2) through eigenvalues of JJ^T
    return float(np.exp(-0.5 * np.sum(np.log1p(alpha * gram_eigs))))


def rbf_similarity_closed_form(k: int, spec: RBFSimilaritySpec) -> float:
    """Minimum average RBF similarity over Gaussian couplings:
    det(I + (2k/((k-1) tau^2)) J J^T)^(-1/2), weighted over bandwidths."""
    if k < 2:
        raise ValueError("rbf similarity needs k >= 2")
    J = spec.map.J
    gram_eigs = np.clip(np.linalg.eigvalsh(J @ J.T), 0.0, None)
    scale = 2.0 * k / (k - 1.0)
    return sum(
        w * _log_kernel_value(gram_eigs, scale / (tau * tau)) for tau, w in spec.terms()
    )


def _pair_difference_covariances(spec_c: CouplingSpec, fmap: LinearFeatureMap) -> list[np.ndarray]:
    """Cov(J z_i - J z_j) for every pair i < j of a jointly Gaussian spec."""
    J = fmap.J
    k = spec_c.k
    corr = correlation_of(spec_c)
    out = []
    if spec_c.kind is CouplingKind.SUBSPACE:
        b = spec_c.subspace.basis
        p_v = b @ b.T
        p_perp = np.eye(spec_c.d) - p_v
        r_in = corr.on_subspace.entries
        r_out = corr.on_complement.entries
        for i in range(k):
            for j in range(i + 1, k):
                cov_z = 2.0 * (1.0 - r_in[i, j]) * p_v + 2.0 * (1.0 - r_out[i, j]) * p_perp
                out.append(J @ cov_z @ J.T)
    else:
        gram = J @ J.T
        for i in range(k):
            for j in range(i + 1, k):
                out.append(2.0 * (1.0 - corr.entries[i, j]) * gram)
    return out


def _exact_rbf_similarity(spec_c: CouplingSpec, rbf: RBFSimilaritySpec) -> float:
    k = spec_c.k
    pair_covs = _pair_difference_covariances(spec_c, rbf.map)
    total = 0.0
    for tau, w in rbf.terms():
        inv_tau2 = 1.0 / (tau * tau)
        acc = 0.0
        for V in pair_covs:
            eigs = np.clip(np.linalg.eigvalsh(V), 0.0, None)
            acc += _log_kernel_value(eigs, inv_tau2)
        total += w * acc * 2.0 / (k * (k - 1))
    return total


def rbf_similarity_mc(
    spec_c: CouplingSpec,
    rbf: RBFSimilaritySpec,
    stream: RandomStream,
    n: int,
    *,
    chunk_size: int = _CHUNK,
) -> RBFSimilarityResult:
    """Estimate the average RBF feature similarity of the coupling by Monte
    Carlo and compute it exactly via per-pair difference covariances and the
    Gaussian kernel determinant identity."""
    if spec_c.k < 2:
        raise ValueError("rbf similarity needs k >= 2")
    if rbf.map.d != spec_c.d:
        raise ValueError(f"feature map expects d={rbf.map.d}, spec has d={spec_c.d}")
    k = spec_c.k
    terms = rbf.terms()
    values = np.empty(n)
    done = 0
    chunk_index = 0
    while done < n:
        m = min(chunk_size, n - done)
        z = sample_block(spec_c, stream.child(chunk_index), m)
        y = z @ rbf.map.J.T
        acc = np.zeros(m)
        for i in range(k):
            for j in range(i + 1, k):
                sq = ((y[:, i, :] - y[:, j, :]) ** 2).sum(axis=-1)
                for tau, w in terms:
                    acc += w * np.exp(-sq / (2.0 * tau * tau))
        values[done : done + m] = acc * 2.0 / (k * (k - 1))
        done += m
        chunk_index += 1
    return RBFSimilarityResult(mc=_mean_se(values), exact=_exact_rbf_similarity(spec_c, rbf))


def local_linear_prediction(k: int, c: float, fmap: LinearFeatureMap) -> float:
    """Expected pairwise squared output separation of a linear generator under
    pair correlation c: exactly 2 (1 - c) ||J||_F^2."""
    lo, hi = feasible_interval(k)
    if not (lo <= c <= hi):
        raise FeasibilityError(c, k, lo, hi)
    return 2.0 * (1.0 - c) * fmap.frobenius_sq


# ---------------------------------------------------------------------------
# First-order effect of a coupling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EffectReport:
    """Three routes to the coupling effect E_R[H] - E_iid[H], plus the
    remainder diagnostics of the first-order truncation."""

    direct: MCEstimate
    first_order: MCEstimate
    interpolation: MCEstimate
    sum_abs_B: float
    remainder_max_mixed: Optional[float] = None

    @property
    def remainder_bound(self) -> Optional[float]:
        if self.remainder_max_mixed is None:
            return None
        return 0.5 * self.remainder_max_mixed * self.sum_abs_B**2

    def to_json_dict(self) -> dict:
        out = {
            "direct": self.direct.to_json_dict(),
            "first_order": self.first_order.to_json_dict(),
            "interpolation": self.interpolation.to_json_dict(),
            "sum_abs_B": self.sum_abs_B,
        }
        if self.remainder_max_mixed is not None:
            out["remainder"] = {
                "max_mixed_trace": self.remainder_max_mixed,
                "bound": self.remainder_bound,
            }
        return out


def _sym_sqrt_interpolant(R: SampleCorrelation):
    """t -> symmetric square root of (1-t) I + t R (shared eigenvectors)."""
    eigvals, eigvecs = np.linalg.eigh(R.entries)
    eigvals = np.clip(eigvals, 0.0, None)

    def factor(t: float) -> np.ndarray:
        lam = np.sqrt(np.clip((1.0 - t) + t * eigvals, 0.0, None))
        return (eigvecs * lam) @ eigvecs.T

    return factor


def _mixed_trace_value_fd(objective: GalleryObjective, z: np.ndarray, i: int, j: int) -> np.ndarray:
    """D_ij H by second-order central differences of H itself.

    Step per coordinate: cbrt(machine eps) scaled by coordinate magnitude.
    Cost: 4 d batched evaluations.
    """
    d = z.shape[-1]
    out = np.zeros(z.shape[:-2])
    for l in range(d):
        hi = _FD_STEP * np.maximum(1.0, np.abs(z[..., i, l]))
        hj = _FD_STEP * np.maximum(1.0, np.abs(z[..., j, l]))
        vals = []
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            zp = z.copy()
            zp[..., i, l] += si * hi
            zp[..., j, l] += sj * hj
            vals.append(np.asarray(objective.evaluate(zp)))
        out = out + (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * hi * hj)
    return out


def _mixed_trace_grad_fd(objective: GalleryObjective, z: np.ndarray, i: int, j: int) -> np.ndarray:
    """D_ij H as the divergence of grad_i with respect to z_j, one coordinate
    at a time by central differences of the exact gradient."""
    d = z.shape[-1]
    out = np.zeros(z.shape[:-2])
    for l in range(d):
        h = _FD_STEP * np.maximum(1.0, np.abs(z[..., j, l]))
        zp = z.copy()
        zp[..., j, l] += h
        zm = z.copy()
        zm[..., j, l] -= h
        gp = np.asarray(objective.gradient(zp))[..., i, l]
        gm = np.asarray(objective.gradient(zm))[..., i, l]
        out = out + (gp - gm) / (2.0 * h)
    return out


def _mixed_trace_hutchinson(
    objective: GalleryObjective, z: np.ndarray, i: int, j: int, probes: int, rng: np.random.Generator
) -> np.ndarray:
    """Rademacher-probe trace estimate of the mixed Hessian block, using
    finite differences of the exact gradient along each probe."""
    d = z.shape[-1]
    out = np.zeros(z.shape[:-2])
    h = _FD_STEP
    for _ in range(probes):
        v = rng.integers(0, 2, size=d) * 2.0 - 1.0
        zp = z.copy()
        zp[..., j, :] += h * v
        zm = z.copy()
        zm[..., j, :] -= h * v
        gp = np.asarray(objective.gradient(zp))[..., i, :]
        gm = np.asarray(objective.gradient(zm))[..., i, :]
        out = out + ((gp - gm) / (2.0 * h)) @ v
    return out / probes


def _mixed_trace(
    objective: GalleryObjective,
    z: np.ndarray,
    i: int,
    j: int,
    method: str,
    probes: int,
    rng: np.random.Generator,
) -> np.ndarray:
    if method == "exact":
        return np.asarray(objective.mixed_trace(z, i, j))
    if method == "grad_fd":
        return _mixed_trace_grad_fd(objective, z, i, j)
    if method == "value_fd":
        return _mixed_trace_value_fd(objective, z, i, j)
    if method == "hutchinson":
        return _mixed_trace_hutchinson(objective, z, i, j, probes, rng)
    raise ValueError(f"unknown mixed-trace method {method!r}")


def _resolve_trace_method(objective: GalleryObjective, method: str, d: int) -> str:
    if method != "auto":
        if method == "exact" and objective.mixed_trace is None:
            raise ValueError("objective does not expose exact mixed traces")
        return method
    if objective.mixed_trace is not None:
        return "exact"
    if objective.gradient is not None:
        return "grad_fd" if d <= 32 else "hutchinson"
    return "value_fd"


def _weighted_trace_sum(
    objective: GalleryObjective,
    z: np.ndarray,
    B: np.ndarray,
    method: str,
    probes: int,
    rng: np.random.Generator,
) -> np.ndarray:
    k = z.shape[-2]
    out = np.zeros(z.shape[:-2])
    for i in range(k):
        for j in range(i + 1, k):
            if B[i, j] != 0.0:
                out = out + B[i, j] * _mixed_trace(objective, z, i, j, method, probes, rng)
    return out


def coupling_effect_first_order(
    objective: GalleryObjective,
    R: SampleCorrelation,
    d: int,
    stream: RandomStream,
    n: int,
    *,
    quad_nodes: int = 16,
    node_samples: Optional[int] = None,
    trace_samples: Optional[int] = None,
    mixed_trace_method: str = "auto",
    hutchinson_probes: int = 16,
    estimate_remainder: bool = False,
    remainder_samples: int = 200,
    chunk_size: int = _CHUNK,
) -> EffectReport:
    """Measure the effect of coupling R on E[H] three ways.

    (i) direct difference E_R[H] - E_iid[H] with common random numbers,
    (ii) the first-order prediction sum_{i<j} B_ij E_iid[D_ij H], and
    (iii) the exact interpolation integral over t with samples from
    (1-t) I + t R sharing one base normal block across quadrature nodes.

    With ``estimate_remainder`` the report also carries the largest observed
    second-application trace M = max |E_t[D_kl D_ij H]| over the node grid,
    from which ``remainder_bound`` gives (M/2)(sum |B_ij|)^2.
    """
    k = R.k
    if objective.k != k:
        raise ValueError(f"objective arity {objective.k} does not match R size {k}")
    B = R.entries - np.eye(k)
    sum_abs_B = float(np.sum(np.abs(B[np.triu_indices(k, 1)])))
    method = _resolve_trace_method(objective, mixed_trace_method, d)
    trace_rng = np.random.default_rng(stream.seed ^ 0x5EED)
    factor = _sym_sqrt_interpolant(R)
    A_full = factor(1.0)

    # (i) direct difference, common random numbers between the two laws
    diffs = np.empty(n)
    done, chunk_index = 0, 0
    while done < n:
        m = min(chunk_size, n - done)
        u = sample_block(CouplingSpec.independent(k, d), stream.child(chunk_index), m)
        z = np.matmul(A_full, u)
        diffs[done : done + m] = np.asarray(objective.evaluate(z)) - np.asarray(
            objective.evaluate(u)
        )
        done += m
        chunk_index += 1
    direct = _mean_se(diffs)

    # (ii) first-order prediction under independent sampling
    n_trace = trace_samples if trace_samples is not None else n
    trace_vals = np.empty(n_trace)
    done, chunk_index = 0, 0
    while done < n_trace:
        m = min(chunk_size, n_trace - done)
        u = sample_block(
            CouplingSpec.independent(k, d), stream.child(1_000_000 + chunk_index), m
        )
        trace_vals[done : done + m] = _weighted_trace_sum(
            objective, u, B, method, hutchinson_probes, trace_rng
        )
        done += m
        chunk_index += 1
    first_order = _mean_se(trace_vals)

    # (iii) interpolation integral with common random numbers across nodes
    n_node = node_samples if node_samples is not None else n
    n_node = min(n_node, n)
    base = sample_block(
        CouplingSpec.independent(k, d), stream.child(2_000_000), n_node
    )
    nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
    nodes = (nodes + 1.0) / 2.0
    weights = weights / 2.0
    integral = 0.0
    se_linear = 0.0
    remainder_max = 0.0 if estimate_remainder else None
    for t, w in zip(nodes, weights):
        z_t = np.matmul(factor(float(t)), base)
        vals = _weighted_trace_sum(objective, z_t, B, method, hutchinson_probes, trace_rng)
        est = _mean_se(vals)
        integral += w * est.estimate
        se_linear += w * est.stderr
        if estimate_remainder:
            z_small = z_t[:remainder_samples]
            for i in range(k):
                for j in range(i + 1, k):
                    for p in range(k):
                        for q in range(p + 1, k):
                            second = _mixed_trace_value_fd(
                                _trace_as_objective(objective, i, j, method, hutchinson_probes, trace_rng),
                                z_small,
                                p,
                                q,
                            )
                            remainder_max = max(remainder_max, abs(float(second.mean())))
    interpolation = MCEstimate(float(integral), float(se_linear), n_node)

    return EffectReport(
        direct=direct,
        first_order=first_order,
        interpolation=interpolation,
        sum_abs_B=sum_abs_B,
        remainder_max_mixed=remainder_max,
    )


def _trace_as_objective(
    objective: GalleryObjective, i: int, j: int, method: str, probes: int, rng
) -> GalleryObjective:
    """View Z -> D_ij H(Z) as a scalar gallery function so the mixed-trace
    machinery can be applied a second time."""

    def evaluate(z):
        return _mixed_trace(objective, np.asarray(z), i, j, method, probes, rng)

    return GalleryObjective(
        k=objective.k, evaluate=evaluate, gradient=None, maximize=True, m=objective.m
    )
