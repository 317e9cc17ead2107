"""Domain types and exact correlation algebra for Gaussian noise couplings.

A coupling of a batch of k noise vectors in R^d is a joint distribution under
which every vector is marginally N(0, I_d) while the dependence across the
batch is chosen by design.  For the jointly Gaussian couplings handled here
the whole design is captured by a k x k sample-level correlation matrix R with
unit diagonal: Cov(z_i, z_j) = R[i, j] * I_d.

Conventions used throughout the package:

- ``k``   gallery size (number of coupled vectors)
- ``d``   ambient noise dimension
- ``c``   common off-diagonal correlation of an equicorrelated coupling,
          feasible iff -1/(k-1) <= c <= 1
- ``A``   a k x r matrix with unit-norm rows; z_i = sum_l A[i, l] u_l with
          i.i.d. standard-normal basis vectors u_l realizes the coupling with
          sample correlation R = A A^T

This module is pure: all types are immutable after construction and all
operations are deterministic functions of their inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "CouplingError",
    "FeasibilityError",
    "NotPSDError",
    "RankError",
    "CouplingKind",
    "CouplingMatrix",
    "SampleCorrelation",
    "SubspaceSpec",
    "CouplingSpec",
    "NoiseBatch",
    "SubspaceCorrelation",
    "feasible_interval",
    "equicorrelated_matrix",
    "correlation_of",
    "factor_correlation",
]

# Tolerances fixed by the package contracts.
ROW_NORM_TOL = 1e-9     # unit-row check on coupling matrices
PSD_EIG_TOL = 1e-8      # smallest eigenvalue allowed below zero
ORTHONORMAL_TOL = 1e-8  # basis^T basis == I check for subspaces
RANK_EIG_TOL = 1e-8     # eigenvalues above this count toward numerical rank
REPULSIVE_SUM_TOL = 1e-6  # scaled by sqrt(k*d); row-sum identity of repulsive batches


class CouplingError(Exception):
    """Base class for all coupling-domain errors."""


class FeasibilityError(CouplingError):
    """Requested equicorrelation lies outside the valid interval.

    Carries the closed interval ``[lower, upper]`` of feasible values.
    """

    def __init__(self, c: float, k: int, lower: float, upper: float):
        self.c = float(c)
        self.k = int(k)
        self.lower = float(lower)
        self.upper = float(upper)
        super().__init__(
            f"equicorrelation c={c:g} infeasible for k={k}; "
            f"valid interval [{lower:g}, {upper:g}]"
        )

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lower, self.upper)


class NotPSDError(CouplingError):
    """Matrix fails the positive-semidefinite check (min eigenvalue < -1e-8)."""


class RankError(CouplingError):
    """Numerical rank of a correlation matrix exceeds the requested factor width."""


class CouplingKind(str, enum.Enum):
    IDENTICAL = "identical"
    INDEPENDENT = "independent"
    ANTITHETIC = "antithetic"
    EQUICORRELATED = "equicorrelated"
    REPULSIVE = "repulsive"
    MATRIX = "matrix"
    SUBSPACE = "subspace"


def _readonly(a: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.flags.writeable = False
    return out


def feasible_interval(k: int) -> tuple[float, float]:
    """Closed interval of feasible equicorrelation values for gallery size k."""
    if k < 2:
        raise ValueError(f"gallery size must be >= 2, got {k}")
    return (-1.0 / (k - 1), 1.0)


@dataclass(frozen=True)
class CouplingMatrix:
    """A k x r real matrix with unit Euclidean norm on every row.

    Mixing i.i.d. standard-normal basis vectors with such a matrix preserves
    the standard-normal marginal of every output vector, so any unit-row
    matrix is a valid coupling parameter.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ValueError(f"coupling matrix must be 2-D, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("coupling matrix contains non-finite entries")
        norms_sq = np.sum(e * e, axis=1)
        worst = float(np.max(np.abs(norms_sq - 1.0)))
        if worst > ROW_NORM_TOL * 10:  # |n^2 - 1| ~ 2|n - 1| near 1
            raise ValueError(
                f"rows must have unit norm within {ROW_NORM_TOL}; "
                f"max |row_norm^2 - 1| = {worst:.3e}"
            )
        object.__setattr__(self, "entries", _readonly(e))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def r(self) -> int:
        return self.entries.shape[1]

    def correlation(self) -> "SampleCorrelation":
        """Sample correlation A A^T realized by this matrix."""
        return SampleCorrelation(self.entries @ self.entries.T)


@dataclass(frozen=True)
class SampleCorrelation:
    """Symmetric PSD k x k matrix with unit diagonal: the sample-level law.

    Entry (i, j) is the scalar rho with Cov(z_i, z_j) = rho * I_d.  Input is
    canonicalized (symmetrized, diagonal pinned to 1) after a tolerance check;
    positive semidefiniteness is enforced down to eigenvalue -1e-8.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"correlation must be square, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("correlation contains non-finite entries")
        if float(np.max(np.abs(e - e.T))) > ORTHONORMAL_TOL:
            raise ValueError("correlation matrix is not symmetric")
        if float(np.max(np.abs(np.diag(e) - 1.0))) > ORTHONORMAL_TOL:
            raise ValueError("correlation diagonal must be 1")
        e = (e + e.T) / 2.0
        np.fill_diagonal(e, 1.0)
        min_eig = float(np.linalg.eigvalsh(e)[0])
        if min_eig < -PSD_EIG_TOL:
            raise NotPSDError(
                f"correlation is not PSD: min eigenvalue {min_eig:.3e} < -{PSD_EIG_TOL}"
            )
        object.__setattr__(self, "entries", _readonly(e))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, idx):
        return self.entries[idx]


@dataclass(frozen=True)
class SubspaceSpec:
    """Couple selectively on span(basis) and independently choose the law on
    its orthogonal complement.

    ``basis`` is d x s with orthonormal columns.  ``inner`` and ``outer`` are
    full coupling specs (same k and ambient d as the parent) whose kinds must
    not themselves be subspace couplings; only their joint law matters, the
    sampled vectors are projected onto V and V-perp respectively before being
    summed.  Orthogonality of the two parts keeps every composed vector
    marginally N(0, I_d).
    """

    basis: np.ndarray
    inner: "CouplingSpec"
    outer: "CouplingSpec"

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] < 1 or b.shape[1] > b.shape[0]:
            raise ValueError(f"basis must be d x s with 1 <= s <= d, got {b.shape}")
        gram = b.T @ b
        if float(np.max(np.abs(gram - np.eye(b.shape[1])))) > ORTHONORMAL_TOL:
            raise ValueError("basis columns are not orthonormal")
        for name, part in (("inner", self.inner), ("outer", self.outer)):
            if part.kind is CouplingKind.SUBSPACE:
                raise ValueError(f"{name} coupling of a subspace spec must not nest subspaces")
        if self.inner.k != self.outer.k or self.inner.d != self.outer.d:
            raise ValueError("inner and outer couplings must share (k, d)")
        if self.inner.d != b.shape[0]:
            raise ValueError(
                f"inner/outer dimension {self.inner.d} does not match basis rows {b.shape[0]}"
            )
        object.__setattr__(self, "basis", _readonly(b))

    @property
    def s(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class CouplingSpec:
    """Declarative description of a noise coupling: kind, sizes, parameters.

    Sufficient to sample from (``samplers.sample``) and to derive the implied
    sample correlation (``correlation_of``).
    """

    kind: CouplingKind
    k: int
    d: int
    c: float | None = None
    matrix: CouplingMatrix | None = None
    subspace: SubspaceSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CouplingKind(self.kind))
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        kind = self.kind
        if kind is CouplingKind.ANTITHETIC and self.k != 2:
            raise ValueError(f"antithetic coupling requires k=2, got k={self.k}")
        if kind is CouplingKind.REPULSIVE and self.k < 2:
            raise ValueError(f"repulsive coupling requires k>=2, got k={self.k}")
        if kind is CouplingKind.EQUICORRELATED:
            if self.c is None:
                raise ValueError("equicorrelated coupling requires the parameter c")
            lo, hi = feasible_interval(self.k)
            if not (lo <= self.c <= hi):
                raise FeasibilityError(self.c, self.k, lo, hi)
        elif self.c is not None:
            raise ValueError(f"parameter c is only valid for equicorrelated kind, not {kind.value}")
        if kind is CouplingKind.MATRIX:
            if self.matrix is None:
                raise ValueError("matrix coupling requires a CouplingMatrix")
            if self.matrix.k != self.k:
                raise ValueError(
                    f"coupling matrix has {self.matrix.k} rows, spec has k={self.k}"
                )
        elif self.matrix is not None:
            raise ValueError("matrix parameter is only valid for matrix kind")
        if kind is CouplingKind.SUBSPACE:
            if self.subspace is None:
                raise ValueError("subspace coupling requires a SubspaceSpec")
            if self.subspace.inner.k != self.k or self.subspace.inner.d != self.d:
                raise ValueError("subspace inner/outer (k, d) must match the parent spec")
        elif self.subspace is not None:
            raise ValueError("subspace parameter is only valid for subspace kind")

    # -- convenience constructors ------------------------------------------

    @classmethod
    def identical(cls, k: int, d: int) -> "CouplingSpec":
        return cls(CouplingKind.IDENTICAL, k, d)

    @classmethod
    def independent(cls, k: int, d: int) -> "CouplingSpec":
        return cls(CouplingKind.INDEPENDENT, k, d)

    @classmethod
    def antithetic(cls, d: int) -> "CouplingSpec":
        return cls(CouplingKind.ANTITHETIC, 2, d)

    @classmethod
    def repulsive(cls, k: int, d: int) -> "CouplingSpec":
        return cls(CouplingKind.REPULSIVE, k, d)

    @classmethod
    def equicorrelated(cls, k: int, d: int, c: float) -> "CouplingSpec":
        return cls(CouplingKind.EQUICORRELATED, k, d, c=float(c))

    @classmethod
    def from_matrix(cls, matrix: CouplingMatrix, d: int) -> "CouplingSpec":
        return cls(CouplingKind.MATRIX, matrix.k, d, matrix=matrix)

    @classmethod
    def on_subspace(
        cls, basis: np.ndarray, inner: "CouplingSpec", outer: "CouplingSpec"
    ) -> "CouplingSpec":
        sub = SubspaceSpec(basis=np.asarray(basis), inner=inner, outer=outer)
        return cls(CouplingKind.SUBSPACE, inner.k, inner.d, subspace=sub)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        """Plain-JSON representation; floats round-trip exactly."""
        out: dict = {"kind": self.kind.value, "k": self.k, "d": self.d}
        if self.kind is CouplingKind.EQUICORRELATED:
            out["c"] = self.c
        elif self.kind is CouplingKind.MATRIX:
            out["entries"] = self.matrix.entries.tolist()
        elif self.kind is CouplingKind.SUBSPACE:
            sub = self.subspace
            out["basis"] = sub.basis.tolist()
            out["inner"] = sub.inner.to_json_dict()
            out["outer"] = sub.outer.to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "CouplingSpec":
        kind = CouplingKind(data["kind"])
        k, d = int(data["k"]), int(data["d"])
        if kind is CouplingKind.EQUICORRELATED:
            return cls.equicorrelated(k, d, float(data["c"]))
        if kind is CouplingKind.MATRIX:
            return cls.from_matrix(CouplingMatrix(np.asarray(data["entries"])), d)
        if kind is CouplingKind.SUBSPACE:
            inner = cls.from_json_dict(data["inner"])
            outer = cls.from_json_dict(data["outer"])
            return cls.on_subspace(np.asarray(data["basis"]), inner, outer)
        return cls(kind, k, d)


@dataclass(frozen=True)
class NoiseBatch:
    """A realized coupled sample: k rows of length d plus its provenance.

    ``refined`` marks batches whose realized values were post-optimized, in
    which case distributional identities of the originating spec (such as the
    exact zero row-sum of repulsive batches) no longer apply and are skipped.
    """

    vectors: np.ndarray
    spec: CouplingSpec
    seed: int
    stream_id: int = 0
    refined: bool = False

    def __post_init__(self):
        v = np.asarray(self.vectors)
        if v.shape != (self.spec.k, self.spec.d):
            raise ValueError(
                f"vectors shape {v.shape} does not match spec (k={self.spec.k}, d={self.spec.d})"
            )
        v = np.array(v, copy=True, order="C")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        if self.spec.kind is CouplingKind.REPULSIVE and not self.refined:
            total = np.sum(np.asarray(v, dtype=np.float64), axis=0)
            bound = REPULSIVE_SUM_TOL * np.sqrt(self.spec.k * self.spec.d)
            if float(np.linalg.norm(total)) > bound:
                raise ValueError(
                    f"repulsive batch violates the zero row-sum identity: "
                    f"|sum| = {float(np.linalg.norm(total)):.3e} > {bound:.3e}"
                )

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def d(self) -> int:
        return self.spec.d


@dataclass(frozen=True)
class SubspaceCorrelation:
    """Pair of sample correlations, one per orthogonal component.

    The full (k*d)^2 covariance of a subspace coupling is block-separable, so
    it is reported as the correlation on V and on V-perp instead of a single
    flat matrix.  ``blended()`` gives the dimension-weighted full-vector
    correlation (1/d) * E<z_i, z_j> implied by the pair.
    """

    on_subspace: SampleCorrelation
    on_complement: SampleCorrelation
    subspace_dim: int
    ambient_dim: int

    def blended(self) -> SampleCorrelation:
        s, d = self.subspace_dim, self.ambient_dim
        mixed = (s * self.on_subspace.entries + (d - s) * self.on_complement.entries) / d
        return SampleCorrelation(mixed)


def equicorrelated_matrix(k: int, c: float) -> SampleCorrelation:
    """Correlation matrix with 1 on the diagonal and c everywhere else.

    Feasible iff -1/(k-1) <= c <= 1: the matrix (1-c)I + c 11^T has eigenvalue
    1-c with multiplicity k-1 and 1+(k-1)c with multiplicity one, so both
    endpoints are exactly singular.

    Raises
    ------
    FeasibilityError
        If c lies outside the feasible interval; carries the interval.
    """
    lo, hi = feasible_interval(k)
    c = float(c)
    if not (lo <= c <= hi):
        raise FeasibilityError(c, k, lo, hi)
    entries = np.full((k, k), c, dtype=np.float64)
    np.fill_diagonal(entries, 1.0)
    return SampleCorrelation(entries)


def correlation_of(spec: CouplingSpec) -> Union[SampleCorrelation, SubspaceCorrelation]:
    """Sample correlation implied by a coupling spec.

    Subspace specs return a :class:`SubspaceCorrelation` pair; every other
    kind returns the k x k :class:`SampleCorrelation` directly.
    """
    kind, k = spec.kind, spec.k
    if kind is CouplingKind.IDENTICAL:
        return SampleCorrelation(np.ones((k, k)))
    if kind is CouplingKind.INDEPENDENT:
        return SampleCorrelation(np.eye(k))
    if kind is CouplingKind.ANTITHETIC:
        return SampleCorrelation(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    if kind is CouplingKind.REPULSIVE:
        return equicorrelated_matrix(k, -1.0 / (k - 1))
    if kind is CouplingKind.EQUICORRELATED:
        return equicorrelated_matrix(k, spec.c)
    if kind is CouplingKind.MATRIX:
        return spec.matrix.correlation()
    if kind is CouplingKind.SUBSPACE:
        sub = spec.subspace
        return SubspaceCorrelation(
            on_subspace=_plain_correlation(sub.inner),
            on_complement=_plain_correlation(sub.outer),
            subspace_dim=sub.s,
            ambient_dim=spec.d,
        )
    raise ValueError(f"unknown coupling kind {kind!r}")


def _plain_correlation(spec: CouplingSpec) -> SampleCorrelation:
    corr = correlation_of(spec)
    assert isinstance(corr, SampleCorrelation)
    return corr


def effective_correlation(spec: CouplingSpec) -> SampleCorrelation:
    """Full-vector correlation (1/d) * E<z_i, z_j> for any spec.

    Identical to ``correlation_of`` except that subspace specs are blended
    into a single matrix.
    """
    corr = correlation_of(spec)
    if isinstance(corr, SubspaceCorrelation):
        return corr.blended()
    return corr


def factor_correlation(R: SampleCorrelation, r: int) -> CouplingMatrix:
    """Factor R = A A^T with A of shape k x r and unit-norm rows.

    Uses symmetric eigendecomposition with eigenvalues clamped at zero, never
    Cholesky: boundary couplings are exactly singular.  Deterministic output:
    columns are ordered by descending eigenvalue, each column's sign makes its
    first nonzero entry positive, and rank-deficient factors are padded with
    zero columns up to width r.

    Raises
    ------
    RankError
        If the numerical rank of R (eigenvalues above 1e-8) exceeds r.
    NotPSDError
        If the smallest eigenvalue of R falls below -1e-8.
    """
    if r < 1:
        raise ValueError(f"factor width r must be positive, got {r}")
    e = R.entries
    k = e.shape[0]
    eigvals, eigvecs = np.linalg.eigh(e)
    if float(eigvals[0]) < -PSD_EIG_TOL:
        raise NotPSDError(
            f"correlation is not PSD: min eigenvalue {float(eigvals[0]):.3e}"
        )
    order = np.argsort(-eigvals, kind="stable")
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    rank = int(np.sum(eigvals > RANK_EIG_TOL))
    if rank > r:
        raise RankError(
            f"correlation has numerical rank {rank} > requested factor width r={r}"
        )
    cols = eigvecs[:, :rank] * np.sqrt(eigvals[:rank])
    # Sign convention: first entry of each column with magnitude above noise
    # level is made positive.
    for j in range(rank):
        col = cols[:, j]
        nonzero = np.nonzero(np.abs(col) > 1e-12)[0]
        if nonzero.size and col[nonzero[0]] < 0:
            cols[:, j] = -col
    A = np.zeros((k, r), dtype=np.float64)
    A[:, :rank] = cols
    # Rows carry norm sqrt(R_ii) = 1 up to the clamped eigenvalue mass; pin
    # them to exactly unit norm (relative adjustment <= ~1e-8).
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms <= 0):
        raise NotPSDError("correlation produced a zero factor row")
    A /= norms[:, None]
    return CouplingMatrix(A)
