"""Coupling optimization at toy-generator scale.

Two modes:

- ``optimize_coupling``: amortized learning of the k x r coupling matrix by
  projected stochastic gradient on the row-normalized sphere.  Basis noises
  are mixed through the matrix, pushed through a deterministic generator,
  scored by a gallery objective, and the gradient flows back through the
  generator's exact vector-Jacobian product.  After every step each row is
  renormalized to unit length, which preserves the standard-normal marginals
  of the induced coupling.

- ``refine_noise``: constrained refinement of one realized batch.  Only a
  chosen subset of noise coordinates is updated (gradient descent on a masked
  fidelity loss, or ascent on a gallery objective); the frozen complement is
  never written, so its realized values and any distributional identities it
  carries survive bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import CouplingError, CouplingMatrix, NoiseBatch
from .generators import GalleryObjective, GeneratorOracle
from .samplers import RandomStream

__all__ = [
    "DivergenceError",
    "AmortizedConfig",
    "RefineConfig",
    "TrajectoryPoint",
    "optimize_coupling",
    "refine_noise",
    "write_trajectory",
    "read_trajectory",
]


class DivergenceError(CouplingError):
    """Objective estimate became non-finite during optimization."""


@dataclass(frozen=True)
class AmortizedConfig:
    """Settings for amortized coupling-matrix optimization.

    ``maximize`` defaults to the objective's own direction.  ``crn_steps``
    reuses the same basis noises for that many consecutive steps (1 = fresh
    noise every step).  ``cosine_decay`` anneals the step size to zero over
    the run, which settles the stochastic iterates near the optimum.

    Initialization: ``identity_rows`` starts at the independent coupling in
    the canonical basis.  ``random_rows`` starts at a random point of the
    constraint set; with r >= k it draws random orthonormal rows, which also
    realize the independent coupling but in a random basis.  That choice
    keeps recovery tasks well-posed for objectives whose expectation depends
    on the matrix only through the sum of pair correlations: such objectives
    are flat along an optimal manifold, and a start with a generic non-trivial
    correlation would bias which optimum the iterates reach.
    """

    k: int
    r: int
    objective: GalleryObjective
    generator: GeneratorOracle
    d: int
    maximize: Optional[bool] = None
    steps: int = 500
    step_size: float = 0.01
    mc_batch: int = 4096
    seed: int = 0
    init: str = "identity_rows"
    cosine_decay: bool = True
    crn_steps: int = 1

    def __post_init__(self):
        if self.k < 2 or self.r < 1:
            raise ValueError(f"need k >= 2 and r >= 1, got k={self.k}, r={self.r}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.mc_batch < 1:
            raise ValueError("mc_batch must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.init not in ("identity_rows", "random_rows"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "identity_rows" and self.r < self.k:
            raise ValueError("identity_rows init needs r >= k")
        if self.objective.k != self.k:
            raise ValueError("objective arity must equal k")
        if self.generator.d != self.d:
            raise ValueError("generator input dimension must equal d")
        if self.crn_steps < 1:
            raise ValueError("crn_steps must be >= 1")

    @property
    def direction(self) -> float:
        maximize = self.objective.maximize if self.maximize is None else self.maximize
        return 1.0 if maximize else -1.0


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    objective_estimate: float
    matrix: CouplingMatrix


def _initial_rows(cfg: AmortizedConfig) -> np.ndarray:
    if cfg.init == "identity_rows":
        A = np.zeros((cfg.k, cfg.r))
        A[:, : cfg.k] = np.eye(cfg.k)
        return A
    rng = np.random.default_rng(cfg.seed)
    if cfg.r >= cfg.k:
        q, _ = np.linalg.qr(rng.standard_normal((cfg.r, cfg.r)))
        return q[: cfg.k, :].copy()
    A = rng.standard_normal((cfg.k, cfg.r))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def _mc_objective(A, U, generator, objective) -> float:
    z = np.matmul(A, U)
    return float(np.mean(np.asarray(objective.evaluate(generator.evaluate(z)))))


def _mc_gradient(A, U, generator, objective) -> np.ndarray:
    """Gradient of the Monte Carlo objective mean with respect to A."""
    z = np.matmul(A, U)
    x = generator.evaluate(z)
    g_x = np.asarray(objective.gradient(x))
    g_z = np.asarray(generator.vjp(z, g_x))
    return np.einsum("bkd,brd->kr", g_z, U) / U.shape[0]


def optimize_coupling(cfg: AmortizedConfig) -> list[TrajectoryPoint]:
    """Projected stochastic gradient ascent/descent on the row sphere.

    Returns the full trajectory; entry s holds the matrix after s updates and
    the objective estimate evaluated at it.  Every recorded matrix satisfies
    the unit-row constraint to 1e-9.
    """
    A = _initial_rows(cfg)
    trajectory: list[TrajectoryPoint] = []
    U = None
    for step in range(cfg.steps + 1):
        if step % cfg.crn_steps == 0 or U is None:
            g = RandomStream(cfg.seed, step // cfg.crn_steps).generator()
            U = g.standard_normal((cfg.mc_batch, cfg.r, cfg.d))
        estimate = _mc_objective(A, U, cfg.generator, cfg.objective)
        if not np.isfinite(estimate):
            raise DivergenceError(f"objective estimate non-finite at step {step}")
        trajectory.append(
            TrajectoryPoint(step=step, objective_estimate=estimate, matrix=CouplingMatrix(A))
        )
        if step == cfg.steps:
            break
        lr = cfg.step_size
        if cfg.cosine_decay:
            lr *= 0.5 * (1.0 + np.cos(np.pi * step / max(cfg.steps, 1)))
        grad = _mc_gradient(A, U, cfg.generator, cfg.objective)
        A = A + cfg.direction * lr * grad
        norms = np.linalg.norm(A, axis=1, keepdims=True)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0):
            raise DivergenceError(f"matrix rows degenerated at step {step}")
        A = A / norms
    return trajectory


@dataclass(frozen=True)
class RefineConfig:
    """Settings for constrained refinement of a realized batch.

    ``optimize_coords`` selects the noise coordinates allowed to move; the
    complement stays frozen bitwise.  Fidelity mode (``target`` given) runs
    gradient descent on sum_i ||mask * (G(z_i) - target)||^2 where ``mask``
    selects ``target_coords`` of the output (all outputs when None).
    Objective mode (``objective`` given) follows the gallery objective's
    direction instead; an empty frozen set then recovers unconstrained direct
    noise optimization.
    """

    generator: GeneratorOracle
    optimize_coords: tuple[int, ...]
    steps: int
    step_size: float
    target: Optional[np.ndarray] = None
    target_coords: Optional[tuple[int, ...]] = None
    objective: Optional[GalleryObjective] = None
    maximize: Optional[bool] = None

    def __post_init__(self):
        coords = tuple(int(c) for c in self.optimize_coords)
        if len(set(coords)) != len(coords):
            raise ValueError("optimize_coords contains duplicates")
        if any(c < 0 or c >= self.generator.d for c in coords):
            raise ValueError("optimize_coords out of range for the generator dimension")
        object.__setattr__(self, "optimize_coords", coords)
        if (self.target is None) == (self.objective is None):
            raise ValueError("exactly one of target / objective must be given")
        if self.target is not None:
            t = np.array(self.target, dtype=np.float64)
            if t.shape != (self.generator.m,):
                raise ValueError(
                    f"target shape {t.shape} does not match generator output {self.generator.m}"
                )
            t.flags.writeable = False
            object.__setattr__(self, "target", t)
            if self.target_coords is not None:
                tc = tuple(int(c) for c in self.target_coords)
                if any(c < 0 or c >= self.generator.m for c in tc):
                    raise ValueError("target_coords out of range for the generator output")
                object.__setattr__(self, "target_coords", tc)
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def refine_noise(
    initial: NoiseBatch,
    cfg: RefineConfig,
    on_step: Optional[Callable[[int, np.ndarray], None]] = None,
) -> NoiseBatch:
    """Refine the optimized coordinates of a realized batch; freeze the rest.

    Returns a new batch flagged ``refined``; with no steps or no optimizable
    coordinates the initial batch is returned unchanged.
    """
    if cfg.generator.d != initial.d:
        raise ValueError("generator dimension does not match the batch")
    if cfg.steps == 0 or not cfg.optimize_coords:
        return initial
    opt = np.asarray(cfg.optimize_coords, dtype=np.intp)
    z = np.array(initial.vectors, dtype=np.float64, copy=True)
    mask = None
    if cfg.target is not None:
        mask = np.zeros(cfg.generator.m)
        if cfg.target_coords is None:
            mask[:] = 1.0
        else:
            mask[np.asarray(cfg.target_coords, dtype=np.intp)] = 1.0
    if cfg.objective is not None:
        maximize = cfg.objective.maximize if cfg.maximize is None else cfg.maximize
        direction = 1.0 if maximize else -1.0
    for step in range(cfg.steps):
        x = cfg.generator.evaluate(z)
        if cfg.target is not None:
            residual = mask * (x - cfg.target)
            value = float(np.sum(residual**2))
            g_z = cfg.generator.vjp(z, 2.0 * residual)
            update = -cfg.step_size * g_z
        else:
            value = float(cfg.objective.evaluate(x))
            g_z = cfg.generator.vjp(z, np.asarray(cfg.objective.gradient(x)))
            update = direction * cfg.step_size * g_z
        if not np.isfinite(value):
            raise DivergenceError(f"refinement loss non-finite at step {step}")
        z[:, opt] += update[:, opt]
        if on_step is not None:
            on_step(step, z)
    return NoiseBatch(
        vectors=z,
        spec=initial.spec,
        seed=initial.seed,
        stream_id=initial.stream_id,
        refined=True,
    )


def write_trajectory(points: Sequence[TrajectoryPoint], path) -> None:
    """Serialize a trajectory as JSON lines: step, objective, flattened matrix."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            record = {
                "step": p.step,
                "objective": p.objective_estimate,
                "k": p.matrix.k,
                "r": p.matrix.r,
                "matrix": p.matrix.entries.ravel().tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def read_trajectory(path) -> list[TrajectoryPoint]:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            entries = np.asarray(rec["matrix"]).reshape(rec["k"], rec["r"])
            points.append(
                TrajectoryPoint(
                    step=rec["step"],
                    objective_estimate=rec["objective"],
                    matrix=CouplingMatrix(entries),
                )
            )
    return points
