"""Deterministic differentiable stand-in generators and gallery objectives.

A generator maps one noise vector z in R^d to an output x in R^m and exposes
an exact vector-Jacobian product, so optimization and analysis can be checked
against closed forms instead of a real diffusion model.  A gallery objective
scores all k outputs of a gallery jointly and exposes exact gradients.

All callables are vectorized over leading batch axes: ``evaluate`` accepts
``(..., d)`` and returns ``(..., m)``; objectives accept ``(..., k, m)`` and
return ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "GeneratorOracle",
    "GalleryObjective",
    "make_linear",
    "make_random_feature",
    "make_brightness_surrogate",
    "objective_pairwise_l2",
    "objective_rbf",
    "objective_brightness_cluster",
    "noise_objective",
]


@dataclass(frozen=True)
class GeneratorOracle:
    """Deterministic map z -> x with exact reverse-mode derivative.

    ``vjp(z, u)`` returns J(z)^T u for the Jacobian J(z) of ``evaluate`` at z.
    ``jacobian``, when present, returns the full (..., m, d) Jacobian and
    enables exact mixed-derivative computations downstream.
    """

    d: int
    m: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    context: str = ""
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class GalleryObjective:
    """Scalar score of k gallery outputs with exact gradient.

    ``maximize`` records the intended optimization direction.
    ``cross_hessian_scalar``, when set, asserts that the mixed second
    derivative between two distinct gallery members is the constant multiple
    s * I_m of the identity; quadratic pairwise objectives have this form and
    it unlocks exact mixed-trace computations.  ``mixed_trace(X, i, j)``,
    when set, returns sum_l d^2 H / dx_{i,l} dx_{j,l} at X.
    """

    k: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    maximize: bool
    m: Optional[int] = None
    cross_hessian_scalar: Optional[float] = None
    mixed_trace: Optional[Callable[[np.ndarray, int, int], np.ndarray]] = None


def make_linear(J: np.ndarray, a: np.ndarray | None = None, context: str = "linear") -> GeneratorOracle:
    """Generator x = a + J z with constant Jacobian J (m x d)."""
    J = np.array(J, dtype=np.float64)
    if J.ndim != 2:
        raise ValueError(f"J must be a matrix, got shape {J.shape}")
    m, d = J.shape
    if a is None:
        a = np.zeros(m)
    a = np.array(a, dtype=np.float64)
    if a.shape != (m,):
        raise ValueError(f"offset shape {a.shape} does not match J rows {m}")

    def evaluate(z):
        return np.asarray(z) @ J.T + a

    def vjp(z, u):
        return np.asarray(u) @ J

    def jacobian(z):
        z = np.asarray(z)
        return np.broadcast_to(J, z.shape[:-1] + (m, d)).copy()

    return GeneratorOracle(d=d, m=m, evaluate=evaluate, vjp=vjp, context=context, jacobian=jacobian)


def make_random_feature(
    seed: int, d: int, m: int, width: int, activation: str = "tanh"
) -> GeneratorOracle:
    """Nonlinear surrogate x = W2 tanh(W1 z + b) / sqrt(width).

    Weights are fixed draws from the given seed, so evaluation is bitwise
    reproducible.  tanh keeps outputs and all derivatives globally bounded.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    if activation != "tanh":
        raise ValueError(f"unsupported activation {activation!r}")
    rng = np.random.default_rng(seed)
    W1 = rng.standard_normal((width, d))
    b = rng.standard_normal(width)
    W2 = rng.standard_normal((m, width))
    scale = 1.0 / np.sqrt(width)

    def evaluate(z):
        return np.tanh(np.asarray(z) @ W1.T + b) @ W2.T * scale

    def vjp(z, u):
        t = np.tanh(np.asarray(z) @ W1.T + b)
        return ((np.asarray(u) @ W2) * (1.0 - t**2)) @ W1 * scale

    def jacobian(z):
        t = np.tanh(np.asarray(z) @ W1.T + b)
        # (..., m, d) = W2[m,w] * (1 - t^2)[..., w] * W1[w, d]
        return np.einsum("mw,...w,wd->...md", W2, 1.0 - t**2, W1) * scale

    return GeneratorOracle(
        d=d, m=m, evaluate=evaluate, vjp=vjp, context=f"random_feature[{seed}]", jacobian=jacobian
    )


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def make_brightness_surrogate(seed: int, d: int) -> GeneratorOracle:
    """Scalar "brightness" b(z) = sigmoid(w^T z / sqrt(d)) in (0, 1).

    The direction w is a fixed draw from the seed.  Stands in for a per-image
    scalar statistic; satisfies b(-z) = 1 - b(z).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    scale = 1.0 / np.sqrt(d)

    def evaluate(z):
        s = np.asarray(z) @ w * scale
        return _sigmoid(s)[..., None]

    def vjp(z, u):
        s = np.asarray(z) @ w * scale
        sig = _sigmoid(s)
        return (np.asarray(u)[..., 0] * sig * (1.0 - sig))[..., None] * (w * scale)

    def jacobian(z):
        s = np.asarray(z) @ w * scale
        sig = _sigmoid(s)
        return (sig * (1.0 - sig))[..., None, None] * (w * scale)

    return GeneratorOracle(
        d=d, m=1, evaluate=evaluate, vjp=vjp, context=f"brightness[{seed}]", jacobian=jacobian
    )


def objective_pairwise_l2(k: int, average: bool = True) -> GalleryObjective:
    """Pairwise squared distance of the gallery, maximized for diversity.

    With ``average`` the score is (2/(k(k-1))) sum_{i<j} ||x_i - x_j||^2,
    otherwise the raw sum.  Computed through the identity
    sum_{i<j} ||x_i - x_j||^2 = k sum_i ||x_i||^2 - ||sum_i x_i||^2.
    """
    if k < 2:
        raise ValueError(f"pairwise objective needs k >= 2, got {k}")
    w = 2.0 / (k * (k - 1)) if average else 1.0

    def evaluate(xs):
        xs = np.asarray(xs)
        total = xs.sum(axis=-2)
        return w * (k * (xs**2).sum(axis=(-2, -1)) - (total**2).sum(axis=-1))

    def gradient(xs):
        xs = np.asarray(xs)
        total = xs.sum(axis=-2, keepdims=True)
        return w * (2.0 * k * xs - 2.0 * total)

    def mixed_trace(xs, i, j):
        xs = np.asarray(xs)
        m = xs.shape[-1]
        return np.full(xs.shape[:-2], -2.0 * w * m)

    return GalleryObjective(
        k=k,
        evaluate=evaluate,
        gradient=gradient,
        maximize=True,
        cross_hessian_scalar=-2.0 * w,
        mixed_trace=mixed_trace,
    )


def objective_rbf(k: int, tau: float) -> GalleryObjective:
    """Average RBF similarity of the gallery, minimized for diversity:
    (2/(k(k-1))) sum_{i<j} exp(-||x_i - x_j||^2 / (2 tau^2))."""
    if k < 2:
        raise ValueError(f"rbf objective needs k >= 2, got {k}")
    if tau <= 0:
        raise ValueError(f"bandwidth must be positive, got {tau}")
    w = 2.0 / (k * (k - 1))
    inv = 1.0 / (2.0 * tau * tau)

    def evaluate(xs):
        xs = np.asarray(xs)
        out = np.zeros(xs.shape[:-2])
        for i in range(k):
            for j in range(i + 1, k):
                sq = ((xs[..., i, :] - xs[..., j, :]) ** 2).sum(axis=-1)
                out = out + np.exp(-sq * inv)
        return w * out

    def gradient(xs):
        xs = np.asarray(xs)
        grad = np.zeros_like(xs)
        for i in range(k):
            for j in range(i + 1, k):
                diff = xs[..., i, :] - xs[..., j, :]
                kern = np.exp(-(diff**2).sum(axis=-1) * inv)
                pull = (kern * 2.0 * inv)[..., None] * diff
                grad[..., i, :] -= pull
                grad[..., j, :] += pull
        return w * grad

    return GalleryObjective(k=k, evaluate=evaluate, gradient=gradient, maximize=False)


def _smooth_abs(x, eps):
    return np.sqrt(x * x + eps * eps)


def _smooth_abs_grad(x, eps):
    return x / np.sqrt(x * x + eps * eps)


def objective_brightness_cluster(lam: float, k: int = 4, eps: float = 1e-3) -> GalleryObjective:
    """Bright--dark split score for a four-sample gallery of scalar outputs.

    |(b1+b2)/2 - (b3+b4)/2| + lam * (|b1-b2| + |b3-b4|) / 2, with the absolute
    value smoothed as sqrt(x^2 + eps^2) so the gradient is exact everywhere;
    the smoothed score stays within eps of the piecewise-linear one.  The
    first term rewards separating the (1,2) pair from the (3,4) pair; the
    second weakly resists collapse within each pair.
    """
    if k != 4:
        raise ValueError(f"brightness cluster objective requires k=4, got {k}")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")

    def evaluate(xs):
        b = np.asarray(xs)[..., 0]
        gap = (b[..., 0] + b[..., 1] - b[..., 2] - b[..., 3]) / 2.0
        within = (_smooth_abs(b[..., 0] - b[..., 1], eps) + _smooth_abs(b[..., 2] - b[..., 3], eps)) / 2.0
        return _smooth_abs(gap, eps) + lam * within

    def gradient(xs):
        xs = np.asarray(xs)
        b = xs[..., 0]
        grad_b = np.zeros_like(b)
        gap = (b[..., 0] + b[..., 1] - b[..., 2] - b[..., 3]) / 2.0
        g_gap = _smooth_abs_grad(gap, eps) / 2.0
        grad_b[..., 0] += g_gap
        grad_b[..., 1] += g_gap
        grad_b[..., 2] -= g_gap
        grad_b[..., 3] -= g_gap
        g12 = lam * _smooth_abs_grad(b[..., 0] - b[..., 1], eps) / 2.0
        g34 = lam * _smooth_abs_grad(b[..., 2] - b[..., 3], eps) / 2.0
        grad_b[..., 0] += g12
        grad_b[..., 1] -= g12
        grad_b[..., 2] += g34
        grad_b[..., 3] -= g34
        return grad_b[..., None]

    return GalleryObjective(k=4, evaluate=evaluate, gradient=gradient, maximize=True, m=1)


def noise_objective(objective: GalleryObjective, generator: GeneratorOracle | None = None) -> GalleryObjective:
    """View a gallery objective as a function of the noise matrix Z.

    With a generator the score is H(G(z_1), ..., G(z_k)); without one the
    outputs are the noises themselves.  Exact mixed traces survive the
    composition whenever the objective's cross-Hessian is the constant
    s * I_m and the generator exposes its full Jacobian:
    sum_l d^2 H / dz_{i,l} dz_{j,l} = s * <J(z_i), J(z_j)>_F.
    """
    if generator is None:

        def mixed_trace_direct(zs, i, j):
            if objective.mixed_trace is None:
                raise ValueError("objective does not expose exact mixed traces")
            return objective.mixed_trace(zs, i, j)

        return GalleryObjective(
            k=objective.k,
            evaluate=objective.evaluate,
            gradient=objective.gradient,
            maximize=objective.maximize,
            m=objective.m,
            cross_hessian_scalar=objective.cross_hessian_scalar,
            mixed_trace=objective.mixed_trace,
        )

    def evaluate(zs):
        return objective.evaluate(generator.evaluate(np.asarray(zs)))

    def gradient(zs):
        zs = np.asarray(zs)
        xs = generator.evaluate(zs)
        return generator.vjp(zs, objective.gradient(xs))

    mixed = None
    if objective.cross_hessian_scalar is not None and generator.jacobian is not None:
        s = objective.cross_hessian_scalar

        def mixed(zs, i, j):
            zs = np.asarray(zs)
            Ji = generator.jacobian(zs[..., i, :])
            Jj = generator.jacobian(zs[..., j, :])
            return s * np.einsum("...md,...md->...", Ji, Jj)

    return GalleryObjective(
        k=objective.k,
        evaluate=evaluate,
        gradient=gradient,
        maximize=objective.maximize,
        m=generator.d,
        mixed_trace=mixed,
    )
