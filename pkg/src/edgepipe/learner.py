"""Ridge-regression loss machinery.

Per-sample loss: l(w, x, y) = (w.x - y)^2 + (lam/N) ||w||^2, where N is the
full training-set size. N stays frozen even when averaging over a subset, so
l is one fixed function per experiment and the weighted decomposition of the
full empirical loss into delivered/undelivered parts holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Sample
from .errors import ConfigurationError, DataError, NumericalConditionError


@dataclass(frozen=True)
class LossSpec:
    """Regularization coefficient and the (frozen) training-set size."""

    lam: float
    N: int

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be non-negative, got {self.lam}")
        if self.N < 1:
            raise ConfigurationError(f"N must be positive, got {self.N}")

    @property
    def reg(self) -> float:
        return self.lam / self.N


def _check_dims(w: np.ndarray, x: np.ndarray) -> None:
    if w.shape != x.shape:
        raise DataError(f"dimension mismatch: w has shape {w.shape}, x has {x.shape}")


def point_loss(w: np.ndarray, s: Sample, spec: LossSpec) -> float:
    w = np.asarray(w, dtype=np.float64)
    _check_dims(w, s.x)
    r = float(w @ s.x) - s.y
    return r * r + spec.reg * float(w @ w)


def point_gradient(w: np.ndarray, s: Sample, spec: LossSpec) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    _check_dims(w, s.x)
    r = float(w @ s.x) - s.y
    return 2.0 * r * s.x + (2.0 * spec.reg) * w


def sgd_step(w: np.ndarray, s: Sample, alpha: float, spec: LossSpec) -> np.ndarray:
    if alpha <= 0:
        raise ConfigurationError(f"step size must be positive, got {alpha}")
    return w - alpha * point_gradient(w, s, spec)


def subset_loss(w: np.ndarray, subset, spec: LossSpec) -> float:
    """Mean per-sample loss over the given (non-empty) subset."""
    data = Dataset.coerce(subset)
    if len(data) == 0:
        raise DataError("subset loss is undefined on an empty subset")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (data.dim,):
        raise DataError(f"w has shape {w.shape}, data dimension is {data.dim}")
    r = data.X @ w - data.y
    return float(r @ r) / len(data) + spec.reg * float(w @ w)


def mean_gradient(w: np.ndarray, subset, spec: LossSpec) -> np.ndarray:
    """Gradient of subset_loss at w."""
    data = Dataset.coerce(subset)
    if len(data) == 0:
        raise DataError("gradient undefined on an empty subset")
    w = np.asarray(w, dtype=np.float64)
    r = data.X @ w - data.y
    return (2.0 / len(data)) * (data.X.T @ r) + (2.0 * spec.reg) * w


def solve_erm(dataset, spec: LossSpec) -> tuple[np.ndarray, float]:
    """Exact minimizer of the full empirical loss via the normal equations.

    Minimizes (1/n) sum (w.x - y)^2 + (lam/N) ||w||^2 over the dataset, i.e.
    solves (X'X + (n*lam/N) I) w = X'y. Requires lam > 0 or full-rank X.
    """
    data = Dataset.coerce(dataset)
    if len(data) == 0:
        raise DataError("cannot solve ERM on an empty dataset")
    n = len(data)
    A = data.X.T @ data.X + (n * spec.reg) * np.eye(data.dim)
    b = data.X.T @ data.y
    try:
        # Cholesky rejects singular/indefinite systems that plain solve may
        # silently "solve" with garbage.
        L = np.linalg.cholesky(A)
        w = np.linalg.solve(L.T, np.linalg.solve(L, b))
    except np.linalg.LinAlgError as exc:
        raise NumericalConditionError(
            "normal equations are singular; set lambda > 0 to regularize"
        ) from exc
    g = mean_gradient(w, data, spec)
    g0 = mean_gradient(np.zeros(data.dim), data, spec)
    if np.linalg.norm(g) > 1e-8 * (1.0 + np.linalg.norm(g0)):
        raise NumericalConditionError(
            "normal-equation solve failed the gradient-norm check; "
            "system is ill-conditioned (try lambda > 0)"
        )
    return w, subset_loss(w, data, spec)


def hessian(dataset, spec: LossSpec) -> np.ndarray:
    """Hessian of the mean loss: (2/n) X'X + (2 lam/N) I. Constant in w."""
    data = Dataset.coerce(dataset)
    n = len(data)
    return (2.0 / n) * (data.X.T @ data.X) + (2.0 * spec.reg) * np.eye(data.dim)


def _power_extreme_eigs(H: np.ndarray, iters: int = 500, tol: float = 1e-12) -> tuple[float, float]:
    """Largest/smallest eigenvalues of a symmetric PSD matrix by power and
    inverse iteration (used only above the dense-solve size threshold)."""
    d = H.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lmax = 0.0
    for _ in range(iters):
        u = H @ v
        nu = np.linalg.norm(u)
        if nu == 0:
            break
        u /= nu
        if np.linalg.norm(u - v) < tol:
            v = u
            break
        v = u
    lmax = float(v @ H @ v)
    # inverse iteration on a slightly shifted system for the smallest eigenvalue
    shift = 1e-12 * max(lmax, 1.0)
    F = np.linalg.cholesky(H + shift * np.eye(d))
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        u = np.linalg.solve(F.T, np.linalg.solve(F, v))
        u /= np.linalg.norm(u)
        if np.linalg.norm(u - v) < tol or np.linalg.norm(u + v) < tol:
            v = u
            break
        v = u
    lmin = float(v @ H @ v)
    return lmax, lmin


def estimate_smoothness_constants(dataset, spec: LossSpec, dense_max_dim: int = 64) -> tuple[float, float]:
    """Smoothness constant L and curvature constant c of the mean loss:
    the largest and smallest eigenvalues of its (constant) Hessian."""
    H = hessian(dataset, spec)
    if H.shape[0] <= dense_max_dim:
        eigs = np.linalg.eigvalsh(H)
        return float(eigs[-1]), float(eigs[0])
    lmax, lmin = _power_extreme_eigs(H)
    return lmax, lmin


@dataclass(frozen=True)
class NoiseEstimate:
    """Gradient-noise certificate: variance bound V[grad] <= M + M_V ||grad of
    the mean loss||^2, with M_V pinned to 0 and M the max probe variance."""

    M: float
    M_V: float
    per_probe: tuple[tuple[float, float], ...]  # (variance, ||mean grad||^2)


def estimate_noise_constants(dataset, spec: LossSpec, probes) -> NoiseEstimate:
    """Measure the per-sample gradient variance at each probe point.

    The variance is exact over the dataset (uniform sampling), computed as
    E||g||^2 - ||E g||^2. The returned certificate fixes M_V = 0 and takes
    M as the max variance over probes.
    """
    data = Dataset.coerce(dataset)
    probes = [np.asarray(p, dtype=np.float64) for p in probes]
    if not probes:
        raise ConfigurationError("at least one probe point is required")
    pairs = []
    for w in probes:
        r = data.X @ w - data.y
        G = 2.0 * r[:, None] * data.X + (2.0 * spec.reg) * w  # (n, d) per-sample grads
        gbar = G.mean(axis=0)
        var = float((G * G).sum(axis=1).mean() - gbar @ gbar)
        pairs.append((max(var, 0.0), float(gbar @ gbar)))
    M = max(v for v, _ in pairs)
    return NoiseEstimate(M=M, M_V=0.0, per_probe=tuple(pairs))
