"""Exact Gaussian-process regression with an RBF kernel.

Used as the black-box attack surrogate (inputs are perturbation vectors,
targets are negated PE values) and as the GP-regression baseline policy's
predictor.  The kernel is k(v, v') = exp(-(l/2) * ||v - v'||^2) with the
scale parameter l as a multiplier, and l = 1.0 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

DEFAULT_LENGTHSCALE = 1.0
DEFAULT_NOISE_VAR = 1e-4


class GprError(ValueError):
    pass


@dataclass
class GprModel:
    """Fitted posterior state; immutable after fit()."""

    inputs: np.ndarray          # (n, d)
    targets: np.ndarray         # (n,)
    lengthscale: float
    noise_var: float
    chol_lower: np.ndarray      # L with L L^T = K + noise_var I, (n, n)
    alpha: np.ndarray           # (K + noise_var I)^-1 targets, (n,)

    @property
    def n_points(self) -> int:
        return int(self.inputs.shape[0])


def rbf_kernel(v: np.ndarray, w: np.ndarray, lengthscale: float = DEFAULT_LENGTHSCALE) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise GprError(f"dimension mismatch: {v.shape} vs {w.shape}")
    return float(np.exp(-(lengthscale / 2.0) * np.sum((v - w) ** 2)))


def _kernel_matrix(A: np.ndarray, B: np.ndarray, lengthscale: float) -> np.ndarray:
    sq = (np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :]
          - 2.0 * A @ B.T)
    return np.exp(-(lengthscale / 2.0) * np.maximum(sq, 0.0))


def fit(inputs, targets, lengthscale: float = DEFAULT_LENGTHSCALE,
        noise_var: float = DEFAULT_NOISE_VAR) -> GprModel:
    """Builds and factorizes K + noise_var I; an empty fit yields the prior."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float)) if len(inputs) else np.empty((0, 0))
    y = np.asarray(targets, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise GprError(f"{X.shape[0]} inputs vs {y.shape[0]} targets")
    if X.shape[0] == 0:
        return GprModel(inputs=X, targets=y, lengthscale=lengthscale,
                        noise_var=noise_var,
                        chol_lower=np.empty((0, 0)), alpha=np.empty(0))
    K = _kernel_matrix(X, X, lengthscale)
    K[np.diag_indices_from(K)] += noise_var
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise GprError(
            "kernel matrix not positive definite; duplicate inputs with too "
            "little noise_var jitter -- increase noise_var") from exc
    alpha = cho_solve((L, True), y)
    return GprModel(inputs=X, targets=y, lengthscale=lengthscale,
                    noise_var=noise_var, chol_lower=L, alpha=alpha)


def posterior(m: GprModel, v) -> tuple[float, float]:
    """Posterior (mean, variance) at one query point; prior is (0, 1)."""
    mean, var = posterior_batch(m, np.atleast_2d(np.asarray(v, dtype=float)))
    return float(mean[0]), float(var[0])


def posterior_batch(m: GprModel, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over query rows; variance clamped at 0."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if m.n_points == 0:
        return np.zeros(V.shape[0]), np.ones(V.shape[0])
    if V.shape[1] != m.inputs.shape[1]:
        raise GprError(f"query dim {V.shape[1]} != model dim {m.inputs.shape[1]}")
    Kx = _kernel_matrix(V, m.inputs, m.lengthscale)          # (q, n)
    mean = Kx @ m.alpha
    W = solve_triangular(m.chol_lower, Kx.T, lower=True)     # (n, q)
    # k(v, v) = 1 for the RBF kernel.
    var = np.maximum(1.0 - np.sum(W**2, axis=0), 0.0)
    return mean, var


def refit_with(m: GprModel, v, target: float) -> GprModel:
    """Append one observation and re-factorize (t stays small here)."""
    v = np.asarray(v, dtype=float)[None, :]
    if m.n_points == 0:
        X, y = v, np.array([target])
    else:
        X = np.vstack([m.inputs, v])
        y = np.append(m.targets, target)
    return fit(X, y, m.lengthscale, m.noise_var)
