"""Exact GP regression on a single data block.

Fitting factorizes the noisy kernel matrix once with an escalating jitter
ladder; the stored Cholesky factor backs both the marginal likelihood and
all predictions, so nothing is re-factorized per test point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalBreakdown
from .kernel import Hyperparams, kernel_matrix, kernel_matrix_grads

# Jitter ladder: 0, then 1e-10 * mean(diag), escalating by 10x up to 1e-2 * mean(diag).
_JITTER_START = 1e-10
_JITTER_STOP = 1e-2
_VARIANCE_GUARD = 1.0 - 1e-10


def chol_with_jitter(A: np.ndarray, expert_index: int | None = None,
                     test_index: int | None = None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter*I``, escalating jitter on failure.

    Returns (L, jitter_used). Raises :class:`NumericalBreakdown` with the
    attempted ladder if the largest jitter still fails.
    """
    if not np.all(np.isfinite(A)):
        raise NumericalBreakdown("matrix contains non-finite entries",
                                 jitters_tried=[], expert_index=expert_index,
                                 test_index=test_index)
    scale = float(np.mean(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jitters = [0.0]
    j = _JITTER_START * scale
    while j <= _JITTER_STOP * scale * (1.0 + 1e-12):
        jitters.append(j)
        j *= 10.0
    for jitter in jitters:
        try:
            L = np.linalg.cholesky(A if jitter == 0.0 else A + jitter * np.eye(A.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalBreakdown(
        f"Cholesky factorization failed after jitter ladder up to {jitters[-1]:.3e}",
        jitters_tried=jitters, expert_index=expert_index, test_index=test_index,
    )


@dataclass(frozen=True)
class GPModel:
    """One trained GP expert: data view, Cholesky factor and weight vector.

    ``chol @ chol.T`` reconstructs ``K + (noise_variance + jitter_used) * I``
    and ``weight_vector`` solves that system against ``y``.
    """

    X: np.ndarray
    y: np.ndarray
    hp: Hyperparams
    chol: np.ndarray
    weight_vector: np.ndarray
    jitter_used: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fit(X: np.ndarray, y: np.ndarray, hp: Hyperparams,
        expert_index: int | None = None) -> GPModel:
    """Fit an exact GP: factorize ``K + noise*I`` and precompute the weight vector."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y row counts differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite entries")
    K = kernel_matrix(X, X, hp)
    C = K + hp.noise_variance * np.eye(X.shape[0])
    L, jitter = chol_with_jitter(C, expert_index=expert_index)
    alpha = cho_solve((L, True), y)
    return GPModel(X=X, y=y, hp=hp, chol=L, weight_vector=alpha, jitter_used=jitter)


def nlml(X: np.ndarray, y: np.ndarray, hp: Hyperparams,
         expert_index: int | None = None) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient w.r.t. all log coordinates.

    Value is ``0.5 * y' C^-1 y + sum(log diag chol) + (n/2) log 2pi`` with
    ``C = K + noise*I``; the gradient uses the trace identity
    ``0.5 * tr((C^-1 - a a') dC)`` with ``a = C^-1 y``, in the canonical
    coordinate order (output scale, lengthscales, noise).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    K = kernel_matrix(X, X, hp)
    C = K + hp.noise_variance * np.eye(n)
    L, _ = chol_with_jitter(C, expert_index=expert_index)
    alpha = cho_solve((L, True), y)
    value = (0.5 * float(y @ alpha)
             + float(np.sum(np.log(np.diag(L))))
             + 0.5 * n * np.log(2.0 * np.pi))

    Cinv = cho_solve((L, True), np.eye(n))
    A = Cinv - np.outer(alpha, alpha)
    grads = np.empty(hp.n_params)
    dKs = kernel_matrix_grads(X, hp)
    for j, dK in enumerate(dKs):
        grads[j] = 0.5 * float(np.sum(A * dK))
    # noise enters as 2*noise_variance*I on the noisy matrix
    grads[-1] = hp.noise_variance * float(np.trace(A))
    return value, grads


def predict(model: GPModel, Xstar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and noisy-observation variance at test inputs.

    Variances include observation noise, so each lies in
    ``(noise_variance, output_variance + noise_variance]`` up to jitter;
    round-off dips are clamped at ``noise_variance * (1 - 1e-10)``.
    """
    if not isinstance(model, GPModel):
        raise ValueError("predict requires a fitted GPModel")
    hp = model.hp
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    Kstar = kernel_matrix(model.X, Xstar, hp)
    means = Kstar.T @ model.weight_vector
    V = solve_triangular(model.chol, Kstar, lower=True)
    variances = hp.output_variance - np.sum(V * V, axis=0) + hp.noise_variance
    floor = hp.noise_variance * _VARIANCE_GUARD
    return means, np.maximum(variances, floor)
