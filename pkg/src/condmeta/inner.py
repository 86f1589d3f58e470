"""Within-task algorithms ``A(theta, Z)``.

Two learners are provided, both pulling the task weights toward a bias
vector ``theta``:

* ``solve_batch`` -- the minimizer of the biased regularized empirical risk
  ``R_Z(w) + lam/2 ||w - theta||^2``;
* ``solve_online`` -- one pass of online gradient descent on that same
  objective started at ``theta`` (fine-tuning), returning the average of the
  iterates.

The ``*_many`` helpers run the same computation for a stack of ``G`` biases
and regularization values at once; the single-task functions are thin
wrappers around them so both paths share one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ABSOLUTE,
    Dataset,
    DimensionError,
    EmptyDataError,
    Loss,
    NumericInputError,
    ParameterError,
    loss_eval,
)

@dataclass(frozen=True)
class InnerConfig:
    lam: float
    mode: str = "batch"
    batch_max_iters: int = 2000
    batch_tol: float = 1e-9

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if self.mode not in ("batch", "online"):
            raise ParameterError(f"unknown inner mode {self.mode!r}")
        if self.batch_max_iters < 1:
            raise ParameterError("batch_max_iters must be >= 1")
        if not self.batch_tol > 0:
            raise ParameterError("batch_tol must be > 0")


@dataclass(frozen=True, eq=False)
class InnerResult:
    """``w_out`` is the official output; ``w_last`` is the last online iterate
    ``w_{n+1}`` (equal to ``w_out`` in batch mode)."""

    w_out: np.ndarray
    w_last: np.ndarray
    objective: float


def regularized_objective(w, data: Dataset, theta, loss: Loss, lam: float) -> float:
    """``R_Z(w) + lam/2 ||w - theta||^2``."""
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    w = np.asarray(w, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return loss_eval(loss, w, data) + 0.5 * lam * float(np.sum((w - theta) ** 2))


def _objective_many(W, X, y, Theta, lam, loss: Loss) -> np.ndarray:
    R = np.mean(loss.value(W @ X.T, y), axis=1)
    return R + 0.5 * lam * np.sum((W - Theta) ** 2, axis=1)


def _check(data: Dataset, Theta: np.ndarray):
    if data.n == 0:
        raise EmptyDataError("inner algorithm needs at least one datapoint")
    if Theta.shape[-1] != data.d:
        raise DimensionError(f"theta has dimension {Theta.shape[-1]}, data has {data.d}")
    data.check_finite()
    if not np.all(np.isfinite(Theta)):
        raise NumericInputError("non-finite bias vector")


def online_many(data: Dataset, Theta, lam, loss: Loss):
    """Online gradient descent for ``G`` biases at once.

    ``Theta`` has shape ``(G, d)`` and ``lam`` shape ``(G,)`` (or scalar).
    Returns ``(W_avg, W_last)``, both ``(G, d)``: the mean of ``w_1..w_n`` and
    the post-update iterate ``w_{n+1}``.
    """
    Theta = np.atleast_2d(np.asarray(Theta, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), Theta.shape[:1])
    if np.any(lam <= 0):
        raise ParameterError("lambda must be > 0")
    _check(data, Theta)
    X, y = data.inputs, data.outputs
    lam_col = lam[:, None]
    W = Theta.copy()
    acc = np.zeros_like(W)
    for i in range(data.n):
        acc += W
        s = loss.subgradient(W @ X[i], y[i])
        W = W - (s[:, None] * X[i] + lam_col * (W - Theta)) / (lam_col * (i + 1))
    return acc / data.n, W


def _squared_many(data: Dataset, Theta, lam):
    X, y = data.inputs, data.outputs
    n, d = X.shape
    C = X.T @ X / n
    r = X.T @ y / n
    out = np.empty_like(Theta)
    for g in range(Theta.shape[0]):
        out[g] = np.linalg.solve(C + lam[g] * np.eye(d), r + lam[g] * Theta[g])
    return out


def _dual_ascent_many(data: Dataset, Theta, lam, max_sweeps: int, tol: float):
    # Absolute loss. Dual of the regularized risk over alpha in [-1, 1]^n:
    #   D(alpha) = alpha.(X theta - y)/n - ||X^T alpha||^2 / (2 lam n^2),
    #   w(alpha) = theta - X^T alpha / (lam n).
    # Exact cyclic coordinate ascent; each row stops once its duality gap,
    # an upper bound on the primal suboptimality, is <= tol.
    X, y = data.inputs, data.outputs
    n = data.n
    sq = np.sum(X * X, axis=1)
    lam_n = lam * n
    margin = Theta @ X.T - y
    alpha = np.zeros_like(margin)
    V = np.zeros_like(Theta)
    active = np.ones(Theta.shape[0], dtype=bool)
    W = Theta.copy()
    for _ in range(max_sweeps):
        for i in range(n):
            if sq[i] == 0.0:
                new = -np.sign(y[i]) * np.ones(alpha.shape[0])
            else:
                v_rest = V - alpha[:, i : i + 1] * X[i]
                new = np.clip((lam_n * margin[:, i] - v_rest @ X[i]) / sq[i], -1.0, 1.0)
            new = np.where(active, new, alpha[:, i])
            V += (new - alpha[:, i])[:, None] * X[i]
            alpha[:, i] = new
        W = Theta - V / lam_n[:, None]
        primal = _objective_many(W, X, y, Theta, lam, ABSOLUTE)
        dual = np.sum(alpha * margin, axis=1) / n - np.sum(V * V, axis=1) / (2 * lam_n * n)
        active &= (primal - dual) > tol
        if not active.any():
            break
    return W


def batch_many(
    data: Dataset, Theta, lam, loss: Loss, max_iters: int = 2000, tol: float = 1e-9
):
    """Biased regularized ERM for ``G`` biases at once; returns ``(G, d)``."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), Theta.shape[:1])
    if np.any(lam <= 0):
        raise ParameterError("lambda must be > 0")
    _check(data, Theta)
    if loss.kind == "squared":
        return _squared_many(data, Theta, lam)
    return _dual_ascent_many(data, Theta, lam, max_iters, tol)


def solve_batch(data: Dataset, theta, loss: Loss, cfg: InnerConfig) -> InnerResult:
    """Minimize ``R_Z(w) + lam/2 ||w - theta||^2``.

    Squared loss uses the closed form
    ``(X^T X / n + lam I)^{-1} (X^T y / n + lam theta)``. The absolute loss
    runs cyclic coordinate ascent on the box-constrained dual for at most
    ``cfg.batch_max_iters`` sweeps, stopping once the duality gap is below
    ``cfg.batch_tol``; the returned point is then within ``batch_tol`` of the
    optimal objective value.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    w = batch_many(data, theta[None], cfg.lam, loss, cfg.batch_max_iters, cfg.batch_tol)[0]
    return InnerResult(w, w, regularized_objective(w, data, theta, loss, cfg.lam))


def solve_online(data: Dataset, theta, loss: Loss, lam: float) -> InnerResult:
    """Fine-tuning: online gradient descent on the regularized risk.

    ``w_1 = theta`` and
    ``w_{i+1} = w_i - (s_i x_i + lam (w_i - theta)) / (lam i)`` with
    ``s_i`` a subgradient of the loss at ``<x_i, w_i>``. Points are visited
    in the given order. ``w_out`` is the mean of ``w_1..w_n`` and ``w_last``
    is ``w_{n+1}``.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    w_avg, w_last = online_many(data, theta[None], lam, loss)
    return InnerResult(
        w_avg[0], w_last[0], regularized_objective(w_avg[0], data, theta, loss, lam)
    )


def run_inner(data: Dataset, theta, loss: Loss, cfg: InnerConfig) -> InnerResult:
    if cfg.mode == "online":
        return solve_online(data, theta, loss, cfg.lam)
    return solve_batch(data, theta, loss, cfg)
