"""Meta-learning a linear conditioning function by SGD on the surrogate loss.

The surrogate meta-loss of a task with side information ``s`` and data ``Z``
is the regularized risk reached by the inner algorithm started from the
bias ``theta = M Phi(s) + b``::

    L(M, b) = R_Z^lam(A(theta, Z))

It is convex in ``(M, b)`` and its gradient is the rank-one matrix
``-lam (A(theta, Z) - theta) (Phi(s), 1)^T``. :func:`train_meta` runs
constant-step SGD on it from ``(0, 0)`` and returns the average iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import (
    ABSOLUTE,
    ConditioningParams,
    Dataset,
    Loss,
    ParameterError,
    SideInfo,
    TaskInstance,
    apply_tau,
)
from .features import FeatureMap, zero_map
from .inner import InnerConfig, batch_many, online_many, regularized_objective, run_inner

INNER_MODES = ("batch", "online")


class InsufficientTasksError(ValueError):
    """The task stream ran out before the iteration budget."""


def _phi(side, feature_map: Optional[FeatureMap]) -> np.ndarray:
    if feature_map is None:
        return np.asarray(side, dtype=np.float64).reshape(-1)
    return feature_map(side)


def _inner_point(data: Dataset, theta, loss: Loss, lam: float, inner_mode: str) -> np.ndarray:
    # the point where the surrogate and its gradient are taken: the batch
    # minimizer, or the last online iterate w_{n+1} in fine-tuning mode
    if inner_mode not in INNER_MODES:
        raise ParameterError(f"unknown inner mode {inner_mode!r}")
    res = run_inner(data, theta, loss, InnerConfig(lam, inner_mode))
    return res.w_last


def surrogate_loss(
    params: ConditioningParams,
    side,
    data: Dataset,
    loss: Loss,
    lam: float,
    inner_mode: str = "batch",
    feature_map: Optional[FeatureMap] = None,
) -> float:
    """``R_Z^lam`` at the inner algorithm's output for ``theta = tau(s)``.

    ``side`` is a :class:`SideInfo` when ``feature_map`` is given, otherwise
    the already computed feature vector ``Phi(s)``.
    """
    theta = apply_tau(params, _phi(side, feature_map))
    w = _inner_point(data, theta, loss, lam, inner_mode)
    return regularized_objective(w, data, theta, loss, lam)


def meta_gradient(
    params: ConditioningParams,
    side,
    data: Dataset,
    loss: Loss,
    lam: float,
    feature_map: Optional[FeatureMap] = None,
    inner_mode: str = "batch",
):
    """Return ``(G_M, g_b)`` with ``g_b = -lam (w - theta)`` and
    ``G_M = g_b Phi(s)^T``."""
    phi = _phi(side, feature_map)
    theta = apply_tau(params, phi)
    w = _inner_point(data, theta, loss, lam, inner_mode)
    g_b = -lam * (w - theta)
    return np.outer(g_b, phi), g_b


@dataclass(frozen=True)
class MetaConfig:
    gamma: float
    lam: float
    inner_mode: str = "online"
    T: int = 1
    feature_map: FeatureMap = field(default_factory=zero_map)
    loss: Loss = ABSOLUTE

    def __post_init__(self):
        # gamma == 0 is allowed: it pins (M, b) at zero, i.e. independent task learning
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if not self.lam > 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if self.inner_mode not in INNER_MODES:
            raise ParameterError(f"unknown inner mode {self.inner_mode!r}")
        if self.T < 1:
            raise ParameterError("T must be >= 1")


@dataclass(frozen=True, eq=False)
class MetaTrainResult:
    avg_params: ConditioningParams
    last_params: ConditioningParams
    feature_map: FeatureMap
    lam: float
    gamma: float
    trajectory: Optional[List[float]] = None

    def predict(self, side: SideInfo) -> np.ndarray:
        """Bias for a new task from the averaged parameters."""
        return apply_tau(self.avg_params, self.feature_map(side))

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "feature_map": self.feature_map.to_dict(),
            "lambda": self.lam,
            "gamma": self.gamma,
            "M": self.avg_params.M.tolist(),
            "b": self.avg_params.b.tolist(),
            "M_last": self.last_params.M.tolist(),
            "b_last": self.last_params.b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetaTrainResult":
        fmap = FeatureMap.from_dict(data["feature_map"])
        d = len(data["b"])
        return cls(
            ConditioningParams(np.array(data["M"]).reshape(d, fmap.k), data["b"]),
            ConditioningParams(np.array(data["M_last"]).reshape(d, fmap.k), data["b_last"]),
            fmap,
            float(data["lambda"]),
            float(data["gamma"]),
        )


Callback = Callable[..., None]


def train_meta(
    task_stream: Sequence[TaskInstance],
    cfg: MetaConfig,
    track: bool = False,
    callback: Optional[Callback] = None,
) -> MetaTrainResult:
    """SGD over ``(M, b)`` on the surrogate loss, one task per step.

    Starts from ``M_1 = 0, b_1 = 0`` and returns the mean of the iterates
    ``(M_t, b_t)`` for ``t = 1..T``. ``callback(t, M, b, phi, theta, G_M,
    g_b, task)`` is invoked at every step before the update. With
    ``track=True`` the surrogate loss of each iterate on its own task is
    recorded in ``trajectory``.
    """
    fmap = cfg.feature_map
    it = iter(task_stream)
    tasks = []
    for _ in range(cfg.T):
        try:
            tasks.append(next(it))
        except StopIteration:
            raise InsufficientTasksError(
                f"stream exhausted after {len(tasks)} tasks, T={cfg.T}"
            ) from None
    d, k = tasks[0].d, fmap.k
    M = np.zeros((d, k))
    b = np.zeros(d)
    M_sum = np.zeros((d, k))
    b_sum = np.zeros(d)
    traj = [] if track else None
    for t, task in enumerate(tasks, start=1):
        M_sum += M
        b_sum += b
        phi = fmap(task.side)
        theta = M @ phi + b
        w = _inner_point(task.train, theta, cfg.loss, cfg.lam, cfg.inner_mode)
        g_b = -cfg.lam * (w - theta)
        G_M = np.outer(g_b, phi)
        if track:
            traj.append(regularized_objective(w, task.train, theta, cfg.loss, cfg.lam))
        if callback is not None:
            callback(t, M, b, phi, theta, G_M, g_b, task)
        M = M - cfg.gamma * G_M
        b = b - cfg.gamma * g_b
    avg = ConditioningParams(M_sum / cfg.T, b_sum / cfg.T)
    return MetaTrainResult(avg, ConditioningParams(M, b), fmap, cfg.lam, cfg.gamma, traj)


@dataclass(frozen=True, eq=False)
class GridTrainResult:
    """Averaged parameters of ``G`` independent SGD runs, at each checkpoint.

    ``M_avg`` has shape ``(C, G, d, k)`` and ``b_avg`` shape ``(C, G, d)``.
    """

    checkpoints: tuple
    M_avg: np.ndarray
    b_avg: np.ndarray


def train_meta_grid(
    phis: np.ndarray,
    datasets: Sequence[Dataset],
    lams,
    gammas,
    loss: Loss = ABSOLUTE,
    inner_mode: str = "online",
    checkpoints: Optional[Sequence[int]] = None,
) -> GridTrainResult:
    """Run :func:`train_meta` for ``G`` hyperparameter pairs in lock-step.

    ``phis`` holds the precomputed ``Phi(s_t)`` rows (shape ``(T, k)``) of the
    shared task stream. Each pair ``(lams[g], gammas[g])`` follows exactly the
    single-run recursion; stacking them only vectorizes the arithmetic.
    """
    phis = np.asarray(phis, dtype=np.float64)
    T = len(datasets)
    if phis.shape[0] != T:
        raise ParameterError("one feature row per task required")
    lams = np.asarray(lams, dtype=np.float64).reshape(-1)
    gammas = np.asarray(gammas, dtype=np.float64).reshape(-1)
    if lams.shape != gammas.shape:
        raise ParameterError("lams and gammas must have equal length")
    if np.any(lams <= 0) or np.any(gammas < 0):
        raise ParameterError("need lambda > 0 and gamma >= 0")
    checkpoints = tuple(checkpoints) if checkpoints is not None else (T,)
    if any(c < 1 or c > T for c in checkpoints):
        raise InsufficientTasksError(f"checkpoints {checkpoints} exceed stream length {T}")
    G, k = lams.shape[0], phis.shape[1]
    d = datasets[0].d
    M = np.zeros((G, d, k))
    b = np.zeros((G, d))
    M_sum = np.zeros_like(M)
    b_sum = np.zeros_like(b)
    M_out = np.zeros((len(checkpoints), G, d, k))
    b_out = np.zeros((len(checkpoints), G, d))
    wanted = {c: i for i, c in enumerate(checkpoints)}
    last = max(checkpoints)
    for t in range(1, last + 1):
        M_sum += M
        b_sum += b
        if t in wanted:
            M_out[wanted[t]] = M_sum / t
            b_out[wanted[t]] = b_sum / t
        if t == last:
            break
        phi = phis[t - 1]
        Theta = M @ phi + b
        data = datasets[t - 1]
        if inner_mode == "online":
            W = online_many(data, Theta, lams, loss)[1]
        else:
            W = batch_many(data, Theta, lams, loss)
        g_b = -lams[:, None] * (W - Theta)
        M -= gammas[:, None, None] * g_b[:, :, None] * phi
        b -= gammas[:, None] * g_b
    return GridTrainResult(checkpoints, M_out, b_out)


def theoretical_hyperparams(
    var_estimate: float, norm_Mb: float, L: float, R: float, K: float, n: int, T: int
):
    """Step sizes of the excess-risk bound:
    ``lam = 2 R L / (Var sqrt(n))`` and
    ``gamma = ||(M, b)||_F / (L R sqrt(K^2 + 1) sqrt(T))``."""
    vals = dict(var_estimate=var_estimate, norm_Mb=norm_Mb, L=L, R=R, n=n, T=T)
    for name, v in vals.items():
        if not v > 0:
            raise ParameterError(f"{name} must be > 0, got {v}")
    # K = 0 is the unconditional (zero) feature map
    if not K >= 0:
        raise ParameterError(f"K must be >= 0, got {K}")
    lam = 2.0 * R * L / (var_estimate * math.sqrt(n))
    gamma = norm_Mb / (L * R * math.sqrt(K * K + 1.0) * math.sqrt(T))
    return lam, gamma
