"""Meta-training through kernel evaluations only.

Unrolling the SGD recursion on ``(M, b)`` gives
``M_t = -gamma sum_{j<t} g_j Phi(s_j)^T`` with ``g_j = -lam (w_j - theta_j)``,
hence

    theta_t(s) = -gamma sum_{j<t} g_j k(s_j, s) + b_t,   k(s, s') = Phi(s)^T Phi(s').

The explicit matrix ``M`` is never formed, so any positive definite kernel on
the side information can replace the linear one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ABSOLUTE, Loss, ParameterError, SideInfo, TaskInstance
from .features import FeatureMap
from .meta import INNER_MODES, InsufficientTasksError, _inner_point


def _raw_embedding(side: SideInfo) -> np.ndarray:
    if side.scalar is not None:
        return np.array([side.scalar])
    return side.inputs.mean(axis=0)


@dataclass(frozen=True, eq=False)
class KernelFn:
    """``linear``: ``Phi(s)^T Phi(s')`` for the given feature map.
    ``gaussian``: ``exp(-||e(s) - e(s')||^2 / (2 bandwidth^2))`` where ``e`` is
    the feature map if given, else the scalar itself or the mean of the
    collection's inputs."""

    kind: str
    feature_map: Optional[FeatureMap] = None
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "linear" and self.feature_map is None:
            raise ParameterError("linear kernel needs a feature map")
        if not self.bandwidth > 0:
            raise ParameterError("bandwidth must be > 0")

    def embed(self, side: SideInfo) -> np.ndarray:
        if self.feature_map is not None:
            return self.feature_map(side)
        return _raw_embedding(side)

    def between(self, E: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Kernel values between each row of ``E`` and the embedding ``e``."""
        if self.kind == "linear":
            return E @ e
        diff = E - e
        return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * self.bandwidth**2))

    def __call__(self, s: SideInfo, s_prime: SideInfo) -> float:
        return float(self.between(self.embed(s)[None], self.embed(s_prime))[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bandwidth": self.bandwidth,
            "feature_map": None if self.feature_map is None else self.feature_map.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelFn":
        fm = data.get("feature_map")
        return cls(
            data["kind"],
            None if fm is None else FeatureMap.from_dict(fm),
            float(data["bandwidth"]),
        )


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Expansion over the training history.

    ``embeddings[j]`` and ``grads[j]`` are the side-information embedding and
    meta-gradient ``g_j`` of step ``j``. ``thetas[t]`` is the bias used at
    step ``t``. ``b_last`` is ``b_{T+1}`` and ``b_avg`` the mean of
    ``b_1..b_T``.
    """

    kernel: KernelFn
    embeddings: np.ndarray
    grads: np.ndarray
    thetas: np.ndarray
    b_last: np.ndarray
    b_avg: np.ndarray
    gamma: float
    lam: float

    @property
    def T(self) -> int:
        return self.grads.shape[0]

    def coefficients(self, averaged: bool = True) -> np.ndarray:
        # g_j enters theta_t for t = j+1..T, i.e. in T - j of the T averaged
        # iterates (j is 1-based)
        T = self.T
        if not averaged:
            return np.ones(T)
        return (T - np.arange(1, T + 1)) / T

    def to_dict(self) -> dict:
        return {
            "type": "kernel",
            "kernel": self.kernel.to_dict(),
            "gamma": self.gamma,
            "lambda": self.lam,
            "embeddings": self.embeddings.tolist(),
            "grads": self.grads.tolist(),
            "coefficients": self.coefficients().tolist(),
            "b_last": self.b_last.tolist(),
            "b_avg": self.b_avg.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelModel":
        d = len(data["b_avg"])
        grads = np.array(data["grads"], dtype=np.float64).reshape(-1, d)
        emb = np.array(data["embeddings"], dtype=np.float64)
        emb = emb.reshape(grads.shape[0], -1) if grads.shape[0] else np.zeros((0, 0))
        return cls(
            KernelFn.from_dict(data["kernel"]),
            emb,
            grads,
            np.zeros((0, d)),
            np.array(data["b_last"]),
            np.array(data["b_avg"]),
            float(data["gamma"]),
            float(data["lambda"]),
        )


def kernel_train_meta(
    task_stream: Sequence[TaskInstance],
    kernel: KernelFn,
    gamma: float,
    lam: float,
    T: int,
    inner_mode: str = "online",
    loss: Loss = ABSOLUTE,
) -> KernelModel:
    if gamma < 0 or not lam > 0 or T < 1:
        raise ParameterError("need gamma >= 0, lambda > 0 and T >= 1")
    if inner_mode not in INNER_MODES:
        raise ParameterError(f"unknown inner mode {inner_mode!r}")
    tasks = list(task_stream)[:T]
    if len(tasks) < T:
        raise InsufficientTasksError(f"stream has {len(tasks)} tasks, T={T}")
    d = tasks[0].d
    E = np.vstack([kernel.embed(t.side) for t in tasks]).reshape(T, -1)
    grads = np.zeros((T, d))
    thetas = np.zeros((T, d))
    b = np.zeros(d)
    b_sum = np.zeros(d)
    for t, task in enumerate(tasks):
        b_sum += b
        kv = kernel.between(E[:t], E[t])
        theta = b - gamma * (kv @ grads[:t])
        w = _inner_point(task.train, theta, loss, lam, inner_mode)
        grads[t] = -lam * (w - theta)
        thetas[t] = theta
        b = b - gamma * grads[t]
    return KernelModel(kernel, E, grads, thetas, b, b_sum / T, gamma, lam)


def kernel_predict(model: KernelModel, side: SideInfo, averaged: bool = True) -> np.ndarray:
    """Bias for a new task.

    ``averaged=True`` evaluates the mean of the ``T`` per-iterate
    conditioning functions; ``averaged=False`` evaluates ``theta_{T+1}``.
    """
    if model.T == 0:
        return model.b_avg.copy() if averaged else model.b_last.copy()
    kv = model.kernel.between(model.embeddings, model.kernel.embed(side))
    coef = model.coefficients(averaged) * kv
    b = model.b_avg if averaged else model.b_last
    return b - model.gamma * (coef @ model.grads)
