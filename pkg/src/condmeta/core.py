"""Domain types shared by every other module.

Everything here is an immutable value: datasets, losses, side information,
task instances and the parameters ``(M, b)`` of a linear conditioning
function ``tau(s) = M @ phi(s) + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


class EmptyDataError(ValueError):
    """Raised when an operation needs at least one datapoint."""


class NumericInputError(ValueError):
    """Raised on NaN or infinite inputs."""


class ParameterError(ValueError):
    """Raised on an out-of-range hyperparameter."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """A finite sample ``(x_i, y_i)_{i=1..n}`` of one task.

    ``inputs`` has shape ``(n, d)`` and ``outputs`` shape ``(n,)``. An empty
    dataset (``n == 0``) is allowed only as the placeholder test split of a
    meta-training task.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = np.array(self.inputs, dtype=np.float64)
        y = np.array(self.outputs, dtype=np.float64).reshape(-1)
        if X.ndim == 1 and X.shape[0] == y.shape[0]:
            X = X[:, None]
        if X.ndim != 2:
            raise DimensionError(f"inputs must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"{X.shape[0]} inputs but {y.shape[0]} outputs"
            )
        if X.shape[1] < 1:
            raise DimensionError("input dimension must be >= 1")
        object.__setattr__(self, "inputs", _frozen(X))
        object.__setattr__(self, "outputs", _frozen(y))

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def input_bound(self) -> float:
        """``max_i ||x_i||``, the radius R of the inputs."""
        if self.n == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.inputs, axis=1)))

    def __len__(self):
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.inputs[idx], self.outputs[idx])

    def check_finite(self):
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.outputs))):
            raise NumericInputError("dataset contains non-finite values")


@dataclass(frozen=True)
class Loss:
    """A convex scalar loss ``l(pred, y)`` with a subgradient in ``pred``.

    ``kind`` is ``"absolute"`` or ``"squared"``. For the squared loss the
    Lipschitz constant is only meaningful on a bounded range, so it must be
    passed in by the caller; it defaults to ``inf``.
    """

    kind: str
    lipschitz: float = field(default=None)

    def __post_init__(self):
        if self.kind not in ("absolute", "squared"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.lipschitz is None:
            object.__setattr__(
                self, "lipschitz", 1.0 if self.kind == "absolute" else float("inf")
            )

    def value(self, pred, y):
        r = np.asarray(pred, dtype=np.float64) - y
        if self.kind == "absolute":
            return np.abs(r)
        return 0.5 * r * r

    def subgradient(self, pred, y):
        # sign(0) == 0 picks the minimal-norm element of [-1, 1] at a tie
        r = np.asarray(pred, dtype=np.float64) - y
        if self.kind == "absolute":
            return np.sign(r)
        return r


ABSOLUTE = Loss("absolute")


def squared_loss(lipschitz: float = float("inf")) -> Loss:
    return Loss("squared", lipschitz)


@dataclass(frozen=True, eq=False)
class SideInfo:
    """Side information attached to a task.

    Exactly one of the three variants is populated:

    * ``scalar`` -- a number ``s`` in ``[0, 1]``;
    * ``inputs`` -- a collection ``X = (x_i)``;
    * ``inputs`` and ``outputs`` -- a collection of datapoints ``Z = (x_i, y_i)``.
    """

    scalar: Optional[float] = None
    inputs: Optional[np.ndarray] = None
    outputs: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.scalar is not None:
            if self.inputs is not None or self.outputs is not None:
                raise ValueError("scalar side information carries no collection")
            object.__setattr__(self, "scalar", float(self.scalar))
            return
        if self.inputs is None:
            raise ValueError("side information needs a scalar or an input collection")
        X = np.array(self.inputs, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyDataError("side-information collection must be non-empty")
        object.__setattr__(self, "inputs", _frozen(X))
        if self.outputs is not None:
            y = np.array(self.outputs, dtype=np.float64).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise DimensionError("side-information inputs/outputs length mismatch")
            object.__setattr__(self, "outputs", _frozen(y))

    @property
    def kind(self) -> str:
        if self.scalar is not None:
            return "scalar"
        return "inputs" if self.outputs is None else "datapoints"

    @classmethod
    def from_dataset(cls, data: Dataset, with_outputs: bool = False) -> "SideInfo":
        if with_outputs:
            return cls(inputs=data.inputs, outputs=data.outputs)
        return cls(inputs=data.inputs)


@dataclass(frozen=True, eq=False)
class TaskInstance:
    """One sampled task: train/test data, side information and, for synthetic
    environments, the ground-truth target vector and label-noise level."""

    train: Dataset
    test: Dataset
    side: SideInfo
    target: Optional[np.ndarray] = None
    noise_std: Optional[float] = None

    def __post_init__(self):
        if self.test.n and self.test.d != self.train.d:
            raise DimensionError("train and test input dimensions differ")
        if self.target is not None:
            t = np.array(self.target, dtype=np.float64).reshape(-1)
            if t.shape[0] != self.train.d:
                raise DimensionError("target dimension differs from input dimension")
            object.__setattr__(self, "target", _frozen(t))

    @property
    def d(self) -> int:
        return self.train.d


@dataclass(frozen=True, eq=False)
class ConditioningParams:
    """Parameters of ``tau(s) = M @ phi(s) + b`` with ``M`` of shape ``(d, k)``.

    ``k == 0`` is the unconditional family, where ``tau`` is the constant ``b``.
    """

    M: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        M = np.array(self.M, dtype=np.float64)
        if M.size == 0:
            M = M.reshape(b.shape[0], 0)
        if M.ndim != 2 or M.shape[0] != b.shape[0]:
            raise DimensionError(f"M has shape {M.shape}, b has length {b.shape[0]}")
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "b", _frozen(b))

    @classmethod
    def zeros(cls, d: int, k: int) -> "ConditioningParams":
        return cls(np.zeros((d, k)), np.zeros(d))

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def k(self) -> int:
        return self.M.shape[1]

    @property
    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.M**2) + np.sum(self.b**2)))

    def __call__(self, phi_s) -> np.ndarray:
        return apply_tau(self, phi_s)


def apply_tau(params: ConditioningParams, phi_s) -> np.ndarray:
    """Evaluate the bias ``M @ phi_s + b``."""
    phi_s = np.asarray(phi_s, dtype=np.float64).reshape(-1)
    if phi_s.shape[0] != params.k:
        raise DimensionError(
            f"feature vector has length {phi_s.shape[0]}, expected k={params.k}"
        )
    return params.M @ phi_s + params.b


def loss_eval(loss: Loss, w, data: Dataset) -> float:
    """Empirical risk ``(1/n) sum_i l(<x_i, w>, y_i)``."""
    if data.n == 0:
        raise EmptyDataError("empirical risk of an empty dataset")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != data.d:
        raise DimensionError(f"w has dimension {w.shape[0]}, data has {data.d}")
    return float(np.mean(loss.value(data.inputs @ w, data.outputs)))

