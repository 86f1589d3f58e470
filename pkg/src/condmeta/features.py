"""Feature maps on side information.

A :class:`FeatureMap` turns a :class:`~condmeta.core.SideInfo` into a
``k``-vector. Collection-valued side information is always embedded as the
mean of a per-point map, so every map here is invariant to the order of the
collection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .core import DimensionError, EmptyDataError, ParameterError, SideInfo

KINDS = ("zero", "mean_inputs", "xy_outer", "circle", "rff")


class SideInfoError(ValueError):
    """Side information of the wrong variant or outside its domain."""


def _collection(side: SideInfo, need_outputs: bool = False) -> np.ndarray:
    if side.scalar is not None:
        raise SideInfoError("expected collection-valued side information")
    if side.inputs is None or side.inputs.shape[0] == 0:
        raise EmptyDataError("empty side-information collection")
    if need_outputs and side.outputs is None:
        raise SideInfoError("expected datapoint side information (inputs and outputs)")
    return side.inputs


def phi_mean_inputs(side: SideInfo) -> np.ndarray:
    """Mean of the input collection, ``(1/n) sum_i x_i``."""
    return _collection(side).mean(axis=0)


def phi_xy_outer(side: SideInfo) -> np.ndarray:
    """Mean over datapoints of ``vec(x_i (y_i, 1)^T)``.

    ``vec`` stacks columns, so the result is ``(mean(x_i y_i), mean(x_i))``
    and has length ``2d``.
    """
    X = _collection(side, need_outputs=True)
    y = side.outputs
    return np.concatenate([(X * y[:, None]).mean(axis=0), X.mean(axis=0)])


def phi_circle(side: SideInfo) -> np.ndarray:
    """``(cos 2 pi s, sin 2 pi s)`` for a scalar ``s`` in ``[0, 1]``."""
    s = side.scalar
    if s is None:
        raise SideInfoError("circle features need scalar side information")
    if not 0.0 <= s <= 1.0:
        raise SideInfoError(f"scalar side information {s} outside [0, 1]")
    return np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)])


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A feature map ``Phi`` with output dimension ``k`` and norm bound ``bound_K``.

    For ``kind == "rff"`` the per-point map is
    ``sqrt(2/k) cos(U x + v)``; scalar side information is treated as a
    1-d point and collections are averaged.
    """

    kind: str
    k: int
    bound_K: float = float("inf")
    U: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "rff":
            U = np.array(self.U, dtype=np.float64)
            v = np.array(self.v, dtype=np.float64).reshape(-1)
            if U.ndim != 2 or U.shape[0] != self.k or v.shape[0] != self.k:
                raise DimensionError("rff parameters do not match k")
            U.setflags(write=False)
            v.setflags(write=False)
            object.__setattr__(self, "U", U)
            object.__setattr__(self, "v", v)

    def _rff_points(self, P: np.ndarray) -> np.ndarray:
        if P.shape[1] != self.U.shape[1]:
            raise DimensionError(
                f"rff expects {self.U.shape[1]}-d points, got {P.shape[1]}-d"
            )
        return np.sqrt(2.0 / self.k) * np.cos(P @ self.U.T + self.v)

    def __call__(self, side: SideInfo) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(0)
        if self.kind == "mean_inputs":
            return phi_mean_inputs(side)
        if self.kind == "xy_outer":
            return phi_xy_outer(side)
        if self.kind == "circle":
            return phi_circle(side)
        if side.scalar is not None:
            return self._rff_points(np.array([[side.scalar]]))[0]
        return self._rff_points(_collection(side)).mean(axis=0)

    def matrix(self, sides: Iterable[SideInfo]) -> np.ndarray:
        """Stack ``Phi(s)`` row-wise into a ``(T, k)`` array."""
        rows = [self(s) for s in sides]
        if not rows:
            return np.zeros((0, self.k))
        return np.vstack(rows).reshape(len(rows), self.k)

    def with_empirical_bound(self, sides: Iterable[SideInfo]) -> "FeatureMap":
        """Copy with ``bound_K`` set to the largest observed ``||Phi(s)||``."""
        Phi = self.matrix(sides)
        K = float(np.max(np.linalg.norm(Phi, axis=1))) if Phi.size else 0.0
        return replace(self, bound_K=K)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "k": self.k, "bound_K": self.bound_K}
        if self.kind == "rff":
            out.update(
                sigma=self.sigma,
                seed=self.seed,
                U=self.U.tolist(),
                v=self.v.tolist(),
            )
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMap":
        return cls(
            kind=data["kind"],
            k=int(data["k"]),
            bound_K=float(data["bound_K"]),
            U=data.get("U"),
            v=data.get("v"),
            sigma=data.get("sigma"),
            seed=data.get("seed"),
        )


def zero_map() -> FeatureMap:
    return FeatureMap("zero", 0, 0.0)


def mean_inputs_map(d: int) -> FeatureMap:
    return FeatureMap("mean_inputs", d)


def xy_outer_map(d: int) -> FeatureMap:
    return FeatureMap("xy_outer", 2 * d)


def circle_map() -> FeatureMap:
    return FeatureMap("circle", 2, 1.0)


def rff_new(k: int, sigma: float, d: int, seed: int) -> FeatureMap:
    """Random Fourier features with ``U_ij ~ N(0, sigma^2)`` and
    ``v_i ~ Uniform[0, 2 pi]``.

    With this law the expected inner product of two feature vectors is the
    Gaussian kernel ``exp(-sigma^2 ||x - x'||^2 / 2)``.
    """
    if k < 1:
        raise ParameterError("rff needs k >= 1")
    if not sigma > 0:
        raise ParameterError("rff needs sigma > 0")
    if d < 1:
        raise ParameterError("rff needs d >= 1")
    rng = np.random.default_rng(seed)
    U = rng.normal(0.0, sigma, size=(k, d))
    v = rng.uniform(0.0, 2 * np.pi, size=k)
    return FeatureMap("rff", k, float(np.sqrt(2.0)), U=U, v=v, sigma=float(sigma), seed=seed)


def rff_kernel_value(x, x_prime, sigma: float) -> float:
    """The Gaussian kernel that :func:`rff_new` features approximate."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64)
    return float(np.exp(-0.5 * sigma**2 * np.sum(diff**2)))


def make_feature_map(kind: str, d: int, k: int = 50, sigma: float = 10.0, seed: int = 0,
                     side_dim: Optional[int] = None) -> FeatureMap:
    """Build a feature map by name. ``side_dim`` is the point dimension the
    rff map is applied to (1 for scalar side information)."""
    if kind == "zero":
        return zero_map()
    if kind == "mean_inputs":
        return mean_inputs_map(d)
    if kind == "xy_outer":
        return xy_outer_map(d)
    if kind == "circle":
        return circle_map()
    if kind == "rff":
        return rff_new(k, sigma, side_dim if side_dim is not None else d, seed)
    raise ParameterError(f"unknown feature map kind {kind!r}")
