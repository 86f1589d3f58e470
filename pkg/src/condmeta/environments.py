"""Task environments: synthetic generators, CSV ingestion and task splits.

Every generator is deterministic given its seed. Labels follow
``y = <x, w_mu> + eps`` where the noise level is calibrated per task so that
``std(<x_i, w_mu>) / sigma_noise`` equals the requested signal-to-noise
ratio.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import Dataset, DimensionError, ParameterError, SideInfo, TaskInstance
from .features import FeatureMap


class SchemaError(ValueError):
    """Malformed multi-task CSV file."""


@dataclass(frozen=True, eq=False)
class ClusterEnvSpec:
    """Uniform mixture of ``m`` Gaussian clusters of tasks.

    A task from cluster ``j`` has ``w_mu ~ N(w_centers[j], sigma_w^2 I)`` and
    inputs ``x ~ N(x_centers[j], sigma_x^2 I)``; its side information is the
    sample of inputs.
    """

    w_centers: np.ndarray
    x_centers: np.ndarray
    sigma_w: float = 1.0
    sigma_x: float = 1.0
    n_tot: int = 20
    T_tot: int = 480
    snr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        W = np.atleast_2d(np.array(self.w_centers, dtype=np.float64))
        X = np.atleast_2d(np.array(self.x_centers, dtype=np.float64))
        if W.shape != X.shape:
            raise DimensionError(f"w_centers {W.shape} vs x_centers {X.shape}")
        if W.shape[0] < 1 or W.shape[1] < 1:
            raise ParameterError("need at least one cluster and d >= 1")
        if not (self.sigma_w > 0 and self.sigma_x > 0):
            raise ParameterError("sigma_w and sigma_x must be > 0")
        if self.n_tot < 1 or self.T_tot < 1 or not self.snr > 0:
            raise ParameterError("n_tot, T_tot and snr must be positive")
        object.__setattr__(self, "w_centers", W)
        object.__setattr__(self, "x_centers", X)

    @property
    def m(self) -> int:
        return self.w_centers.shape[0]

    @property
    def d(self) -> int:
        return self.w_centers.shape[1]

    @classmethod
    def preset(cls, variant: str, seed: int = 0, **kw) -> "ClusterEnvSpec":
        """The three cluster environments of the experiments, ``d = 20``.

        ``"one"``: a single cluster at ``w = 4``; ``"two_mean4"``: clusters
        at ``w = 8`` and ``w = 0``; ``"two_mean0"``: clusters at ``w = +-4``.
        Input centers are ``+1`` and ``-1``.
        """
        d = kw.pop("d", 20)
        one = np.ones(d)
        if variant == "one":
            W, X = [4 * one], [one]
        elif variant == "two_mean4":
            W, X = [8 * one, 0 * one], [one, -one]
        elif variant == "two_mean0":
            W, X = [4 * one, -4 * one], [one, -one]
        else:
            raise ParameterError(f"unknown cluster variant {variant!r}")
        return cls(np.array(W), np.array(X), seed=seed, **kw)


@dataclass(frozen=True, eq=False)
class CircleEnvSpec:
    """Targets scattered around a circle of radius ``r`` in the first two
    coordinates; the side information is the angle parameter ``s``."""

    r: float = 8.0
    c: Optional[np.ndarray] = None
    sigma: float = 1.0
    d: int = 20
    n_tot: int = 20
    T_tot: int = 480
    snr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError("circle environment needs d >= 2")
        if not self.r > 0:
            raise ParameterError("radius must be > 0")
        c = np.zeros(self.d) if self.c is None else np.array(self.c, dtype=np.float64)
        if c.shape != (self.d,):
            raise DimensionError("center must have dimension d")
        object.__setattr__(self, "c", c)

    def h(self, s: float) -> np.ndarray:
        out = np.zeros(self.d)
        out[0] = self.r * np.cos(2 * np.pi * s)
        out[1] = self.r * np.sin(2 * np.pi * s)
        return out


def _labels(rng: np.random.Generator, X: np.ndarray, w: np.ndarray, snr: float):
    clean = X @ w
    noise_std = float(np.std(clean)) / snr
    return clean + noise_std * rng.standard_normal(X.shape[0]), noise_std


def gen_clusters(spec: ClusterEnvSpec) -> List[TaskInstance]:
    rng = np.random.default_rng(spec.seed)
    d, n = spec.d, spec.n_tot
    tasks = []
    for _ in range(spec.T_tot):
        j = rng.integers(spec.m)
        w = spec.w_centers[j] + spec.sigma_w * rng.standard_normal(d)
        X = spec.x_centers[j] + spec.sigma_x * rng.standard_normal((n, d))
        y, noise = _labels(rng, X, w, spec.snr)
        data = Dataset(X, y)
        tasks.append(
            TaskInstance(data, Dataset.empty(d), SideInfo(inputs=X), target=w, noise_std=noise)
        )
    return tasks


def gen_circle(spec: CircleEnvSpec) -> List[TaskInstance]:
    rng = np.random.default_rng(spec.seed)
    d, n = spec.d, spec.n_tot
    tasks = []
    for _ in range(spec.T_tot):
        s = rng.uniform()
        w = spec.h(s) + spec.c + spec.sigma * rng.standard_normal(d)
        X = rng.standard_normal((n, d))
        y, noise = _labels(rng, X, w, spec.snr)
        tasks.append(
            TaskInstance(Dataset(X, y), Dataset.empty(d), SideInfo(scalar=s), target=w, noise_std=noise)
        )
    return tasks


def gen_planted_linear(
    M_star,
    b_star,
    noise: float,
    feature_map: FeatureMap,
    side_kind: str = "scalar",
    n_tot: int = 20,
    T_tot: int = 100,
    snr: float = 1.0,
    seed: int = 0,
) -> List[TaskInstance]:
    """Tasks whose targets are exactly linear in the features:
    ``w_mu = M_star Phi(s) + b_star + noise * N(0, I)``.

    ``side_kind`` is ``"scalar"`` (``s ~ U[0, 1]``) or ``"inputs"`` (the
    task's own ``N(0, I)`` inputs).
    """
    M_star = np.atleast_2d(np.asarray(M_star, dtype=np.float64))
    b_star = np.asarray(b_star, dtype=np.float64).reshape(-1)
    d = b_star.shape[0]
    if M_star.shape != (d, feature_map.k):
        raise DimensionError(f"M_star has shape {M_star.shape}, expected {(d, feature_map.k)}")
    if side_kind not in ("scalar", "inputs"):
        raise ParameterError(f"unknown side kind {side_kind!r}")
    rng = np.random.default_rng(seed)
    tasks = []
    for _ in range(T_tot):
        X = rng.standard_normal((n_tot, d))
        side = SideInfo(scalar=rng.uniform()) if side_kind == "scalar" else SideInfo(inputs=X)
        w = M_star @ feature_map(side) + b_star
        if noise > 0:
            w = w + noise * rng.standard_normal(d)
        y, noise_std = _labels(rng, X, w, snr)
        tasks.append(TaskInstance(Dataset(X, y), Dataset.empty(d), side, target=w, noise_std=noise_std))
    return tasks


# Schema name -> (expected input dimension, side information built from outputs too?)
SCHEMAS = {
    "generic": (None, False),
    "lenk": (13, True),
    "schools": (26, False),
}


def load_csv_env(path, schema: str = "generic") -> List[TaskInstance]:
    """Read a multi-task CSV file with header ``task_id, y, x_1, ..., x_d``.

    One row per datapoint; rows are grouped by ``task_id`` in order of first
    appearance. Lenk-schema files use the datapoints as side information,
    the other schemas use the inputs.
    """
    if schema not in SCHEMAS:
        raise SchemaError(f"unknown schema {schema!r}")
    want_d, with_outputs = SCHEMAS[schema]
    path = Path(path)
    groups: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file (header required)") from None
        if header[:2] != ["task_id", "y"] or len(header) < 3:
            raise SchemaError(f"{path} row 1: header must start with task_id,y,x_1")
        xcols = header[2:]
        if xcols != [f"x_{i}" for i in range(1, len(xcols) + 1)]:
            raise SchemaError(f"{path} row 1: input columns must be x_1..x_d")
        d = len(xcols)
        if want_d is not None and d != want_d:
            raise SchemaError(f"{path} row 1: {schema} schema needs d={want_d}, got {d}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 2:
                raise SchemaError(f"{path} row {lineno}: expected {d + 2} fields, got {len(row)}")
            tid = row[0].strip()
            if not tid:
                raise SchemaError(f"{path} row {lineno}: empty task_id")
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise SchemaError(f"{path} row {lineno}: non-numeric value") from None
            if not np.all(np.isfinite(vals)):
                raise SchemaError(f"{path} row {lineno}: non-finite value")
            if schema == "lenk" and not 0.0 <= vals[0] <= 10.0:
                raise SchemaError(f"{path} row {lineno}: lenk rating {vals[0]} outside [0, 10]")
            groups.setdefault(tid, []).append(vals)
    if not groups:
        raise SchemaError(f"{path}: no data rows")
    tasks = []
    for rows in groups.values():
        arr = np.array(rows)
        data = Dataset(arr[:, 1:], arr[:, 0])
        tasks.append(
            TaskInstance(data, Dataset.empty(d), SideInfo.from_dataset(data, with_outputs))
        )
    return tasks


def write_csv_env(tasks: Sequence[TaskInstance], path) -> None:
    """Write the training data of ``tasks`` in the ingestion format."""
    d = tasks[0].d
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "y"] + [f"x_{i}" for i in range(1, d + 1)])
        for t, task in enumerate(tasks):
            for x, y in zip(task.train.inputs, task.train.outputs):
                w.writerow([t, repr(float(y))] + [repr(float(v)) for v in x])


def _resplit_side(side: SideInfo, z_tr: Dataset) -> SideInfo:
    # side information may only ever see the training split
    if side.kind == "scalar":
        return side
    return SideInfo.from_dataset(z_tr, with_outputs=side.kind == "datapoints")


@dataclass(frozen=True)
class TaskSplit:
    """Meta-train / meta-validation / meta-test partition.

    Meta-training tasks carry only their ``Z_tr``; validation and test tasks
    carry both ``Z_tr`` and ``Z_te``.
    """

    train: tuple
    val: tuple
    test: tuple
    n_tr_fraction: float = field(default=0.5)


def _within_split(task: TaskInstance, fraction: float, rng, keep_test: bool) -> TaskInstance:
    data = task.train
    n = data.n
    n_tr = int(round(fraction * n))
    n_tr = min(max(n_tr, 1), n - 1) if n > 1 else n
    perm = rng.permutation(n)
    z_tr = data.subset(perm[:n_tr])
    z_te = data.subset(perm[n_tr:]) if keep_test else Dataset.empty(data.d)
    return TaskInstance(z_tr, z_te, _resplit_side(task.side, z_tr), task.target, task.noise_std)


def split_tasks(
    tasks: Sequence[TaskInstance],
    T_tr: int,
    T_va: int,
    T_te: int,
    within_train_fraction: float = 0.5,
    seed: int = 0,
) -> TaskSplit:
    """Shuffle tasks into disjoint train/validation/test sets and split each
    task's data into ``Z_tr`` (the given fraction) and ``Z_te``."""
    if not 0.0 < within_train_fraction < 1.0:
        raise ParameterError("within-task train fraction must lie in (0, 1)")
    if min(T_tr, T_va, T_te) < 0 or T_tr + T_va + T_te > len(tasks):
        raise ParameterError(
            f"requested {T_tr}+{T_va}+{T_te} tasks but only {len(tasks)} available"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(tasks))
    f = within_train_fraction
    train = tuple(_within_split(tasks[i], f, rng, False) for i in order[:T_tr])
    val = tuple(_within_split(tasks[i], f, rng, True) for i in order[T_tr : T_tr + T_va])
    test = tuple(
        _within_split(tasks[i], f, rng, True) for i in order[T_tr + T_va : T_tr + T_va + T_te]
    )
    return TaskSplit(train, val, test, f)

