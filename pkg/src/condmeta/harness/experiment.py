"""Validation protocol and learning curves.

For every seed the tasks are split into meta-train / meta-validation /
meta-test sets. Each method picks its ``(lambda, gamma)`` pair on the
validation tasks after training on all ``T_tr`` meta-training tasks; the
chosen pair is then reused at every curve checkpoint, where the method is
retrained on the first ``T`` meta-training tasks and scored on the test tasks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core import ABSOLUTE, ConditioningParams, Dataset, Loss, SideInfo, TaskInstance, squared_loss
from ..environments import (
    CircleEnvSpec,
    ClusterEnvSpec,
    TaskSplit,
    gen_circle,
    gen_clusters,
    load_csv_env,
    split_tasks,
)
from ..features import FeatureMap, make_feature_map, zero_map
from ..inner import batch_many, online_many
from ..meta import MetaTrainResult, train_meta_grid
from ..oracle import GapReport, gap_report
from .config import ExperimentConfig, method_feature, method_label

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeedPlan:
    env_seed: int
    split_seed: int
    rff_seed: int


def seed_plan(seed: int) -> SeedPlan:
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return SeedPlan(int(a), int(b), int(c))


def make_loss(name: str) -> Loss:
    return ABSOLUTE if name == "absolute" else squared_loss()


def generate_tasks(cfg: ExperimentConfig, env_seed: int) -> List[TaskInstance]:
    env = cfg.env
    if env.kind == "clusters":
        spec = ClusterEnvSpec.preset(
            env.variant,
            seed=env_seed,
            d=env.d,
            sigma_w=env.sigma_w,
            sigma_x=env.sigma_x,
            n_tot=env.n_tot,
            T_tot=env.T_tot,
            snr=env.snr,
        )
        return gen_clusters(spec)
    if env.kind == "circle":
        spec = CircleEnvSpec(
            r=env.r, sigma=env.sigma, d=env.d, n_tot=env.n_tot, T_tot=env.T_tot,
            snr=env.snr, seed=env_seed,
        )
        return gen_circle(spec)
    return load_csv_env(env.path, env.schema)


def build_feature_map(cfg: ExperimentConfig, kind: str, tasks: Sequence[TaskInstance],
                      rff_seed: int) -> FeatureMap:
    d = tasks[0].d
    side = tasks[0].side
    side_dim = 1 if side.kind == "scalar" else d
    fmap = make_feature_map(kind, d, cfg.rff_k, cfg.rff_sigma, rff_seed, side_dim)
    if kind in ("mean_inputs", "xy_outer"):
        fmap = fmap.with_empirical_bound(t.side for t in tasks)
    return fmap


def _test_sets(tasks: Sequence[TaskInstance]):
    kept = [t for t in tasks if t.test.n > 0]
    if len(kept) < len(tasks):
        log.warning("skipping %d evaluation tasks with an empty test split", len(tasks) - len(kept))
    return kept


def _inner_outputs(data: Dataset, Theta, lams, loss: Loss, inner_mode: str) -> np.ndarray:
    # the official output A(theta, Z): averaged iterate online, minimizer in batch
    if inner_mode == "online":
        return online_many(data, Theta, lams, loss)[0]
    return batch_many(data, Theta, lams, loss)


def evaluate_method(
    model: Callable[[SideInfo], np.ndarray],
    tasks: Sequence[TaskInstance],
    loss: Loss,
    lam: float,
    inner_mode: str = "online",
) -> float:
    """Mean test error of ``model``: per task, ``theta = model(side)``, train
    the inner algorithm on ``Z_tr`` and score it on ``Z_te``."""
    errs = []
    for t in _test_sets(tasks):
        theta = np.asarray(model(t.side), dtype=np.float64)
        w = _inner_outputs(t.train, theta[None], np.array([lam]), loss, inner_mode)[0]
        errs.append(float(np.mean(loss.value(t.test.inputs @ w, t.test.outputs))))
    if not errs:
        return float("nan")
    return float(np.mean(errs))


def evaluate_grid(
    M: np.ndarray,
    b: np.ndarray,
    fmap: FeatureMap,
    tasks: Sequence[TaskInstance],
    lams,
    loss: Loss,
    inner_mode: str,
) -> np.ndarray:
    """:func:`evaluate_method` for ``G`` linear models at once.

    ``M`` is ``(G, d, k)``, ``b`` is ``(G, d)`` and ``lams`` ``(G,)``.
    """
    lams = np.asarray(lams, dtype=np.float64)
    kept = _test_sets(tasks)
    if not kept:
        return np.full(lams.shape[0], np.nan)
    total = np.zeros(lams.shape[0])
    for t in kept:
        Theta = M @ fmap(t.side) + b
        W = _inner_outputs(t.train, Theta, lams, loss, inner_mode)
        total += np.mean(loss.value(W @ t.test.inputs.T, t.test.outputs), axis=1)
    return total / len(kept)


@dataclass(frozen=True)
class CurveRow:
    method: str
    seed: int
    T: int
    lam: float
    gamma: float
    test_error: float


@dataclass
class SeedResult:
    seed: int
    rows: List[CurveRow] = field(default_factory=list)
    diagnostics: List[dict] = field(default_factory=list)
    models: Dict[str, dict] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: List[SeedResult]

    @property
    def rows(self) -> List[CurveRow]:
        return [r for s in self.seeds for r in s.rows]

    def mean_curves(self) -> Dict[str, Dict[int, float]]:
        """Seed-averaged test error per method label and checkpoint."""
        acc: Dict[str, Dict[int, List[float]]] = {}
        for r in self.rows:
            acc.setdefault(r.method, {}).setdefault(r.T, []).append(r.test_error)
        return {m: {T: float(np.mean(v)) for T, v in sorted(c.items())} for m, c in acc.items()}

    def final_errors(self) -> Dict[str, float]:
        return {m: c[max(c)] for m, c in self.mean_curves().items()}


def _hyper_grid(cfg: ExperimentConfig, with_gamma: bool):
    lams = np.asarray(cfg.lambdas, dtype=np.float64)
    if not with_gamma:
        return lams, np.zeros_like(lams)
    L, G = np.meshgrid(lams, np.asarray(cfg.gammas, dtype=np.float64), indexing="ij")
    return L.ravel(), G.ravel()


def select_hyperparams(
    cfg: ExperimentConfig,
    method: str,
    fmap: FeatureMap,
    train: Sequence[TaskInstance],
    val: Sequence[TaskInstance],
    loss: Loss,
):
    """Grid search on the validation tasks; only train and validation tasks
    are passed in, so test tasks cannot influence the choice.

    Returns ``(lam, gamma, validation_errors)``.
    """
    d = train[0].d
    if method == "mean_oracle":
        lams, gammas = _hyper_grid(cfg, False)
        w_hat = np.mean([t.target for t in train], axis=0)
        G = lams.shape[0]
        errs = evaluate_grid(
            np.zeros((G, d, 0)), np.tile(w_hat, (G, 1)), zero_map(), val, lams, loss, cfg.inner_mode
        )
    elif method == "itl":
        lams, gammas = _hyper_grid(cfg, False)
        G = lams.shape[0]
        errs = evaluate_grid(
            np.zeros((G, d, 0)), np.zeros((G, d)), zero_map(), val, lams, loss, cfg.inner_mode
        )
    else:
        lams, gammas = _hyper_grid(cfg, True)
        phis = fmap.matrix(t.side for t in train)
        res = train_meta_grid(
            phis, [t.train for t in train], lams, gammas, loss, cfg.inner_mode, (len(train),)
        )
        errs = evaluate_grid(res.M_avg[0], res.b_avg[0], fmap, val, lams, loss, cfg.inner_mode)
    errs = np.where(np.isnan(errs), np.inf, errs)
    i = int(np.argmin(errs))
    return float(lams[i]), float(gammas[i]), errs


def _method_map(method: str, cfg: ExperimentConfig, tasks, plan: SeedPlan) -> FeatureMap:
    feat = method_feature(method)
    if feat is None:
        return zero_map()
    return build_feature_map(cfg, feat, tasks, plan.rff_seed)


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    plan = seed_plan(seed)
    out = SeedResult(seed)
    tasks = generate_tasks(cfg, plan.env_seed)
    split: TaskSplit = split_tasks(
        tasks, cfg.T_tr, cfg.T_va, cfg.T_te, cfg.within_train_fraction, plan.split_seed
    )
    loss = make_loss(cfg.loss)
    has_targets = all(t.target is not None for t in tasks)
    d = tasks[0].d
    checkpoints = tuple(cfg.checkpoints)
    for method in cfg.methods:
        label = method_label(method)
        if method == "mean_oracle" and not has_targets:
            msg = f"seed {seed}: {label} needs ground-truth targets; skipped"
            log.warning(msg)
            out.warnings.append(msg)
            continue
        fmap = _method_map(method, cfg, split.train, plan)
        lam, gamma, _ = select_hyperparams(cfg, method, fmap, split.train, split.val, loss)
        if method in ("itl", "mean_oracle"):
            C = len(checkpoints)
            if method == "itl":
                bs = np.zeros((C, d))
            else:
                bs = np.vstack([np.mean([t.target for t in split.train[:T]], axis=0) for T in checkpoints])
            Ms = np.zeros((C, d, 0))
            errs = [
                evaluate_grid(Ms[c : c + 1], bs[c : c + 1], zero_map(), split.test, [lam], loss, cfg.inner_mode)[0]
                for c in range(C)
            ]
            final = MetaTrainResult(
                ConditioningParams(Ms[-1], bs[-1]), ConditioningParams(Ms[-1], bs[-1]), zero_map(), lam, gamma
            )
        else:
            phis = fmap.matrix(t.side for t in split.train)
            res = train_meta_grid(
                phis, [t.train for t in split.train], [lam], [gamma], loss, cfg.inner_mode, checkpoints
            )
            errs = [
                evaluate_grid(res.M_avg[c], res.b_avg[c], fmap, split.test, [lam], loss, cfg.inner_mode)[0]
                for c in range(len(checkpoints))
            ]
            avg = ConditioningParams(res.M_avg[-1, 0], res.b_avg[-1, 0])
            final = MetaTrainResult(avg, avg, fmap, lam, gamma)
        for T, e in zip(checkpoints, errs):
            out.rows.append(CurveRow(label, seed, int(T), lam, gamma, float(e)))
        model = final.to_dict()
        model.pop("M_last")
        model.pop("b_last")
        model["T"] = int(checkpoints[-1])
        out.models[label] = model
    if has_targets:
        for method in cfg.methods:
            feat = method_feature(method)
            if feat is None:
                continue
            fmap = _method_map(method, cfg, split.train, plan)
            rep: GapReport = gap_report(tasks, fmap)
            out.diagnostics.append({"method": method_label(method), "seed": seed, **rep.to_row()})
    return out


def run_experiment(cfg: ExperimentConfig, seeds: Optional[Sequence[int]] = None) -> ExperimentResult:
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    return ExperimentResult(cfg, [run_seed(cfg, s) for s in seeds])
