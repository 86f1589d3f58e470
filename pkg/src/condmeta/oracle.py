"""Ground-truth diagnostics for synthetic environments.

All quantities here use the tasks' true target vectors ``w_mu``, so they are
only available for generated environments. Variances are reported squared:
``var(tau) = mean_t ||w_t - tau(s_t)||^2``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ConditioningParams, SideInfo, TaskInstance
from .environments import ClusterEnvSpec
from .features import FeatureMap

Conditioning = Callable[[SideInfo], np.ndarray]


class OracleUnavailableError(ValueError):
    """A task has no ground-truth target."""


def _targets(tasks: Sequence[TaskInstance]) -> np.ndarray:
    if not tasks:
        raise OracleUnavailableError("no tasks")
    if any(t.target is None for t in tasks):
        raise OracleUnavailableError("every task needs a ground-truth target")
    return np.vstack([t.target for t in tasks])


def variance_terms(tau: Conditioning, tasks: Sequence[TaskInstance]) -> np.ndarray:
    """Per-task squared distances ``||w_t - tau(s_t)||^2``."""
    W = _targets(tasks)
    B = np.vstack([np.broadcast_to(tau(t.side), (W.shape[1],)) for t in tasks])
    return np.sum((W - B) ** 2, axis=1)


def estimate_variance(tau: Conditioning, tasks: Sequence[TaskInstance]) -> float:
    """Monte-Carlo estimate of the squared variance of ``tau``."""
    return float(np.mean(variance_terms(tau, tasks)))


def standard_error(samples) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        return float("inf")
    return float(np.std(samples, ddof=1) / np.sqrt(samples.size))


def unconditional_mean(tasks: Sequence[TaskInstance]) -> np.ndarray:
    return _targets(tasks).mean(axis=0)


def constant(v) -> Conditioning:
    v = np.asarray(v, dtype=np.float64)
    return lambda side: v


def cluster_uncond_variance(spec: ClusterEnvSpec) -> float:
    """Population ``Var(w_rho)^2 = d sigma_w^2 + (1/2m^2) sum_ij ||w(i) - w(j)||^2``."""
    W = spec.w_centers
    pair = np.sum((W[:, None, :] - W[None, :, :]) ** 2)
    return spec.d * spec.sigma_w**2 + pair / (2.0 * spec.m**2)


def cluster_gap_lower_bound(spec: ClusterEnvSpec, n: int, corrected: bool = False) -> float:
    """Claimed lower bound on the conditional-vs-unconditional gap of a cluster
    mixture whose side information is ``n`` input points per task::

        (1/2m^2) sum_ij (1 - (m/2) exp(-n ||x(i) - x(j)||^2 / sigma_x^2)) ||w(i) - w(j)||^2

    The exponent above overstates the separation: the Bhattacharyya overlap of
    ``N(x(i), sigma_x^2 I)^n`` and ``N(x(j), sigma_x^2 I)^n`` is
    ``exp(-n ||x(i) - x(j)||^2 / (8 sigma_x^2))``, and the formula can exceed
    the true gap when the clusters are only partly separable. Pass
    ``corrected=True`` for the bound with that exponent, which does hold.
    """
    W, X, m = spec.w_centers, spec.x_centers, spec.m
    dw = np.sum((W[:, None, :] - W[None, :, :]) ** 2, axis=-1)
    dx = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    scale = n / spec.sigma_x**2 / (8.0 if corrected else 1.0)
    weight = 1.0 - 0.5 * m * np.exp(-scale * dx)
    return float(np.sum(weight * dw) / (2.0 * m**2))


def cluster_conditional_mean(spec: ClusterEnvSpec) -> Conditioning:
    """The ideal conditioning function ``E[w_mu | X]`` of a cluster mixture.

    With equal-covariance Gaussian inputs the input mean is sufficient, so the
    posterior over clusters is a softmax of ``-n ||xbar - x(j)||^2 / (2 sigma_x^2)``.
    """

    def tau(side: SideInfo) -> np.ndarray:
        X = side.inputs
        xbar = X.mean(axis=0)
        logits = -X.shape[0] * np.sum((spec.x_centers - xbar) ** 2, axis=1) / (
            2.0 * spec.sigma_x**2
        )
        p = np.exp(logits - logits.max())
        p /= p.sum()
        return p @ spec.w_centers

    return tau


def cluster_gap_monte_carlo(spec: ClusterEnvSpec, tasks: Sequence[TaskInstance]):
    """Monte-Carlo ``E ||w_rho - tau_rho(s)||^2`` and its standard error."""
    w_rho = spec.w_centers.mean(axis=0)
    tau = cluster_conditional_mean(spec)
    terms = np.array([np.sum((w_rho - tau(t.side)) ** 2) for t in tasks])
    return float(terms.mean()), standard_error(terms)


@dataclass(frozen=True, eq=False)
class BestLinear:
    params: ConditioningParams
    var_best_linear: float
    var_uncond: float

    @property
    def ordering_ok(self) -> bool:
        return self.var_best_linear <= self.var_uncond * (1 + 1e-12) + 1e-12


def best_linear_params(
    tasks: Sequence[TaskInstance], feature_map: FeatureMap, ridge_eps: float = 1e-10
) -> BestLinear:
    """Empirical best linear conditioning function in hindsight.

    ``M = Cov(w, Phi) Cov(Phi, Phi)^+`` and ``b = mean(w) - M mean(Phi)``,
    with singular values below ``ridge_eps * sigma_max`` dropped from the
    pseudo-inverse.
    """
    if len(tasks) < 2:
        raise ValueError("best linear parameters need at least two tasks")
    W = _targets(tasks)
    Phi = feature_map.matrix(t.side for t in tasks)
    w_bar = W.mean(axis=0)
    nu = Phi.mean(axis=0)
    Wc = W - w_bar
    Pc = Phi - nu
    T = len(tasks)
    if Phi.shape[1]:
        C_ss = Pc.T @ Pc / T
        C_ws = Wc.T @ Pc / T
        M = C_ws @ np.linalg.pinv(C_ss, rcond=ridge_eps, hermitian=True)
    else:
        M = np.zeros((W.shape[1], 0))
    b = w_bar - M @ nu
    fitted = Phi @ M.T + b
    var_lin = float(np.mean(np.sum((W - fitted) ** 2, axis=1)))
    var_unc = float(np.mean(np.sum(Wc**2, axis=1)))
    return BestLinear(ConditioningParams(M, b), var_lin, var_unc)


@dataclass(frozen=True)
class GapReport:
    n_tasks: int
    var_itl: float
    var_uncond: float
    var_best_linear: float
    gap_uncond_vs_linear: float
    gap_uncond_vs_linear_se: float
    gap_itl_vs_uncond: float
    mean_norm_sq: float

    def to_row(self) -> dict:
        return asdict(self)


def gap_report(tasks: Sequence[TaskInstance], feature_map: FeatureMap) -> GapReport:
    """Compare ITL (``tau = 0``), the empirical mean and the best linear
    conditioning function on the same tasks."""
    w_hat = unconditional_mean(tasks)
    itl = variance_terms(constant(np.zeros_like(w_hat)), tasks)
    unc = variance_terms(constant(w_hat), tasks)
    best = best_linear_params(tasks, feature_map)
    params = best.params
    lin = variance_terms(lambda s: params(feature_map(s)), tasks)
    diff = unc - lin
    return GapReport(
        n_tasks=len(tasks),
        var_itl=float(itl.mean()),
        var_uncond=float(unc.mean()),
        var_best_linear=float(lin.mean()),
        gap_uncond_vs_linear=float(diff.mean()),
        gap_uncond_vs_linear_se=standard_error(diff),
        gap_itl_vs_uncond=float(itl.mean() - unc.mean()),
        mean_norm_sq=float(w_hat @ w_hat),
    )
