import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condmeta.core import ABSOLUTE, ConditioningParams, Dataset, SideInfo, TaskInstance, squared_loss
from condmeta.environments import ClusterEnvSpec, gen_clusters
from condmeta.features import circle_map, mean_inputs_map, zero_map
from condmeta.inner import solve_online
from condmeta.meta import (
    InsufficientTasksError,
    MetaConfig,
    MetaTrainResult,
    meta_gradient,
    surrogate_loss,
    theoretical_hyperparams,
    train_meta,
    train_meta_grid,
)


def _instance(rng, d=3, k=2, n=8):
    data = Dataset(rng.standard_normal((n, d)), rng.standard_normal(n))
    params = ConditioningParams(rng.standard_normal((d, k)), rng.standard_normal(d))
    return data, params, rng.standard_normal(k)


def test_squared_surrogate_gradient_finite_differences():
    rng = np.random.default_rng(0)
    loss, lam, h = squared_loss(), 0.8, 1e-5
    data, params, phi = _instance(rng)
    G_M, g_b = meta_gradient(params, phi, data, loss, lam)
    for i in range(params.d):
        e = np.zeros(params.d)
        e[i] = h
        up = surrogate_loss(ConditioningParams(params.M, params.b + e), phi, data, loss, lam)
        dn = surrogate_loss(ConditioningParams(params.M, params.b - e), phi, data, loss, lam)
        assert g_b[i] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-8)
    np.testing.assert_allclose(G_M, np.outer(g_b, phi))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1))
def test_surrogate_is_convex_on_segments(seed, t):
    rng = np.random.default_rng(seed)
    data, p1, phi = _instance(rng)
    p2 = ConditioningParams(rng.standard_normal(p1.M.shape), rng.standard_normal(p1.d))
    pt = ConditioningParams(t * p1.M + (1 - t) * p2.M, t * p1.b + (1 - t) * p2.b)
    f = lambda p: surrogate_loss(p, phi, data, squared_loss(), 0.5)
    assert f(pt) <= t * f(p1) + (1 - t) * f(p2) + 1e-9


def test_gradient_norm_identity():
    rng = np.random.default_rng(1)
    data, params, phi = _instance(rng)
    lam = 0.4
    G_M, g_b = meta_gradient(params, phi, data, ABSOLUTE, lam, inner_mode="online")
    w = solve_online(data, params(phi), ABSOLUTE, lam).w_last
    stacked = np.sqrt(np.sum(G_M**2) + np.sum(g_b**2))
    expect = lam * np.linalg.norm(w - params(phi)) * np.sqrt(phi @ phi + 1)
    assert stacked == pytest.approx(expect, rel=1e-12)


def _tasks(T=40, seed=0):
    return gen_clusters(ClusterEnvSpec.preset("two_mean0", seed=seed, T_tot=T, d=5))


def test_gamma_zero_keeps_params_at_zero():
    res = train_meta(_tasks(10), MetaConfig(gamma=0.0, lam=1.0, T=10, feature_map=mean_inputs_map(5)))
    assert res.avg_params.frobenius_norm == 0.0
    assert res.last_params.frobenius_norm == 0.0


def test_single_step_by_hand():
    # T = 1: the average is the starting point (0, 0); the last iterate took
    # one step -gamma (g phi^T, g)
    task = _tasks(1)[0]
    fmap = mean_inputs_map(5)
    res = train_meta([task], MetaConfig(gamma=0.3, lam=2.0, T=1, feature_map=fmap))
    assert res.avg_params.frobenius_norm == 0.0
    w = solve_online(task.train, np.zeros(5), ABSOLUTE, 2.0).w_last
    g = -2.0 * w
    np.testing.assert_allclose(res.last_params.b, -0.3 * g)
    np.testing.assert_allclose(res.last_params.M, -0.3 * np.outer(g, fmap(task.side)))


def test_average_is_mean_of_iterates():
    Ms, bs = [], []
    cb = lambda t, M, b, *rest: (Ms.append(M.copy()), bs.append(b.copy()))
    cfg = MetaConfig(gamma=0.01, lam=1.0, T=25, feature_map=mean_inputs_map(5))
    res = train_meta(_tasks(25), cfg, callback=cb)
    np.testing.assert_allclose(res.avg_params.M, np.mean(Ms, axis=0), atol=1e-14)
    np.testing.assert_allclose(res.avg_params.b, np.mean(bs, axis=0), atol=1e-14)


def test_insufficient_tasks():
    with pytest.raises(InsufficientTasksError):
        train_meta(_tasks(3), MetaConfig(gamma=0.1, lam=1.0, T=5))


def test_trajectory_decreases_on_average():
    tasks = _tasks(200, seed=2)
    cfg = MetaConfig(gamma=0.5, lam=0.5, T=200, feature_map=mean_inputs_map(5))
    traj = train_meta(tasks, cfg, track=True).trajectory
    assert np.mean(traj[-50:]) < np.mean(traj[:50])


@pytest.mark.parametrize("mode", ["online", "batch"])
def test_grid_matches_single_runs(mode):
    tasks = _tasks(15, seed=4)
    fmap = mean_inputs_map(5)
    lams, gammas = np.array([0.1, 1.0, 10.0]), np.array([0.0, 0.05, 0.5])
    phis = fmap.matrix(t.side for t in tasks)
    grid = train_meta_grid(phis, [t.train for t in tasks], lams, gammas, ABSOLUTE, mode, (5, 15))
    for g in range(3):
        for c, T in enumerate((5, 15)):
            cfg = MetaConfig(gammas[g], lams[g], mode, T, fmap)
            single = train_meta(tasks, cfg)
            np.testing.assert_allclose(grid.M_avg[c, g], single.avg_params.M, atol=1e-12)
            np.testing.assert_allclose(grid.b_avg[c, g], single.avg_params.b, atol=1e-12)


def test_result_round_trip():
    cfg = MetaConfig(gamma=0.1, lam=1.0, T=5, feature_map=circle_map())
    tasks = [
        TaskInstance(t.train, t.test, SideInfo(scalar=i / 5), t.target) for i, t in enumerate(_tasks(5))
    ]
    res = train_meta(tasks, cfg)
    back = MetaTrainResult.from_dict(res.to_dict())
    side = SideInfo(scalar=0.4)
    np.testing.assert_array_equal(back.predict(side), res.predict(side))


def test_theoretical_hyperparams_by_hand():
    lam, gamma = theoretical_hyperparams(2.0, 3.0, 1.0, 4.0, 0.0, 16, 9)
    assert lam == pytest.approx(2 * 4 * 1 / (2.0 * 4))
    assert gamma == pytest.approx(3.0 / (4.0 * 1.0 * 3.0))
    with pytest.raises(ValueError):
        theoretical_hyperparams(0.0, 1, 1, 1, 1, 1, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        MetaConfig(gamma=-1.0, lam=1.0)
    with pytest.raises(ValueError):
        MetaConfig(gamma=1.0, lam=0.0)
