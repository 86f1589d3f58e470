import numpy as np
import pytest

from condmeta.environments import (
    CircleEnvSpec,
    ClusterEnvSpec,
    SchemaError,
    gen_circle,
    gen_clusters,
    gen_planted_linear,
    load_csv_env,
    split_tasks,
    write_csv_env,
)
from condmeta.features import circle_map


def test_clusters_deterministic_and_shaped():
    spec = ClusterEnvSpec.preset("two_mean0", seed=3, T_tot=20)
    a, b = gen_clusters(spec), gen_clusters(spec)
    assert len(a) == 20 and a[0].train.inputs.shape == (20, 20)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.train.outputs, tb.train.outputs)
        np.testing.assert_array_equal(ta.target, tb.target)


def test_clusters_snr_calibration():
    spec = ClusterEnvSpec.preset("one", seed=0, T_tot=50, snr=2.0)
    for t in gen_clusters(spec):
        clean = t.train.inputs @ t.target
        assert np.std(clean) / t.noise_std == pytest.approx(2.0, rel=1e-12)


def test_cluster_inputs_follow_their_center():
    spec = ClusterEnvSpec.preset("two_mean0", seed=1, T_tot=200)
    for t in gen_clusters(spec):
        # inputs centered at +1 go with w = +4, at -1 with w = -4
        sign = np.sign(t.train.inputs.mean())
        assert np.sign(t.target.mean()) == sign


def test_circle_targets_near_circle():
    spec = CircleEnvSpec(seed=2, T_tot=200)
    tasks = gen_circle(spec)
    res = np.array([t.target - spec.h(t.side.scalar) for t in tasks])
    assert abs(res.std() - 1.0) < 0.05
    assert all(0.0 <= t.side.scalar <= 1.0 for t in tasks)


def test_planted_linear_is_exact_without_noise():
    fmap = circle_map()
    M, b = np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]]), np.array([1.0, 0.0, -1.0])
    for t in gen_planted_linear(M, b, 0.0, fmap, T_tot=10, n_tot=5):
        np.testing.assert_allclose(t.target, M @ fmap(t.side) + b, atol=1e-15)


def test_split_is_disjoint_and_hides_train_test(tmp_path):
    tasks = gen_clusters(ClusterEnvSpec.preset("one", seed=0, T_tot=30))
    sp = split_tasks(tasks, 15, 10, 5, 0.5, seed=1)
    assert (len(sp.train), len(sp.val), len(sp.test)) == (15, 10, 5)
    assert all(t.test.n == 0 and t.train.n == 10 for t in sp.train)
    assert all(t.test.n == 10 for t in sp.val + sp.test)
    ids = [id(t.target) for t in sp.train + sp.val + sp.test]
    targets = {tuple(t.target) for t in sp.train + sp.val + sp.test}
    assert len(targets) == len(ids)
    # side information is rebuilt from the training split only
    for t in sp.val:
        np.testing.assert_array_equal(t.side.inputs, t.train.inputs)


def test_split_rejects_too_many_tasks():
    tasks = gen_clusters(ClusterEnvSpec.preset("one", seed=0, T_tot=10))
    with pytest.raises(ValueError):
        split_tasks(tasks, 5, 5, 5)


def test_csv_round_trip(tmp_path):
    tasks = gen_clusters(ClusterEnvSpec.preset("one", seed=0, T_tot=4, d=3))
    path = tmp_path / "env.csv"
    write_csv_env(tasks, path)
    back = load_csv_env(path)
    assert len(back) == 4
    for a, b in zip(tasks, back):
        np.testing.assert_array_equal(a.train.inputs, b.train.inputs)
        np.testing.assert_array_equal(a.train.outputs, b.train.outputs)
        assert b.target is None


def _write(path, text):
    path.write_text(text)
    return path


def test_csv_schema_errors(tmp_path):
    with pytest.raises(SchemaError, match="header"):
        load_csv_env(_write(tmp_path / "a.csv", "id,y,x_1\n1,2,3\n"))
    with pytest.raises(SchemaError, match="row 3"):
        load_csv_env(_write(tmp_path / "b.csv", "task_id,y,x_1\na,1,2\na,oops,2\n"))
    with pytest.raises(SchemaError, match="d=13"):
        load_csv_env(_write(tmp_path / "c.csv", "task_id,y,x_1\na,1,2\n"), "lenk")
    with pytest.raises(SchemaError, match="no data"):
        load_csv_env(_write(tmp_path / "d.csv", "task_id,y,x_1\n"))


def test_lenk_schema(tmp_path):
    head = "task_id,y," + ",".join(f"x_{i}" for i in range(1, 14)) + "\n"
    row = lambda t, y: f"{t},{y}," + ",".join(["0.5"] * 13) + "\n"
    tasks = load_csv_env(_write(tmp_path / "l.csv", head + row("u1", 7) + row("u1", 3) + row("u2", 10)), "lenk")
    assert [t.train.n for t in tasks] == [2, 1]
    assert tasks[0].side.kind == "datapoints"
    with pytest.raises(SchemaError, match="outside"):
        load_csv_env(_write(tmp_path / "m.csv", head + row("u1", 11)), "lenk")
