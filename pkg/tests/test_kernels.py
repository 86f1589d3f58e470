import numpy as np
import pytest

from condmeta.core import SideInfo
from condmeta.environments import CircleEnvSpec, gen_circle
from condmeta.features import circle_map, rff_new
from condmeta.kernels import KernelFn, KernelModel, kernel_predict, kernel_train_meta
from condmeta.meta import MetaConfig, train_meta


def _stream(T=60):
    return gen_circle(CircleEnvSpec(d=4, T_tot=T, seed=5))


def test_linear_kernel_reproduces_explicit_thetas():
    tasks = _stream()
    fmap = circle_map()
    thetas = []
    cfg = MetaConfig(gamma=0.2, lam=0.5, T=60, feature_map=fmap)
    res = train_meta(tasks, cfg, callback=lambda t, M, b, phi, theta, *r: thetas.append(theta.copy()))
    model = kernel_train_meta(tasks, KernelFn("linear", fmap), 0.2, 0.5, 60)
    np.testing.assert_allclose(model.thetas, np.array(thetas), rtol=1e-12, atol=1e-12)
    side = SideInfo(scalar=0.37)
    np.testing.assert_allclose(kernel_predict(model, side), res.predict(side), atol=1e-12)
    last = res.last_params(fmap(side))
    np.testing.assert_allclose(kernel_predict(model, side, averaged=False), last, atol=1e-12)


def test_single_task_predictor_is_zero():
    model = kernel_train_meta(_stream(1), KernelFn("gaussian"), 0.5, 1.0, 1)
    np.testing.assert_array_equal(kernel_predict(model, SideInfo(scalar=0.1)), np.zeros(4))


def test_gaussian_kernel_value():
    k = KernelFn("gaussian", bandwidth=2.0)
    assert k(SideInfo(scalar=0.0), SideInfo(scalar=1.0)) == pytest.approx(np.exp(-1 / 8))


def test_rff_kernel_is_positive_semidefinite():
    fmap = rff_new(30, 3.0, 1, 0)
    k = KernelFn("linear", fmap)
    sides = [SideInfo(scalar=s) for s in np.linspace(0, 1, 12)]
    K = np.array([[k(a, b) for b in sides] for a in sides])
    assert np.linalg.eigvalsh(K).min() > -1e-12


def test_round_trip_and_empty():
    model = kernel_train_meta(_stream(10), KernelFn("gaussian", bandwidth=0.3), 0.1, 1.0, 10)
    back = KernelModel.from_dict(model.to_dict())
    side = SideInfo(scalar=0.8)
    np.testing.assert_allclose(kernel_predict(back, side), kernel_predict(model, side))
    empty = dict(model.to_dict(), embeddings=[], grads=[], coefficients=[])
    assert KernelModel.from_dict(empty).T == 0


def test_errors():
    with pytest.raises(ValueError):
        KernelFn("linear")
    with pytest.raises(ValueError):
        KernelFn("gaussian", bandwidth=0.0)
    with pytest.raises(ValueError):
        kernel_train_meta(_stream(3), KernelFn("gaussian"), 0.1, 1.0, 5)
