import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condmeta.core import SideInfo
from condmeta.features import (
    FeatureMap,
    SideInfoError,
    circle_map,
    make_feature_map,
    mean_inputs_map,
    rff_kernel_value,
    rff_new,
    xy_outer_map,
    zero_map,
)


def test_mean_inputs_by_hand():
    side = SideInfo(inputs=[[1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_array_equal(mean_inputs_map(2)(side), [2.0, 4.0])


def test_xy_outer_by_hand():
    side = SideInfo(inputs=[[1.0, 0.0], [0.0, 2.0]], outputs=[3.0, 1.0])
    # mean(x y) = ((3, 0) + (0, 2)) / 2; mean(x) = (0.5, 1)
    np.testing.assert_array_equal(xy_outer_map(2)(side), [1.5, 1.0, 0.5, 1.0])


def test_xy_outer_needs_outputs():
    with pytest.raises(SideInfoError):
        xy_outer_map(2)(SideInfo(inputs=np.ones((2, 2))))


def test_circle_values_and_domain():
    np.testing.assert_allclose(circle_map()(SideInfo(scalar=0.25)), [0.0, 1.0], atol=1e-15)
    with pytest.raises(SideInfoError):
        circle_map()(SideInfo(scalar=1.5))
    with pytest.raises(SideInfoError):
        circle_map()(SideInfo(inputs=np.ones((1, 2))))


def test_zero_map_is_empty():
    assert zero_map()(SideInfo(scalar=0.3)).shape == (0,)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_collection_maps_are_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.standard_normal((6, 3)), rng.standard_normal(6)
    perm = rng.permutation(6)
    a = SideInfo(inputs=X, outputs=y)
    b = SideInfo(inputs=X[perm], outputs=y[perm])
    for fmap in (mean_inputs_map(3), xy_outer_map(3), rff_new(20, 1.0, 3, seed)):
        np.testing.assert_allclose(fmap(a), fmap(b), rtol=0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rff_norm_bound(seed):
    rng = np.random.default_rng(seed)
    fmap = rff_new(30, 5.0, 4, seed)
    phi = fmap(SideInfo(inputs=rng.standard_normal((5, 4))))
    assert np.linalg.norm(phi) <= fmap.bound_K + 1e-12


def test_rff_is_seeded():
    a, b = rff_new(10, 2.0, 3, 7), rff_new(10, 2.0, 3, 7)
    np.testing.assert_array_equal(a.U, b.U)
    assert not np.array_equal(a.U, rff_new(10, 2.0, 3, 8).U)


def test_rff_approximates_gaussian_kernel():
    # Monte-Carlo tolerance: feature products are bounded by 2/k each, so the
    # inner product has standard deviation below 1/sqrt(k)
    k, sigma = 20000, 0.7
    fmap = rff_new(k, sigma, 2, 0)
    x, xp = np.array([0.3, -0.2]), np.array([-0.5, 0.4])
    approx = fmap(SideInfo(inputs=[x])) @ fmap(SideInfo(inputs=[xp]))
    assert abs(approx - rff_kernel_value(x, xp, sigma)) < 4 / np.sqrt(k)


def test_rff_scalar_side_info():
    fmap = make_feature_map("rff", d=20, k=5, sigma=1.0, seed=0, side_dim=1)
    assert fmap(SideInfo(scalar=0.2)).shape == (5,)


def test_round_trip_dict():
    fmap = rff_new(4, 3.0, 2, 11)
    back = FeatureMap.from_dict(fmap.to_dict())
    side = SideInfo(inputs=[[0.1, 0.2]])
    np.testing.assert_array_equal(back(side), fmap(side))
    assert (back.sigma, back.seed) == (3.0, 11)


def test_empirical_bound():
    sides = [SideInfo(inputs=[[3.0, 4.0]]), SideInfo(inputs=[[1.0, 0.0]])]
    assert mean_inputs_map(2).with_empirical_bound(sides).bound_K == 5.0
