import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_system, rel
from ncspred.matexp import expm, input_integral, riemann_oracle, zoh_discretize
from ncspred.model import LtiPlant
from oracles import expm_product


def test_expm_examples():
    np.testing.assert_array_equal(expm(np.zeros((3, 3)), 2.0), np.eye(3))
    np.testing.assert_array_equal(expm(np.eye(2), 0.0), np.eye(2))
    assert expm([[1.0]], 2.0)[0, 0] == pytest.approx(np.e**2, rel=1e-14)
    # nilpotent: e^{Nt} = I + N t
    np.testing.assert_allclose(expm([[0.0, 1.0], [0.0, 0.0]], 3.0), [[1.0, 3.0], [0.0, 1.0]], atol=1e-15)
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))


def test_expm_matches_product_oracle(pend):
    A = pend[0].A
    assert rel(expm(A, 0.4), expm_product(A, 0.4)) < 1e-9


def test_zoh_examples():
    p = LtiPlant([[0.0]], [[1.0]])
    z = zoh_discretize(p, 0.3)
    assert z.Ad[0, 0] == 1.0 and z.Bd[0, 0] == pytest.approx(0.3, abs=1e-15)
    p = LtiPlant([[-2.0]], [[1.0]])
    z = zoh_discretize(p, 0.5)
    assert z.Bd[0, 0] == pytest.approx((1 - np.exp(-1.0)) / 2, rel=1e-13)
    z0 = zoh_discretize(p, 0.0)
    assert z0.Ad[0, 0] == 1.0 and z0.Bd[0, 0] == 0.0
    with pytest.raises(ValueError):
        zoh_discretize(p, -0.1)


def test_zoh_matches_input_integral(pend):
    plant = pend[0]
    for d in (0.01, 0.0369, 0.4):
        z = zoh_discretize(plant, d)
        assert rel(z.Bd, input_integral(plant, 0.0, d, d)) < 1e-12
        assert rel(z.Ad, expm(plant.A, d)) < 1e-12


def test_input_integral_examples():
    p = LtiPlant([[0.0]], [[2.0]])
    assert input_integral(p, 1.0, 3.0, 10.0)[0, 0] == pytest.approx(4.0, abs=1e-14)
    p = LtiPlant([[-1.0]], [[1.0]])
    # int_0^1 e^{-(1-th)} dth = 1 - e^{-1}
    assert input_integral(p, 0.0, 1.0, 1.0)[0, 0] == pytest.approx(1 - np.exp(-1), rel=1e-14)
    assert np.all(input_integral(p, 0.5, 0.5, 2.0) == 0)
    with pytest.raises(ValueError):
        input_integral(p, 1.0, 0.5, 2.0)


def test_pendulum_input_integral_vs_riemann(pend):
    plant = pend[0]
    exact = input_integral(plant, 0.1, 0.5, 0.6)
    assert rel(exact, riemann_oracle(plant, 0.1, 0.5, 0.6, 100_000)) < 1e-9


def test_riemann_second_order(pend):
    plant = pend[0]
    exact = input_integral(plant, 0.0, 0.4, 0.4)
    errs = [rel(riemann_oracle(plant, 0.0, 0.4, 0.4, n), exact) for n in (50, 100, 200, 400)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 4.0) < 0.1)


def test_riemann_rejects_zero_panels(pend):
    with pytest.raises(ValueError):
        riemann_oracle(pend[0], 0.0, 1.0, 1.0, 0)


_seed = st.integers(0, 2**31 - 1)
_t = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(_seed, _t, _t)
def test_semigroup(seed, s, t):
    plant = random_system(np.random.default_rng(seed), 4, 2, 1.0)
    lhs = expm(plant.A, s + t)
    assert rel(lhs, expm(plant.A, s) @ expm(plant.A, t)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(_seed, _t, _t, _t, _t)
def test_input_integral_additivity(seed, a, w1, w2, shift):
    plant = random_system(np.random.default_rng(seed), 4, 2, 1.0)
    b, c = a + w1, a + w1 + w2
    end = c + shift
    whole = input_integral(plant, a, c, end)
    parts = input_integral(plant, a, b, end) + input_integral(plant, b, c, end)
    assert np.linalg.norm(whole - parts) <= 1e-10 * max(1.0, np.linalg.norm(whole))


@settings(max_examples=40, deadline=None)
@given(_seed, st.floats(1e-3, 1.0))
def test_zoh_is_input_integral(seed, d):
    plant = random_system(np.random.default_rng(seed), 4, 2, 1.0)
    assert rel(zoh_discretize(plant, d).Bd, input_integral(plant, 0.0, d, d)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(_seed, _t)
def test_expm_vs_scipy(seed, t):
    A = np.random.default_rng(seed).normal(size=(4, 4))
    assert rel(expm(A, t), la.expm(A * t)) < 1e-13
