import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from istn_dss.sca import (
    SurrogateParams,
    f_apx,
    f_apx_upper,
    f_apx_upper_coeffs,
    f_exp_lower,
    f_sqrt_upper,
    recover_binaries,
    recover_steering,
)

EPS = 1e-4


def test_f_apx_values():
    assert f_apx(0.0, EPS) == 0.0
    assert f_apx(EPS, EPS) == pytest.approx(1 - np.exp(-1), rel=1e-15)
    assert f_apx(EPS, EPS) == pytest.approx(0.6321205588285577, rel=1e-15)
    assert 1.0 - f_apx(100 * EPS, EPS) < 1e-40


def test_apx_tangent_examples():
    assert f_apx_upper(3e-4, 3e-4, EPS) == pytest.approx(f_apx(3e-4, EPS), rel=1e-14)
    assert f_apx_upper(EPS, 0.0, EPS) == pytest.approx(1.0, rel=1e-15)
    a, b = f_apx_upper_coeffs(2e-4, EPS)
    assert a + b * 5e-4 == pytest.approx(f_apx_upper(5e-4, 2e-4, EPS), rel=1e-14)


def test_exp_and_sqrt_examples():
    assert f_exp_lower(0.7, 0.0) == pytest.approx(1.7)
    assert f_exp_lower(1.3, 1.3) == pytest.approx(np.exp(1.3), rel=1e-15)
    assert f_sqrt_upper(4.0, 4.0) == 2.0
    assert f_sqrt_upper(9.0, 4.0) == 3.25
    with pytest.raises(ValueError):
        f_sqrt_upper(1.0, 0.0)


def test_recovery_examples():
    assoc, p = recover_binaries(np.array([0.01, 1e-6]), 1e-4)
    assert assoc.tolist() == [True, False]
    assert p.tolist() == [0.01, 0.0]
    cn, split = recover_steering(np.array([[0.2], [0.3]]))
    assert cn[0] == pytest.approx(0.5)
    assert split[:, 0] == pytest.approx([0.4, 0.6])
    cn, split = recover_steering(np.zeros((2, 1)))
    assert cn[0] == 0 and split[:, 0].tolist() == [0.5, 0.5]


def test_params_validate():
    with pytest.raises(ValueError):
        SurrogateParams(epsilon=0.0)
    with pytest.raises(ValueError):
        SurrogateParams(recovery_threshold=-1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e-2), st.floats(0, 1e-2))
def test_apx_upper_dominates(x, xi):
    assert f_apx_upper(x, xi, EPS) >= f_apx(x, EPS) - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30))
def test_exp_lower_is_below(u, ui):
    assert f_exp_lower(u, ui) <= np.exp(u) * (1 + 1e-12) + 1e-300


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e6), st.floats(1e-6, 1e6))
def test_sqrt_upper_dominates(x, xi):
    assert f_sqrt_upper(x, xi) >= np.sqrt(x) * (1 - 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2).filter(lambda w: sum(w) <= 1))
def test_steering_product_identity(w):
    bar = np.array(w)[:, None]
    cn, split = recover_steering(bar)
    assert np.allclose(cn[None, :] * split, bar, atol=1e-15) or cn[0] == 0
    assert split[:, 0].sum() == pytest.approx(1.0)
