import numpy as np
import pytest

from fricfem.contact import (FrictionModel, MaterialParams, NitscheParams,
                             p_lin_n, p_lin_t, p_n, p_t, proj_neg, proj_ball,
                             s_h)


def test_material_lame_parameters():
    mat = MaterialParams(E=1.0, nu=0.3)
    assert mat.mu == pytest.approx(1.0 / 2.6, rel=1e-14)
    assert mat.lam == pytest.approx(0.3 / (1.3 * 0.4), rel=1e-14)


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialParams(E=-1.0, nu=0.3)
    with pytest.raises(ValueError):
        MaterialParams(E=1.0, nu=0.5)


def test_friction_validation():
    with pytest.raises(ValueError):
        FrictionModel(kind="unknown")
    with pytest.raises(ValueError):
        FrictionModel(kind="tresca", s=-1.0)
    with pytest.raises(ValueError):
        NitscheParams(gamma0=0.0)


def test_proj_neg_values():
    x = np.array([-2.0, -1e-16, 0.0, 1e-16, 3.0])
    assert np.allclose(proj_neg(x), [-2.0, -1e-16, 0.0, 0.0, 0.0])


def test_proj_ball_values():
    x = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert np.allclose(proj_ball(x, 1.0), [-1.0, -0.5, 0.0, 0.5, 1.0])
    # zero radius collapses everything to zero
    assert np.allclose(proj_ball(x, 0.0), 0.0)


def test_projections_idempotent_and_lipschitz():
    rng = np.random.default_rng(11)
    n = 10_000
    x = rng.standard_normal(n) * rng.lognormal(0.0, 2.0, n)
    y = rng.standard_normal(n) * rng.lognormal(0.0, 2.0, n)
    r = np.abs(rng.standard_normal(n))

    px = proj_neg(x)
    assert np.array_equal(proj_neg(px), px)
    assert np.all(np.abs(proj_neg(x) - proj_neg(y)) <= np.abs(x - y) + 1e-300)

    bx = proj_ball(x, r)
    assert np.array_equal(proj_ball(bx, r), bx)
    assert np.all(np.abs(proj_ball(x, r) - proj_ball(y, r)) <= np.abs(x - y) + 1e-300)


def test_linear_operators():
    # v = 0 maps to zero, and the operators are homogeneous of degree 1
    assert p_n(0.0, 0.0, 5.0) == 0.0
    assert p_t(0.0, 0.0, 5.0) == 0.0
    assert p_n(2.0, 1.5, 3.0) == pytest.approx(2.0 - 4.5)
    assert p_n(2 * 2.0, 2 * 1.5, 3.0) == pytest.approx(2 * (2.0 - 4.5))
    # with v_n = 0 the gamma value is irrelevant
    assert p_n(1.2, 0.0, 3.0) == p_n(1.2, 0.0, 6.0)
    # a rigid translation has zero strain, so sigma = 0 and P_t = -gamma c
    assert p_t(0.0, 0.25, 2.0) == pytest.approx(-0.5)


def test_friction_threshold():
    pn = np.array([-2.0, -0.5, 0.0, 1.0])
    tresca = FrictionModel(kind="tresca", s=0.3)
    assert np.allclose(s_h(tresca, pn), 0.3)
    coulomb = FrictionModel(kind="coulomb", mu_c=0.5)
    assert np.allclose(s_h(coulomb, pn), [1.0, 0.25, 0.0, 0.0])


def test_contact_linearization_branches():
    pn_w = np.array([1.0, 1.0, 1.0])
    pn_prev = np.array([-2.0, 0.0, 3.0])
    # active branch keeps the operator, inactive (including the kink) drops it
    assert np.allclose(p_lin_n(pn_w, pn_prev), [1.0, 0.0, 0.0])


def test_friction_linearization_branches():
    radius = np.array([1.0, 1.0, 1.0, 1.0])
    pt_prev = np.array([0.2, -1.0, 2.0, -3.0])
    pt_w = np.array([5.0, 5.0, 5.0, 5.0])
    got = p_lin_t(pt_w, pt_prev, radius)
    # stick keeps the identity branch (|P_t| <= radius, kink included),
    # slip freezes the value at radius * sign
    assert np.allclose(got, [5.0, 5.0, 1.0, -1.0])
