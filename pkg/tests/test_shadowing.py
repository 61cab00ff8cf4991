import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dichoshadow.cocycle import IndexWindow, constant_cocycle
from dichoshadow.errors import (
    DomainError,
    NotContraction,
    PreconditionViolation,
    WindowMismatch,
)
from dichoshadow.generators import property_c_family, random_nonlinear_system
from dichoshadow.shadowing import (
    NonlinearSequenceSystem,
    PropertyCData,
    green_apply,
    operator_bound,
    property_c_from_projections,
    right_inverses,
    shadowing_constants,
    solve_nonlinear,
    verify_property_C,
)
from dichoshadow.perron import series_constant
from dichoshadow.weighted import WeightedSeq, weighted_norm
from oracles import green_operator_naive

DIAG = np.diag([0.5, 2.0])
E1 = np.diag([1.0, 0.0])


def test_constants_example():
    consts = shadowing_constants(2.0, 0.5, 0.05, 1.0)
    assert consts.N1 == 6.0
    assert consts.L == pytest.approx(60 / 7)
    assert consts.d0 == pytest.approx(7 / 60)
    with pytest.raises(NotContraction):
        shadowing_constants(2.0, 0.5, 1 / 6, 1.0)
    with pytest.raises(DomainError):
        shadowing_constants(0.5, 0.5, 0.0, 1.0)


def test_property_c_diagonal():
    c = constant_cocycle(DIAG, (-5, 5))
    P = np.array([E1] * 11)
    B = right_inverses(c, P)
    assert np.allclose(B, np.diag([0.0, 0.5]))
    data = property_c_from_projections(c, P)
    assert data.lam == pytest.approx(0.5, rel=1e-5) and data.N == pytest.approx(1.0, rel=1e-5)
    rep = verify_property_C(c, data)
    assert rep.passed
    assert rep.worst["right_inverse_defect"] < 1e-15


def test_property_c_rejects_wrong_inverse_and_rate():
    c = constant_cocycle(DIAG, (0, 6))
    P = np.array([E1] * 7)
    bad = PropertyCData(c.window, P, np.array([np.diag([0.0, 0.4])] * 6), 1.0, 0.5)
    rep = verify_property_C(c, bad)
    assert not rep.passed and rep.worst["right_inverse_defect"] == pytest.approx(0.2)
    slow = PropertyCData(c.window, P, right_inverses(c, P), 1.0, 0.4)
    assert not verify_property_C(c, slow).passed
    with pytest.raises(DomainError):
        PropertyCData(c.window, P, right_inverses(c, P), 0.5, 0.5)
    with pytest.raises(WindowMismatch):
        PropertyCData(c.window, P[:-1], right_inverses(c, P), 1.0, 0.5)


def test_green_apply_matches_double_sum():
    rng = np.random.default_rng(7)
    c, data = property_c_family(rng, 3, IndexWindow(-6, 6))
    z = WeightedSeq(c.window, rng.standard_normal((13, 3)), 0.0)
    out = green_apply(z, c, data, 0.0).vectors
    ref = green_operator_naive(c.maps, data.projections, data.right_inverses, z.vectors)
    assert np.allclose(out, ref, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_green_apply_within_operator_bound(seed, gamma):
    rng = np.random.default_rng(seed)
    c, data = property_c_family(rng, 2, IndexWindow(-15, 15))
    raw = rng.standard_normal((31, 2)) * ((np.abs(np.arange(-15, 16)) + 1.0) ** -gamma)[:, None]
    z = WeightedSeq(c.window, raw, gamma)
    out = green_apply(z, c, data, gamma)
    assert weighted_norm(out) <= operator_bound(c.window, data.N, data.lam, gamma) * weighted_norm(z) + 1e-12


def test_operator_bound_values():
    w = IndexWindow(-500, 500)
    assert operator_bound(w, 1.0, 0.5, 0.0) == pytest.approx(3.0, rel=1e-12)
    half = IndexWindow(0, 2000)
    assert operator_bound(half, 1.0, 0.5, 1.0) <= series_constant(0.5, 1.0)[0] + 1e-9
    assert operator_bound(w, 2.0, 0.5, 1.0) > operator_bound(w, 2.0, 0.5, 0.0)


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_solve_nonlinear_converges(gamma):
    rng = np.random.default_rng(12)
    consts = shadowing_constants(2.0, 0.5, 0.05, 1.0)
    system, data = random_nonlinear_system(rng, 2, IndexWindow(-20, 20), 0.05, 0.5 * consts.d0, gamma)
    data = PropertyCData(data.window, data.projections, data.right_inverses, 2.0, 0.5)
    res = solve_nonlinear(system, data, gamma, consts)
    assert system.residual(res.v.vectors) < 1e-12
    assert res.norm_gamma <= res.L_times_d
    assert res.contraction_observed <= 1.1 * consts.kappa * consts.N1


def test_solve_nonlinear_preconditions():
    rng = np.random.default_rng(13)
    consts = shadowing_constants(2.0, 0.5, 0.05, 1.0)
    system, data = random_nonlinear_system(rng, 2, IndexWindow(-10, 10), 0.05, 2 * consts.d0, 0.0)
    with pytest.raises(PreconditionViolation):
        solve_nonlinear(system, data, 0.0, consts)
    liar = NonlinearSequenceSystem(system.cocycle, system.nonlinearity, 0.01, 1.0)
    with pytest.raises(PreconditionViolation):
        solve_nonlinear(liar, data, 0.0, shadowing_constants(2.0, 0.5, 0.01, 1.0))


def test_lipschitz_spot_check():
    rng = np.random.default_rng(14)
    system, _ = random_nonlinear_system(rng, 3, IndexWindow(-5, 5), 0.1, 0.01, 0.0)
    assert system.lipschitz_spot_check() <= 1.0
    assert NonlinearSequenceSystem(system.cocycle, system.nonlinearity, 0.05, 1.0).lipschitz_spot_check() > 1.0
