import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dichoshadow.cocycle import IndexWindow, constant_cocycle, make_cocycle, transition
from dichoshadow.dichotomy import (
    DichotomySplitting,
    decaying_subspace,
    estimate_splitting,
    pair_log_norms,
    subspace_pair,
    transversality_check,
    verify_dichotomy,
    weighted_to_plain,
)
from dichoshadow.errors import DomainError, NoGapDetected, WindowMismatch, ZeroNotInWindow
from dichoshadow.generators import hyperbolic_family, piecewise_expanding, rotation_cocycle
from oracles import pair_norms_naive, weighted_to_plain_scan

DIAG = np.diag([0.5, 2.0])
E1 = np.diag([1.0, 0.0])


def rot(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


def diag_split(window, K=1.0, lam=0.5):
    return DichotomySplitting(window, np.array([E1] * len(window)), K, lam)


def test_splitting_validation():
    w = IndexWindow(0, 2)
    with pytest.raises(DomainError):
        DichotomySplitting(w, np.array([np.diag([1.0, 0.5])] * 3), 1.0, 0.5)
    with pytest.raises(DomainError):
        DichotomySplitting(w, np.array([E1, E1, np.eye(2)]), 1.0, 0.5)
    with pytest.raises(DomainError):
        DichotomySplitting(w, np.array([E1] * 3), 1.0, 1.0)
    with pytest.raises(WindowMismatch):
        DichotomySplitting(w, np.array([E1] * 2), 1.0, 0.5)


def test_exact_diagonal_passes_with_ratio_one():
    c = constant_cocycle(DIAG, (0, 40))
    rep = verify_dichotomy(c, diag_split(c.window))
    assert rep.passed
    assert rep.worst_stable_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.worst_unstable_ratio == pytest.approx(1.0, abs=1e-12)


def test_too_small_rate_fails():
    # adjacent pair ratio is 0.5 / 0.4; over a longer window it compounds
    c = constant_cocycle(DIAG, (0, 1))
    rep = verify_dichotomy(c, diag_split(c.window, lam=0.4))
    assert not rep.passed
    assert rep.worst_stable_ratio == pytest.approx(1.25)
    long = constant_cocycle(DIAG, (0, 20))
    rep = verify_dichotomy(long, diag_split(long.window, lam=0.4))
    assert rep.worst_stable_ratio == pytest.approx(1.25 ** 20)
    assert [1, 0] in rep.failing_indices


def test_rotation_fails():
    c = rotation_cocycle(0.3, IndexWindow(0, 40))
    assert not verify_dichotomy(c, diag_split(c.window, lam=0.9)).passed


def test_window_mismatch():
    c = constant_cocycle(DIAG, (0, 5))
    with pytest.raises(WindowMismatch):
        verify_dichotomy(c, diag_split(IndexWindow(0, 6)))


def test_pair_norms_match_brute_force():
    fam = hyperbolic_family(np.random.default_rng(11), 3, IndexWindow(-4, 14), 0.5)
    c = fam.cocycle
    stable, unstable = pair_log_norms(c, fam.projections, stabilize=True)
    s_ref, u_ref = pair_norms_naive(c.maps, fam.projections, -4)
    # the brute-force product loses about eps * ||Phi|| to cancellation
    for (k, l), v in s_ref.items():
        slack = 1e-13 * np.linalg.norm(transition(c, k, l), 2)
        assert abs(math.exp(stable[k - l, l + 4]) - v) <= 1e-8 * v + slack
    for (k, l), v in u_ref.items():
        slack = 1e-13 * np.linalg.norm(transition(c, k, l), 2)
        assert abs(math.exp(unstable[l - k, l + 4]) - v) <= 1e-8 * v + slack


def test_estimate_diagonal():
    c = constant_cocycle(DIAG, (0, 50))
    s = estimate_splitting(c)
    assert np.allclose(s.projections, E1, atol=1e-12)
    assert s.lam == pytest.approx(0.5, rel=1e-5)
    assert verify_dichotomy(c, s).passed


def test_estimate_conjugated():
    Q = rot(0.7)
    c = constant_cocycle(Q @ DIAG @ Q.T, (0, 60))
    s = estimate_splitting(c)
    for k in range(15, 46):
        S, U = s.stable_basis(k), s.unstable_basis(k)
        assert abs(abs(float(S[:, 0] @ Q[:, 0])) - 1) < 1e-12
        assert abs(abs(float(U[:, 0] @ Q[:, 1])) - 1) < 1e-12
        angle_s = math.acos(min(1.0, abs(float(S[:, 0] @ Q[:, 0]))))
        assert angle_s < 1e-6


def test_estimate_rotation_has_no_gap():
    with pytest.raises(NoGapDetected):
        estimate_splitting(rotation_cocycle(0.3, IndexWindow(0, 40)))


def test_estimate_short_window():
    with pytest.raises(DomainError):
        estimate_splitting(constant_cocycle(DIAG, (0, 2)))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 4))
def test_estimate_then_verify_roundtrip(seed, dim):
    rng = np.random.default_rng(seed)
    fam = hyperbolic_family(rng, dim, IndexWindow(0, 60), float(rng.uniform(0.2, 0.6)), cond=4.0)
    s = estimate_splitting(fam.cocycle)
    assert s.rank == fam.stable_dim
    assert verify_dichotomy(fam.cocycle, s).passed
    M = fam.cocycle.norm_bound
    assert np.linalg.norm(s.projections, 2, axis=(1, 2)).max() <= 10 * s.K * M / (1 - s.lam)


def test_weighted_to_plain_examples():
    assert weighted_to_plain(1.0, 0.25, 0.0) == (1.0, 0.5)
    K, lam = weighted_to_plain(1.0, 0.25, 1.0)
    assert lam == 0.5
    assert K == pytest.approx(weighted_to_plain_scan(1.0, 0.25, 1.0)[0]) == pytest.approx(2.0)
    K, lam = weighted_to_plain(5.0, 0.81, 0.0)
    assert K == 5.0 and lam == pytest.approx(0.9)
    with pytest.raises(DomainError):
        weighted_to_plain(1.0, 1.0, 0.0)


@pytest.mark.parametrize("K1,lam1,omega", [(1.0, 0.25, 1.0), (2.0, 0.9, 3.0), (1.0, 0.5, 0.5), (3.0, 0.99, 2.0)])
def test_weighted_to_plain_dominates(K1, lam1, omega):
    K, lam = weighted_to_plain(K1, lam1, omega)
    assert K == pytest.approx(weighted_to_plain_scan(K1, lam1, omega, 2000)[0], rel=1e-12)
    k = np.arange(1001.0)
    kk, ll = np.meshgrid(k, k, indexing="ij")
    mask = ll <= kk
    lhs = np.log(K) + (kk - ll) * np.log(lam)
    rhs = np.log(K1) + (kk - ll) * np.log(lam1) - omega * np.log(kk + 1) + omega * np.log(ll + 1)
    assert np.all(lhs[mask] >= rhs[mask] - 1e-12)


def test_decaying_subspaces():
    c = constant_cocycle(DIAG, (-20, 20))
    fwd = decaying_subspace(c, "forward")
    bwd = decaying_subspace(c, "backward")
    assert fwd.shape == (2, 1) and abs(abs(fwd[0, 0]) - 1) < 1e-10
    assert bwd.shape == (2, 1) and abs(abs(bwd[1, 0]) - 1) < 1e-10
    ident = constant_cocycle(np.eye(2), (-20, 20))
    assert decaying_subspace(ident, "forward", 0.01).shape == (2, 0)
    pw = piecewise_expanding(IndexWindow(-20, 20))
    assert decaying_subspace(pw, "forward").shape == (2, 0)
    assert decaying_subspace(pw, "backward").shape == (2, 0)
    with pytest.raises(ZeroNotInWindow):
        decaying_subspace(constant_cocycle(DIAG, (1, 5)), "forward")


def test_decaying_subspace_survives_huge_dynamic_range():
    Q = rot(0.4)
    c = make_cocycle([Q @ DIAG @ Q.T] * 400, (-200, 200))
    fwd = decaying_subspace(c, "forward")
    assert fwd.shape == (2, 1)
    assert abs(abs(float(fwd[:, 0] @ Q[:, 0])) - 1) < 1e-10


def test_transversality():
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    t = transversality_check(subspace_pair(e1, e2), 2)
    assert t.transverse and t.angle == pytest.approx(math.pi / 2)
    assert not transversality_check(subspace_pair(e1, e1), 2).transverse
    empty = np.zeros((2, 0))
    t = transversality_check(subspace_pair(empty, empty), 2)
    assert not t.transverse and t.angle == 0.0
    t = transversality_check(subspace_pair(np.eye(2), empty), 2)
    assert t.transverse and t.angle == pytest.approx(math.pi / 2)


def test_transversality_with_overlap():
    a = np.eye(3)[:, :2]
    b = np.linalg.qr(np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))[0]
    t = transversality_check(subspace_pair(a, b), 3)
    assert t.transverse
    assert t.angle == pytest.approx(math.pi / 4)


def test_subspace_pair_requires_orthonormal():
    with pytest.raises(DomainError):
        subspace_pair(np.array([[2.0], [0.0]]), np.zeros((2, 0)))
