"""Bounded solutions of inhomogeneous difference equations ``x_{k+1} = A_k x_k + f_{k+1}``.

The half-line solver evaluates the Green's-function formula

    y_k = sum_{u<=k} Phi_{k,u} P_u f_u - sum_{u>k} Phi_{k,u} Q_u f_u

by two linear recursions (one forward for the stable sum, one backward for the
unstable sum), so the cost is linear in the window length and no long
transition product is ever formed.  Sums are truncated at the window's upper
end.
"""

from __future__ import annotations

import dataclasses
import math

import mpmath
import numpy as np

from . import config
from .cocycle import IndexWindow, LinearCocycle, spectral_norm
from .dichotomy import DichotomySplitting, invariance_defects, pair_log_norms
from .errors import (
    DomainError,
    EtaNotUnstable,
    F0NotZero,
    GluingNotSolvable,
    WindowMismatch,
    ZeroNotInWindow,
)
from .weighted import WeightedSeq, weighted_norm


@dataclasses.dataclass(frozen=True, eq=False)
class PerronSolution:
    y: WeightedSeq
    norm_omega: float
    residual: float
    truncation_bound: float

    @property
    def accepted(self) -> bool:
        return self.residual <= 1e-9 * (1.0 + self.norm_omega)

    def to_json(self) -> dict:
        return {
            "window": self.y.window.as_list(),
            "omega": self.y.omega,
            "norm_omega": self.norm_omega,
            "residual": self.residual,
            "truncation_bound": self.truncation_bound,
            "accepted": self.accepted,
            "y": self.y.vectors.tolist(),
        }


@dataclasses.dataclass
class GreenBoundsReport:
    mu: float
    r: float
    max_stable_ratio: float
    max_unstable_ratio: float
    M: float
    omega: float
    r_fitted: bool
    invariance_defect: float

    @property
    def holds(self) -> bool:
        slack = 1 + config.get().ratio_slack
        return self.max_stable_ratio <= slack and self.max_unstable_ratio <= slack

    def to_json(self) -> dict:
        return {
            "mu": self.mu,
            "r": self.r,
            "r_fitted": self.r_fitted,
            "M": self.M,
            "omega": self.omega,
            "max_stable_ratio": self.max_stable_ratio,
            "max_unstable_ratio": self.max_unstable_ratio,
            "holds": self.holds,
            "invariance_defect": self.invariance_defect,
        }


def residual(c: LinearCocycle, y: np.ndarray, f: np.ndarray) -> float:
    """``max_k |y_{k+1} - A_k y_k - f_{k+1}|`` over the window."""
    if len(y) < 2:
        return 0.0
    r = y[1:] - np.einsum("kij,kj->ki", c.maps, y[:-1]) - f[1:]
    return float(np.max(np.linalg.norm(r, axis=1)))


def _check_same(c: LinearCocycle, *objs):
    for o in objs:
        if o.window != c.window:
            raise WindowMismatch(
                f"window {o.window.as_list()} does not match cocycle window {c.window.as_list()}"
            )


def _green_sum(c: LinearCocycle, P: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Truncated Green's-function sum for projections ``P`` (no ``f_0`` check)."""
    n, d = f.shape
    Q = np.eye(d) - P
    stable = np.zeros((n, d))
    stable[0] = P[0] @ f[0]
    for i in range(n - 1):
        stable[i + 1] = P[i + 1] @ (c.maps[i] @ stable[i] + f[i + 1])
    unstable = np.zeros((n, d))
    for i in range(n - 2, -1, -1):
        unstable[i] = Q[i] @ (c.inverses[i] @ (unstable[i + 1] + Q[i + 1] @ f[i + 1]))
    return stable - unstable


def solve_halfline(c: LinearCocycle, s: DichotomySplitting, f: WeightedSeq) -> PerronSolution:
    """Green's-function solution on a window starting at 0.

    ``f_0`` must vanish; the returned ``y`` satisfies the difference equation
    exactly up to rounding at every index of the window.
    """
    _check_same(c, s, f)
    if c.window.lo != 0:
        raise WindowMismatch(f"half-line solver needs a window starting at 0, got {c.window.as_list()}")
    if np.any(f.vectors[0] != 0):
        raise F0NotZero(f"f_0 = {f.vectors[0].tolist()} must be zero")
    y = _green_sum(c, s.projections, f.vectors)
    ys = f.with_vectors(y)
    fn = weighted_norm(f)
    tail = s.K * s.lam / (1.0 - s.lam) * fn
    return PerronSolution(ys, weighted_norm(ys), residual(c, y, f.vectors), tail)


def _envelope_logs(window: IndexWindow, omega: float, mu: float):
    n = len(window)
    k = window.indices()
    jj = np.arange(n)[:, None]
    start = np.arange(n)[None, :]
    logw = np.log(k + 1.0)
    # stable pairs: end = start + j; unstable pairs: end = start - j
    end_s = np.clip(start + jj, 0, n - 1)
    end_u = np.clip(start - jj, 0, n - 1)
    env_s = -omega * logw[end_s] + omega * logw[start] + jj * math.log(mu)
    env_u = -omega * logw[end_u] + omega * logw[start] + jj * math.log(mu)
    return env_s, env_u


def green_bounds(c: LinearCocycle, s: DichotomySplitting, omega: float, mu: float,
                 r: float | None = None, M: float | None = None) -> GreenBoundsReport:
    """Measure both Green's-function families against their weighted envelopes.

    Stable: ``||Phi_{k,s} P_s|| <= r**2 (k+1)**-omega (s+1)**omega mu**(k-s)``
    for ``s <= k``; unstable: ``||Phi_{k,s} Q_s|| <= 2 r**2 M**2 (k+1)**-omega
    (s+1)**omega mu**(s-k)`` for ``k < s``.  With ``r=None`` the least
    ``r >= 1`` making both ratios at most 1 is fitted and reported.
    """
    if not 0.0 < mu < 1.0:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    if c.window.lo < 0:
        raise DomainError("green_bounds works on windows inside the non-negative integers")
    if r is not None and r < 1.0:
        raise DomainError("r must be at least 1")
    _check_same(c, s)
    M = c.norm_bound if M is None else float(M)
    defects = invariance_defects(c, s.projections)
    defect = float(defects.max()) if defects.size else 0.0
    stable, unstable = pair_log_norms(c, s.projections, defect <= config.get().invariance)
    env_s, env_u = _envelope_logs(c.window, omega, mu)
    env_u = env_u + math.log(2.0 * M * M)
    with np.errstate(invalid="ignore"):
        ls = stable - env_s
        lu = (unstable - env_u)[1:]
    worst_s = float(np.nanmax(ls)) if np.isfinite(np.nanmax(ls)) else -np.inf
    worst_u = float(np.nanmax(lu)) if lu.size and np.isfinite(np.nanmax(lu)) else -np.inf
    fitted = r is None
    if fitted:
        r = max(1.0, math.exp(0.5 * max(worst_s, worst_u, 0.0)))
    lr2 = 2.0 * math.log(r)
    return GreenBoundsReport(
        mu=mu,
        r=float(r),
        max_stable_ratio=_exp(worst_s - lr2),
        max_unstable_ratio=_exp(worst_u - lr2),
        M=M,
        omega=float(omega),
        r_fitted=fitted,
        invariance_defect=defect,
    )


def green_pair_rows(c: LinearCocycle, s: DichotomySplitting, omega: float, mu: float, r: float,
                    M: float | None = None):
    """Rows ``(k, s, measured, envelope, ratio)`` for every admissible pair."""
    M = c.norm_bound if M is None else float(M)
    defects = invariance_defects(c, s.projections)
    stabilize = (defects.max() if defects.size else 0.0) <= config.get().invariance
    stable, unstable = pair_log_norms(c, s.projections, stabilize)
    env_s, env_u = _envelope_logs(c.window, omega, mu)
    lr2 = 2.0 * math.log(r)
    env_u = env_u + math.log(2.0 * M * M)
    lo, n = c.window.lo, len(c.window)
    rows = []
    for start in range(n):
        for j in range(n - start):
            m, e = stable[j, start], env_s[j, start] + lr2
            rows.append((lo + start + j, lo + start, _exp(m), _exp(e), _exp(m - e)))
        for j in range(1, start + 1):
            m, e = unstable[j, start], env_u[j, start] + lr2
            rows.append((lo + start - j, lo + start, _exp(m), _exp(e), _exp(m - e)))
    rows.sort(key=lambda t: (t[0], t[1]))
    return rows


def _exp(x: float) -> float:
    if x == -np.inf or np.isnan(x):
        return 0.0
    return float(math.exp(min(x, 700.0)))


def series_constant(lam: float, omega: float, k_max: int = 10_000):
    """``max_{0<=k<=k_max} (k+1)**omega (sum_{u<=k} lam**(k-u) (u+1)**-omega
    + sum_{u>k} lam**(u-k) (u+1)**-omega)`` and the maximising ``k``.

    The head sum obeys ``H_k = lam H_{k-1} + (k+1)**-omega``; the infinite tail
    obeys ``T_k = lam ((k+2)**-omega + T_{k+1})`` and is seeded at ``k_max``
    by direct summation until the terms drop below ``1e-16``.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    if omega < 0:
        raise DomainError("omega must be non-negative")
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    k = np.arange(k_max + 1, dtype=float)
    inv_w = (k + 1.0) ** -omega
    head = np.empty(k_max + 1)
    acc = 0.0
    for i in range(k_max + 1):
        acc = lam * acc + inv_w[i]
        head[i] = acc
    n_tail = int(math.ceil(math.log(1e-16) / math.log(lam))) + 1
    j = np.arange(1, n_tail + 1, dtype=float)
    t = math.fsum(lam ** j * (k_max + 1.0 + j) ** -omega)
    tail = np.empty(k_max + 1)
    tail[-1] = t
    for i in range(k_max - 1, -1, -1):
        t = lam * ((i + 2.0) ** -omega + t)
        tail[i] = t
    vals = (k + 1.0) ** omega * (head + tail)
    arg = int(np.argmax(vals))
    return float(vals[arg]), arg


def _split_negative(c: LinearCocycle, s_minus: DichotomySplitting, f: np.ndarray):
    """Negative ray as a forward half-line problem for the time-reversed cocycle."""
    lo = c.window.lo
    neg = c.restrict(IndexWindow(lo, 0))
    rev = neg.reversed()
    n = -lo + 1
    g = np.zeros((n, c.dim))
    # z_m = x_{-m} obeys z_m = A_{-m}^{-1} z_{m-1} + g_m with g_m = -A_{-m}^{-1} f_{-m+1}
    pos0 = -lo
    for m in range(1, n):
        g[m] = -neg.inverses[pos0 - m] @ f[pos0 - m + 1]
    return rev, s_minus.reversed(), g


def solve_fullline(c: LinearCocycle, s_plus: DichotomySplitting, s_minus: DichotomySplitting,
                   f: WeightedSeq) -> PerronSolution:
    """Bounded solution on a window straddling 0, glued from the two rays.

    The positive ray takes ``f_k`` for ``k >= 1``; ``f_0`` is consumed by the
    negative ray (``f_lo`` is never used).  The jump at 0 is removed with a
    homogeneous solution decaying forward from ``S+_0`` and one decaying
    backward from ``U-_0``.
    """
    lo, hi = c.window.lo, c.window.hi
    if 0 not in c.window:
        raise ZeroNotInWindow(f"window {c.window.as_list()} does not contain 0")
    if lo == 0 or hi == 0:
        raise DomainError("full-line gluing needs indices on both sides of 0")
    _check_same(c, f)
    if s_plus.window != IndexWindow(0, hi) or s_minus.window != IndexWindow(lo, 0):
        raise WindowMismatch("splittings must cover [0, hi] and [lo, 0]")
    fv = f.vectors
    d = c.dim
    z = -lo

    plus = c.restrict(IndexWindow(0, hi))
    fp = fv[z:].copy()
    fp[0] = 0.0
    psi_p = _green_sum(plus, s_plus.projections, fp)

    rev, s_rev, g = _split_negative(c, s_minus, fv)
    psi_m = _green_sum(rev, s_rev.projections, g)[::-1]

    mismatch = psi_p[0] - psi_m[z]
    mnorm = float(np.linalg.norm(mismatch))
    Qm0 = np.eye(d) - s_minus.projections[-1]
    Sb = s_plus.stable_basis(0)
    Ub = _basis(Qm0)
    system = np.hstack([Ub, -Sb])
    if system.shape[1]:
        coef, *_ = np.linalg.lstsq(system, mismatch, rcond=None)
        res = float(np.linalg.norm(system @ coef - mismatch))
    else:
        coef = np.zeros(0)
        res = mnorm
    if res > 1e-8 * mnorm:
        raise GluingNotSolvable(res, mnorm)
    phi_m0 = Ub @ coef[:Ub.shape[1]]
    phi_p0 = Sb @ coef[Ub.shape[1]:]

    x = np.empty((len(c.window), d))
    phi = phi_p0
    x[z] = psi_p[0] + phi
    for i in range(hi):
        phi = s_plus.projections[i + 1] @ (plus.maps[i] @ phi)
        x[z + i + 1] = psi_p[i + 1] + phi
    Qm = np.eye(d) - s_minus.projections
    phi = phi_m0
    x[z] = 0.5 * (x[z] + psi_m[z] + phi)
    for i in range(z - 1, -1, -1):
        phi = Qm[i] @ (c.inverses[i] @ phi)
        x[i] = psi_m[i] + phi
    ys = f.with_vectors(x)
    return PerronSolution(ys, weighted_norm(ys), residual(c, x, fv),
                          max(s_plus.K, s_minus.K) * max(s_plus.lam, s_minus.lam)
                          / (1 - max(s_plus.lam, s_minus.lam)) * weighted_norm(f))


def _basis(P: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    u, sv, _ = np.linalg.svd(P)
    return u[:, : int(np.sum(sv > tol))]


def theta_witness(c: LinearCocycle, s_plus: DichotomySplitting, eta, omega: float, a: float) -> WeightedSeq:
    """Inhomogeneity ``f_i = a (i+1)**-omega Phi_{i,0} eta / |Phi_{i,0} eta|`` for ``i >= 0`` (zero before).

    ``eta`` must lie in the unstable space of ``s_plus`` at 0.  The matching
    sequence ``theta_k = -sum_{i>k} Phi_{k,i} f_i`` comes from
    :func:`theta_sequence`.
    """
    if 0 not in c.window:
        raise ZeroNotInWindow(f"window {c.window.as_list()} does not contain 0")
    if not 0.0 < a < 1.0:
        raise DomainError("a must lie in (0, 1)")
    eta = np.asarray(eta, dtype=float)
    nrm = np.linalg.norm(eta)
    if nrm == 0:
        raise EtaNotUnstable("eta must be non-zero")
    eta = eta / nrm
    if np.linalg.norm(s_plus.Q(0) @ eta) < 0.99:
        raise EtaNotUnstable(f"|Q_0 eta| = {np.linalg.norm(s_plus.Q(0) @ eta):.4f} < 0.99")
    lo, hi = c.window.lo, c.window.hi
    out = np.zeros((len(c.window), c.dim))
    v = eta
    for i in range(0, hi + 1):
        if i > 0:
            v = c.A(i - 1) @ v
            v = v / np.linalg.norm(v)
        out[i - lo] = a * (i + 1.0) ** -omega * v
    return WeightedSeq(c.window, out, omega)


def theta_sequence(c: LinearCocycle, f: WeightedSeq) -> WeightedSeq:
    """``theta_k = -sum_{i>k} Phi_{k,i} f_i`` truncated at the window end."""
    _check_same(c, f)
    n = len(c.window)
    th = np.zeros((n, c.dim))
    for i in range(n - 2, -1, -1):
        th[i] = c.inverses[i] @ (th[i + 1] - f.vectors[i + 1])
    return f.with_vectors(th)


def window_min_norm_solution(c: LinearCocycle, f: WeightedSeq, omega: float):
    """Solution on the window minimising ``sum_k (|x_k| (|k|+1)**omega)**2``.

    Every solution is ``x^p + Phi_{.,0} v`` with ``x^p_0 = 0``; the optimal ``v``
    solves the normal equations.  Cancellation between ``x^p`` and
    ``Phi_{.,0} v`` loses as many digits as the transition matrices gain, so the
    whole computation runs in extended precision sized to the growth.
    Returns ``(solution, weighted sup-norm of the solution)``.
    """
    if 0 not in c.window:
        raise ZeroNotInWindow(f"window {c.window.as_list()} does not contain 0")
    _check_same(c, f)
    if not np.any(f.vectors):
        return f.with_vectors(np.zeros_like(f.vectors)).retag(omega), 0.0
    lo, hi = c.window.lo, c.window.hi
    d = c.dim
    growth = np.sum(np.log10(np.maximum(spectral_norm(c.maps), spectral_norm(c.inverses))))
    wmax = omega * math.log10(max(abs(lo), hi) + 1.0)
    dps = int(3 * (growth + wmax)) + 40
    z = -lo
    n = len(c.window)
    with mpmath.workdps(dps):
        A = [mpmath.matrix(a.tolist()) for a in c.maps]
        Ainv = [mpmath.inverse(a) for a in A]
        F = [mpmath.matrix(v.tolist()) for v in f.vectors]
        phi = [None] * n
        xp = [None] * n
        phi[z] = mpmath.eye(d)
        xp[z] = mpmath.zeros(d, 1)
        for i in range(z, n - 1):
            phi[i + 1] = A[i] * phi[i]
            xp[i + 1] = A[i] * xp[i] + F[i + 1]
        for i in range(z - 1, -1, -1):
            phi[i] = Ainv[i] * phi[i + 1]
            xp[i] = Ainv[i] * (xp[i + 1] - F[i + 1])
        G = mpmath.zeros(d, d)
        b = mpmath.zeros(d, 1)
        for i in range(n):
            w2 = mpmath.mpf(abs(lo + i) + 1) ** (2 * omega)
            pt = phi[i].T
            G += w2 * (pt * phi[i])
            b += w2 * (pt * xp[i])
        v = -mpmath.lu_solve(G, b)
        x = np.array([[float(e) for e in (xp[i] + phi[i] * v)] for i in range(n)])
    sol = WeightedSeq(c.window, x, omega)
    return sol, weighted_norm(sol)
