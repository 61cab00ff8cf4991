"""Property (C), the linear operator G and the Picard solver for perturbed difference equations.

A system ``v_{k+1} = f_k(v_k) = A_k v_k + w_{k+1}(v_k)`` is solved in the
``gamma``-weighted sup-norm space by iterating ``v <- G(h(v))`` where
``h(v)_j = w_j(v_{j-1})``.  The nonlinearity is stored under its own index
``j``, so ``f_k`` pairs ``A_k`` with ``w_{k+1}``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Callable

import numpy as np

from . import config
from .cocycle import IndexWindow, LinearCocycle, spectral_norm
from .errors import (
    DomainError,
    DomainExit,
    MaxIterExceeded,
    NotContraction,
    PreconditionViolation,
    VerificationFailed,
    WindowMismatch,
)
from .weighted import WeightedSeq, weighted_norm

log = logging.getLogger(__name__)

_FIT_INFLATION = 1.0 + 1e-9


def _basis(P: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    u, s, _ = np.linalg.svd(P)
    return u[:, : int(np.sum(s > tol))]


@dataclasses.dataclass(frozen=True, eq=False)
class PropertyCData:
    """Projections ``P_k`` and right inverses ``B_k`` (``A_k B_k = I`` on ``U_{k+1}``).

    ``right_inverses[i]`` belongs to index ``lo + i`` for ``i < len(window) - 1``.
    """

    window: IndexWindow
    projections: np.ndarray
    right_inverses: np.ndarray
    N: float
    lam: float

    def __post_init__(self):
        P = np.array(self.projections, dtype=float)
        B = np.array(self.right_inverses, dtype=float)
        n = len(self.window)
        if P.shape[0] != n or B.shape[0] != n - 1 or P.shape[1:] != B.shape[1:]:
            raise WindowMismatch("need one projection per index and one right inverse per map")
        if self.N < 1.0:
            raise DomainError(f"N must be at least 1, got {self.N}")
        if not 0.0 < self.lam < 1.0:
            raise DomainError(f"lambda must lie in (0, 1), got {self.lam}")
        P.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "projections", P)
        object.__setattr__(self, "right_inverses", B)

    @property
    def complements(self) -> np.ndarray:
        return np.eye(self.projections.shape[1]) - self.projections


@dataclasses.dataclass
class PropertyCReport:
    passed: bool
    worst: dict

    def to_json(self) -> dict:
        return {"passed": self.passed, "worst": self.worst}


def right_inverses(c: LinearCocycle, projections: np.ndarray) -> np.ndarray:
    """``B_k = Ub_k (A_k Ub_k)^+ Q_{k+1}`` with ``Ub_k`` an orthonormal basis of ``U_k``."""
    P = np.asarray(projections, dtype=float)
    Q = np.eye(c.dim) - P
    out = np.empty_like(c.maps)
    for i, a in enumerate(c.maps):
        ub = _basis(Q[i])
        if ub.shape[1] == 0:
            out[i] = 0.0
            continue
        out[i] = ub @ np.linalg.pinv(a @ ub) @ Q[i + 1]
    return out


def _restricted_norms(c: LinearCocycle, P: np.ndarray, B: np.ndarray):
    """``||A_k|S_k||`` and ``||B_k|U_{k+1}||`` for every map."""
    Q = np.eye(c.dim) - P
    a_s = np.array([spectral_norm(a @ _basis(P[i])) for i, a in enumerate(c.maps)])
    b_u = np.array([spectral_norm(b @ _basis(Q[i + 1])) for i, b in enumerate(B)])
    return a_s, b_u


def property_c_from_projections(c: LinearCocycle, projections, N: float | None = None,
                                lam: float | None = None) -> PropertyCData:
    """Default right inverses plus fitted ``(N, lam)`` unless given."""
    P = np.asarray(projections, dtype=float)
    B = right_inverses(c, P)
    if N is None:
        N = float(max(spectral_norm(P).max(), spectral_norm(np.eye(c.dim) - P).max(), 1.0)) * _FIT_INFLATION
    if lam is None:
        a_s, b_u = _restricted_norms(c, P, B)
        lam = float(max(a_s.max(initial=0.0), b_u.max(initial=0.0))) * _FIT_INFLATION
        if lam >= 1.0:
            raise NotContraction(f"one-step contraction rate {lam:.4g} is not below 1")
        lam = max(lam, 1e-12)
    return PropertyCData(c.window, P, B, N, lam)


def verify_property_C(c: LinearCocycle, data: PropertyCData) -> PropertyCReport:
    """Check every property-(C) condition and report the worst value of each."""
    if data.window != c.window:
        raise WindowMismatch("property (C) data and cocycle windows differ")
    tol = config.get()
    P, Q, B = data.projections, data.complements, data.right_inverses
    anorm = spectral_norm(c.maps)
    a_s, b_u = _restricted_norms(c, P, B)
    Ub_next = [_basis(q) for q in Q[1:]]
    worst = {
        "projector_norm": float(max(spectral_norm(P).max(), spectral_norm(Q).max())),
        "stable_inclusion": float((spectral_norm(Q[1:] @ c.maps @ P[:-1]) / anorm).max()),
        "stable_contraction": float(a_s.max(initial=0.0)),
        "unstable_inclusion": float(spectral_norm(P[:-1] @ B @ Q[1:]).max()),
        "right_inverse_contraction": float(b_u.max(initial=0.0)),
        "right_inverse_defect": float(max(
            (spectral_norm((a @ b - np.eye(c.dim)) @ u) for a, b, u in zip(c.maps, B, Ub_next)),
            default=0.0,
        )),
    }
    slack = 1 + tol.ratio_slack
    passed = (
        worst["projector_norm"] <= data.N * slack
        and worst["stable_inclusion"] <= tol.invariance
        and worst["stable_contraction"] <= data.lam * slack
        and worst["unstable_inclusion"] <= tol.invariance
        and worst["right_inverse_contraction"] <= data.lam * slack
        and worst["right_inverse_defect"] <= tol.identity
    )
    return PropertyCReport(bool(passed), worst)


@dataclasses.dataclass(frozen=True)
class ShadowingConstants:
    N1: float
    L: float
    d0: float
    kappa: float
    Delta: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def shadowing_constants(N: float, lam: float, kappa: float, Delta: float) -> ShadowingConstants:
    """``N1 = N (1+lam)/(1-lam)``, ``L = N1/(1 - kappa N1)``, ``d0 = Delta/L``."""
    if N < 1.0 or not 0.0 < lam < 1.0 or kappa < 0 or Delta <= 0:
        raise DomainError("need N >= 1, lambda in (0, 1), kappa >= 0 and Delta > 0")
    N1 = N * (1.0 + lam) / (1.0 - lam)
    if kappa * N1 >= 1.0:
        raise NotContraction(f"kappa * N1 = {kappa * N1:.6g} is not below 1")
    L = N1 / (1.0 - kappa * N1)
    return ShadowingConstants(N1=N1, L=L, d0=Delta / L, kappa=kappa, Delta=Delta)


def green_apply(z: WeightedSeq, c: LinearCocycle, data: PropertyCData, gamma: float) -> WeightedSeq:
    """``G(z)_k = sum_{u<=k} A_{k-1}...A_u P_u z_u - sum_{u>k} B_k...B_{u-1} Q_u z_u``.

    Both sums are truncated at the window ends and evaluated by one forward and
    one backward recursion.
    """
    if z.window != c.window or data.window != c.window:
        raise WindowMismatch("sequence, cocycle and property (C) windows must agree")
    zv = z.vectors
    n, d = zv.shape
    P, Q, B = data.projections, data.complements, data.right_inverses
    a = np.zeros((n, d))
    a[0] = P[0] @ zv[0]
    for i in range(n - 1):
        a[i + 1] = P[i + 1] @ (c.maps[i] @ a[i] + zv[i + 1])
    b = np.zeros((n, d))
    for i in range(n - 2, -1, -1):
        b[i] = B[i] @ (Q[i + 1] @ zv[i + 1] + b[i + 1])
    return WeightedSeq(c.window, a - b, gamma)


def operator_bound(window: IndexWindow, N: float, lam: float, gamma: float) -> float:
    """Bound on ``||G||`` in the ``gamma``-weighted norm over the window.

    ``N max_k (|k|+1)**gamma sum_u lam**|k-u| (|u|+1)**-gamma``; on a half-line
    starting at 0 this never exceeds ``N`` times the series constant.
    """
    k = window.indices().astype(float)
    w = (np.abs(k) + 1.0) ** gamma
    dist = np.abs(k[:, None] - k[None, :])
    kernel = lam ** dist
    return float(N * np.max(w * (kernel @ (1.0 / w))))


@dataclasses.dataclass(frozen=True, eq=False)
class NonlinearSequenceSystem:
    """``f_k(v) = A_k v + w_{k+1}(v)`` on a window.

    ``nonlinearity(j, V)`` evaluates ``w_j`` row-wise: ``j`` is an integer
    array of indices and ``V`` the matching ``(len(j), d)`` array of points.
    ``kappa`` is the declared Lipschitz constant of every ``w_j`` on the ball
    of radius ``Delta``.
    """

    cocycle: LinearCocycle
    nonlinearity: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kappa: float
    Delta: float

    @property
    def window(self) -> IndexWindow:
        return self.cocycle.window

    def h(self, v: np.ndarray) -> np.ndarray:
        """``h(v)_j = w_j(v_{j-1})`` for ``j > lo`` and 0 at ``lo``."""
        out = np.zeros_like(v)
        j = self.window.indices()[1:]
        out[1:] = self.nonlinearity(j, v[:-1])
        return out

    def offsets(self, gamma: float = 0.0) -> WeightedSeq:
        """``f_k(0) = w_{k+1}(0)`` stored under index ``k`` (zero at ``hi``)."""
        n, d = len(self.window), self.cocycle.dim
        vals = np.zeros((n, d))
        vals[:-1] = self.nonlinearity(self.window.indices()[1:], np.zeros((n - 1, d)))
        return WeightedSeq(self.window, vals, gamma)

    def residual(self, v: np.ndarray) -> float:
        """``max_k |f_k(v_k) - v_{k+1}|``."""
        f = np.einsum("kij,kj->ki", self.cocycle.maps, v[:-1]) + self.h(v)[1:]
        return float(np.max(np.linalg.norm(f - v[1:], axis=1))) if len(v) > 1 else 0.0

    def lipschitz_spot_check(self, samples: int = 1000, seed: int = 0) -> float:
        """Largest observed ``|w_j(v) - w_j(v')| / (kappa |v - v'|)`` over random pairs in the ball."""
        rng = np.random.default_rng(seed)
        d = self.cocycle.dim
        j = rng.integers(self.window.lo + 1, self.window.hi + 1, size=samples)

        def ball(m):
            x = rng.standard_normal((m, d))
            x /= np.linalg.norm(x, axis=1, keepdims=True)
            return x * self.Delta * rng.uniform(0, 1, (m, 1)) ** (1.0 / d)

        v1, v2 = ball(samples), ball(samples)
        num = np.linalg.norm(self.nonlinearity(j, v1) - self.nonlinearity(j, v2), axis=1)
        den = np.linalg.norm(v1 - v2, axis=1)
        if self.kappa == 0:
            return 0.0 if np.all(num <= 1e-14) else math.inf
        return float(np.max(num / (self.kappa * den)))


@dataclasses.dataclass(frozen=True, eq=False)
class ShadowFixResult:
    v: WeightedSeq
    iterations: int
    contraction_observed: float
    final_step_norm: float
    norm_gamma: float
    L_times_d: float
    residual: float
    step_norms: tuple

    def to_json(self) -> dict:
        return {
            "norm_gamma": self.norm_gamma,
            "iterations": self.iterations,
            "contraction_observed": self.contraction_observed,
            "final_step_norm": self.final_step_norm,
            "L_times_d": self.L_times_d,
            "residual": self.residual,
            "step_norms": list(self.step_norms),
            "v": self.v.vectors.tolist(),
        }


def solve_nonlinear(sys: NonlinearSequenceSystem, data: PropertyCData, gamma: float,
                    consts: ShadowingConstants, tol: float = 1e-13, max_iter: int = 200,
                    check_lipschitz: bool = True) -> ShadowFixResult:
    """Picard iteration ``v <- G(h(v))`` from ``v = 0``.

    Stops once the ``gamma``-weighted step falls below ``tol``.  The result is
    checked against ``||v||_gamma <= L d`` with ``d = ||f(0)||_gamma`` and the
    observed step ratios against ``kappa N1``.
    """
    if consts.kappa * consts.N1 >= 1.0:
        raise NotContraction(f"kappa * N1 = {consts.kappa * consts.N1:.6g} is not below 1")
    if check_lipschitz and sys.lipschitz_spot_check() > 1.0 + 1e-9:
        raise PreconditionViolation("nonlinearity exceeds its declared Lipschitz constant")
    d = weighted_norm(sys.offsets(gamma))
    if d > consts.d0:
        raise PreconditionViolation(f"offset norm {d:.4g} exceeds d0 = {consts.d0:.4g}")
    c = sys.cocycle
    n, dim = len(sys.window), c.dim
    v = np.zeros((n, dim))
    weights = (np.abs(sys.window.indices()) + 1.0) ** gamma
    steps = []
    ratios = []
    for it in range(1, max_iter + 1):
        z = WeightedSeq(sys.window, sys.h(v), gamma)
        v_new = green_apply(z, c, data, gamma).vectors
        if np.max(np.linalg.norm(v_new, axis=1)) > consts.Delta:
            raise DomainExit(f"iterate {it} leaves the ball of radius {consts.Delta}")
        step = float(np.max(np.linalg.norm(v_new - v, axis=1) * weights))
        # ratios of steps already at rounding level say nothing about the map
        if steps and steps[-1] > 0 and step > 1e-10 * steps[0]:
            ratios.append(step / steps[-1])
        steps.append(step)
        v = v_new
        if step < tol:
            break
    else:
        raise MaxIterExceeded(f"no convergence to {tol:g} within {max_iter} iterations")
    vs = WeightedSeq(sys.window, v, gamma)
    norm = weighted_norm(vs)
    Ld = consts.L * d
    contraction = max(ratios, default=0.0)
    log.debug("picard: %d iterations, contraction %.3g, norm %.3g <= %.3g", it, contraction, norm, Ld)
    if norm > Ld * (1 + 1e-9) + 1e-15:
        raise VerificationFailed(f"||v||_gamma = {norm:.6g} exceeds L d = {Ld:.6g}")
    if contraction > consts.kappa * consts.N1 * 1.1 + 1e-12:
        raise VerificationFailed(
            f"observed contraction {contraction:.4g} exceeds kappa N1 = {consts.kappa * consts.N1:.4g}"
        )
    return ShadowFixResult(vs, it, contraction, steps[-1], norm, Ld, sys.residual(v), tuple(steps))
