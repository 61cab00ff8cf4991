"""Exponential dichotomies of finite cocycle windows.

Verification, estimation and conversion of dichotomy data ``(P_k, K, lambda)``,
plus the forward/backward decaying subspaces at index 0 and the transversality
test used for full-line admissibility.
"""

from __future__ import annotations

import dataclasses
import math
from enum import Enum

import numpy as np
from scipy.linalg import subspace_angles

from . import config
from .cocycle import IndexWindow, LinearCocycle, spectral_norm
from .errors import DomainError, NoGapDetected, WindowMismatch, ZeroNotInWindow

GAP_RATIO = 10.0
_FIT_INFLATION = 1.0 + 1e-6
_GENERIC_SEED = 20130517


@dataclasses.dataclass(frozen=True, eq=False)
class DichotomySplitting:
    window: IndexWindow
    projections: np.ndarray
    K: float
    lam: float

    def __post_init__(self):
        P = np.array(self.projections, dtype=float)
        if P.ndim != 3 or P.shape[0] != len(self.window) or P.shape[1] != P.shape[2]:
            raise WindowMismatch(
                f"need {len(self.window)} square projections for window {self.window.as_list()}, got {P.shape}"
            )
        tol = config.get().identity
        defect = spectral_norm(P @ P - P)
        if np.any(defect > tol * np.maximum(1.0, spectral_norm(P))):
            k = self.window.lo + int(np.argmax(defect))
            raise DomainError(f"P_{k} is not a projection (||P^2 - P|| = {defect.max():.2e})")
        ranks = np.rint(np.trace(P, axis1=1, axis2=2)).astype(int)
        if np.any(ranks != ranks[0]):
            raise DomainError("projection rank changes across the window")
        if self.K <= 0:
            raise DomainError("K must be positive")
        if not 0.0 < self.lam < 1.0:
            raise DomainError(f"lambda must lie in (0, 1), got {self.lam}")
        P.setflags(write=False)
        object.__setattr__(self, "projections", P)
        object.__setattr__(self, "K", float(self.K))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def complements(self) -> np.ndarray:
        return np.eye(self.projections.shape[1]) - self.projections

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.projections[0])))

    def P(self, k: int) -> np.ndarray:
        return self.projections[self.window.pos(k)]

    def Q(self, k: int) -> np.ndarray:
        return np.eye(self.projections.shape[1]) - self.P(k)

    def stable_basis(self, k: int) -> np.ndarray:
        return _range_basis(self.P(k))

    def unstable_basis(self, k: int) -> np.ndarray:
        return _range_basis(self.Q(k))

    def restrict(self, window: IndexWindow) -> "DichotomySplitting":
        a = self.window.pos(window.lo)
        b = self.window.pos(window.hi)
        return DichotomySplitting(window, self.projections[a:b + 1], self.K, self.lam)

    def reversed(self) -> "DichotomySplitting":
        """Splitting of the time-reversed cocycle: stable and unstable swap roles."""
        window = IndexWindow(-self.window.hi, -self.window.lo)
        return DichotomySplitting(window, self.complements[::-1].copy(), self.K, self.lam)


@dataclasses.dataclass
class DichotomyReport:
    passed: bool
    K: float
    lam: float
    worst_stable_ratio: float
    worst_unstable_ratio: float
    worst_invariance_defect: float
    worst_projector_norm: float
    failing_indices: list
    n_failing: int
    invariance_tolerance: float
    stabilized_transport: bool

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "K": self.K,
            "lambda": self.lam,
            "worst": {
                "stable_ratio": self.worst_stable_ratio,
                "unstable_ratio": self.worst_unstable_ratio,
                "invariance_defect": self.worst_invariance_defect,
                "projector_norm": self.worst_projector_norm,
            },
            "failing": self.failing_indices,
            "n_failing": self.n_failing,
            "invariance_tolerance": self.invariance_tolerance,
            "stabilized_transport": self.stabilized_transport,
        }


def _range_basis(P: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    u, s, _ = np.linalg.svd(P)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return u[:, :r]


def _orth(w: np.ndarray) -> np.ndarray:
    if w.shape[1] == 0:
        return w
    q, _ = np.linalg.qr(w)
    return q


def _complement(w: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(w)``."""
    if w.shape[1] == 0:
        return np.eye(d)
    u, _, _ = np.linalg.svd(w, full_matrices=True)
    return u[:, w.shape[1]:]


def _generic_frame(d: int) -> np.ndarray:
    rng = np.random.default_rng(_GENERIC_SEED + d)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


def invariance_defects(c: LinearCocycle, projections: np.ndarray) -> np.ndarray:
    """``||A_k P_k - P_{k+1} A_k|| / ||A_k||`` for every map of the window."""
    P = projections
    A = c.maps
    return spectral_norm(A @ P[:-1] - P[1:] @ A) / spectral_norm(A)


def _forward_log_norms(maps: np.ndarray, proj: np.ndarray, stabilize: bool) -> np.ndarray:
    """``out[j, l] = log ||Phi_{l+j,l} proj_l||`` (NaN where ``l + j`` leaves the window).

    All starting indices are transported together; each column is renormalised
    after every step and the scale kept in log form, so products that over- or
    underflow double precision are still measured.  With ``stabilize`` the
    transported block is re-projected at each step, which keeps contracting
    components from being swamped by rounding in expanding directions.  This is
    only legitimate when the projections are invariant.
    """
    n = len(proj)
    out = np.full((n, n), np.nan)
    X = proj.copy()
    logscale = np.zeros(n)
    for j in range(n):
        m = n - j
        nrm = spectral_norm(X)
        with np.errstate(divide="ignore"):
            out[j, :m] = np.log(nrm) + logscale
        if m == 1:
            break
        safe = np.where(nrm > 0, nrm, 1.0)
        X = X / safe[:, None, None]
        logscale = logscale + np.log(safe)
        X = maps[j:n - 1] @ X[:m - 1]
        if stabilize:
            X = proj[j + 1:n] @ X
        logscale = logscale[:m - 1]
    return out


def pair_log_norms(c: LinearCocycle, projections: np.ndarray, stabilize: bool):
    """Log operator norms of both Green's-function families over all window pairs.

    Returns ``(stable, unstable)`` arrays indexed ``[j, pos]``:
    ``stable[j, l] = log ||Phi_{l+j, l} P_l||`` and
    ``unstable[j, l] = log ||Phi_{l-j, l} Q_l||`` (positions relative to ``lo``).
    """
    P = np.asarray(projections, dtype=float)
    Q = np.eye(c.dim) - P
    stable = _forward_log_norms(c.maps, P, stabilize)
    rev = _forward_log_norms(c.inverses[::-1], Q[::-1], stabilize)
    return stable, np.ascontiguousarray(rev[:, ::-1])


def verify_dichotomy(c: LinearCocycle, s: DichotomySplitting, max_failing: int = 200) -> DichotomyReport:
    """Check the dichotomy inequalities over every pair of window indices.

    Stable: ``||Phi_{k,l} P_l|| <= K lam**(k-l)`` for k >= l; unstable:
    ``||Phi_{k,l} Q_l|| <= K lam**(l-k)`` for k <= l; projector norms at most K;
    invariance as the commutation defect ``||A_k P_k - P_{k+1} A_k||``.
    """
    if s.window != c.window:
        raise WindowMismatch("splitting and cocycle windows differ")
    tol = config.get()
    defects = invariance_defects(c, s.projections)
    worst_defect = float(defects.max()) if defects.size else 0.0
    stabilize = worst_defect <= tol.invariance
    stable, unstable = pair_log_norms(c, s.projections, stabilize)

    n = len(c.window)
    j = np.arange(n)[:, None]
    logK, loglam = math.log(s.K), math.log(s.lam)
    with np.errstate(invalid="ignore"):
        rs = stable - logK - j * loglam
        ru = unstable - logK - j * loglam
    worst_s = _exp_capped(np.nanmax(rs))
    worst_u = _exp_capped(np.nanmax(ru))
    proj_norm = float(max(spectral_norm(s.projections).max(), spectral_norm(s.complements).max()))
    thresh = math.log1p(tol.ratio_slack)

    failing = []
    n_failing = 0
    lo = c.window.lo
    for arr, kind in ((rs, "stable"), (ru, "unstable")):
        with np.errstate(invalid="ignore"):
            jj, ll = np.nonzero(arr > thresh)
        n_failing += len(jj)
        for a, b in zip(jj[:max_failing], ll[:max_failing]):
            k = b + a if kind == "stable" else b - a
            failing.append([int(lo + k), int(lo + b)])
    bad_proj = np.nonzero(
        np.maximum(spectral_norm(s.projections), spectral_norm(s.complements)) > s.K * (1 + tol.ratio_slack)
    )[0]
    n_failing += len(bad_proj)
    failing.extend([[int(lo + b), int(lo + b)] for b in bad_proj[:max_failing]])
    failing = failing[:max_failing]

    passed = (
        worst_s <= 1 + tol.ratio_slack
        and worst_u <= 1 + tol.ratio_slack
        and proj_norm <= s.K * (1 + tol.ratio_slack)
        and worst_defect <= tol.invariance
    )
    return DichotomyReport(
        passed=bool(passed),
        K=s.K,
        lam=s.lam,
        worst_stable_ratio=worst_s,
        worst_unstable_ratio=worst_u,
        worst_invariance_defect=worst_defect,
        worst_projector_norm=proj_norm,
        failing_indices=failing,
        n_failing=int(n_failing),
        invariance_tolerance=tol.invariance,
        stabilized_transport=bool(stabilize),
    )


def _exp_capped(x) -> float:
    if x is None or np.isnan(x):
        return 0.0
    return float(math.exp(min(float(x), 700.0)))


def fit_constants(c: LinearCocycle, projections: np.ndarray, lam: float | None = None):
    """Smallest-ish ``(K, lam)`` certificate for given projections.

    ``lam`` comes from a least-squares slope of the log norms against the index
    gap (unless supplied), ``K`` is the largest multiplier that slope needs, and
    both are inflated by ``1 + 1e-6`` so that :func:`verify_dichotomy` accepts
    the result.
    """
    P = np.asarray(projections, dtype=float)
    defects = invariance_defects(c, P)
    stabilize = (defects.max() if defects.size else 0.0) <= config.get().invariance
    stable, unstable = pair_log_norms(c, P, stabilize)
    n = len(P)
    j = np.broadcast_to(np.arange(n)[:, None], stable.shape)
    y = np.concatenate([stable.ravel(), unstable.ravel()])
    x = np.concatenate([j.ravel(), j.ravel()]).astype(float)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if lam is None:
        if np.ptp(x) == 0:
            raise NoGapDetected("window too short to fit a decay rate")
        slope, _ = np.polyfit(x, y, 1)
        lam = math.exp(slope)
    if not 0.0 < lam < 1.0:
        raise NoGapDetected(f"fitted decay rate {lam:.4g} is not below 1")
    logK = float(np.max(y - x * math.log(lam))) if y.size else 0.0
    proj_norm = float(max(spectral_norm(P).max(), spectral_norm(np.eye(c.dim) - P).max()))
    K = max(math.exp(logK), proj_norm) * _FIT_INFLATION
    lam = lam * _FIT_INFLATION
    if lam >= 1.0:
        raise NoGapDetected("decay rate indistinguishable from 1")
    return K, lam


def _log_growth(maps: np.ndarray, d: int) -> np.ndarray:
    """Log singular values of the full product, sorted descending (QR method)."""
    Q = _generic_frame(d)
    acc = np.zeros(d)
    for a in maps:
        Q, R = np.linalg.qr(a @ Q)
        acc += np.log(np.abs(np.diag(R)))
    return np.sort(acc)[::-1]


def _backward_subspace(inverses: np.ndarray, W: np.ndarray) -> list:
    """Transport ``W`` (a basis at the last index) backward; returns bases at every index."""
    out = [W]
    for ainv in inverses[::-1]:
        W = _orth(ainv @ W)
        out.append(W)
    return out[::-1]


def _forward_subspace(maps: np.ndarray, W: np.ndarray) -> list:
    out = [W]
    for a in maps:
        W = _orth(a @ W)
        out.append(W)
    return out


def _stable_dimension(c: LinearCocycle, rank_tol: float) -> int:
    logs = _log_growth(c.maps, c.dim)
    t = math.log(rank_tol)
    s = int(np.sum(logs < t))
    d = c.dim
    below = logs[d - s] if s > 0 else t
    above = logs[d - s - 1] if s < d else t
    if above - below < math.log(GAP_RATIO):
        raise NoGapDetected(
            f"singular values straddling {rank_tol:g} differ by a factor {math.exp(above - below):.3g} < {GAP_RATIO:g}"
        )
    return s


def estimate_splitting(c: LinearCocycle, rank_tol: float = 1.0, lam: float | None = None) -> DichotomySplitting:
    """Estimate an invariant splitting and fit its dichotomy constants.

    The stable dimension is the number of singular values of ``Phi_{hi,lo}``
    below ``rank_tol``.  Stable subspaces are the dominant subspaces of the
    backward products ``Phi_{k,hi}`` (equivalently the contracted right singular
    directions of ``Phi_{hi,k}``), unstable ones those of ``Phi_{k,lo}``; both
    are obtained by orthonormalised subspace iteration so that neither
    overflows.  At the window end where the future (resp. past) is missing the
    subspace is seeded with the orthogonal complement of its partner.
    """
    if len(c.window) < 4:
        raise DomainError("estimate_splitting needs a window of length >= 4")
    d = c.dim
    s = _stable_dimension(c, rank_tol)
    frame = _generic_frame(d)
    S_first = _backward_subspace(c.inverses, frame[:, :s])
    U = _forward_subspace(c.maps, _complement(S_first[0], d))
    S = _backward_subspace(c.inverses, _complement(U[-1], d))

    limit = config.get().splitting_condition
    n = len(c.window)
    P = np.empty((n, d, d))
    sel = np.diag(np.r_[np.ones(s), np.zeros(d - s)])
    for i in range(n):
        B = np.hstack([S[i], U[i]])
        cond = np.linalg.cond(B)
        if not np.isfinite(cond) or cond > limit:
            raise NoGapDetected(
                f"stable and unstable subspaces at index {c.window.lo + i} are nearly parallel (cond {cond:.2e})"
            )
        P[i] = B @ sel @ np.linalg.inv(B)
    K, lam = fit_constants(c, P, lam)
    return DichotomySplitting(c.window, P, K, lam)


def weighted_to_plain(K1: float, lambda1: float, omega: float):
    """Convert weighted dichotomy constants to plain ones.

    From bounds ``K1 lambda1**|k-l| (k+1)**-omega (l+1)**omega`` on the half-line
    to ``K lam**|k-l|`` with ``lam = sqrt(lambda1)`` and
    ``K = max(K1, K2, K3)``, ``K2 = max_l K1 lambda1**(l/2) (l+1)**omega``,
    ``K3 = 2**omega K1``.
    """
    if not 0.0 < lambda1 < 1.0:
        raise DomainError(f"lambda1 must lie in (0, 1), got {lambda1}")
    if K1 <= 0 or omega < 0:
        raise DomainError("need K1 > 0 and omega >= 0")
    lam = math.sqrt(lambda1)
    # the exponent of the scanned factor is concave in l, so scanning past its
    # stationary point is enough
    peak = -2.0 * omega / math.log(lambda1) - 1.0
    l_max = max(0, math.ceil(peak)) + 2
    l = np.arange(l_max + 1)
    K2 = float(np.max(K1 * np.exp(0.5 * l * math.log(lambda1) + omega * np.log1p(l))))
    K3 = 2.0 ** omega * K1
    return max(K1, K2, K3), lam


class Direction(str, Enum):
    forward = "forward"
    backward = "backward"


def decaying_subspace(c: LinearCocycle, direction: Direction | str = "forward", decay_tol: float = 1e-3) -> np.ndarray:
    """Orthonormal basis of the vectors at index 0 that decay along the window.

    Forward: directions contracted by ``Phi_{hi,0}`` to at most ``decay_tol``
    (estimate of ``B+``); backward: the same for ``Phi_{lo,0}`` (``B-``).
    """
    direction = Direction(direction)
    if 0 not in c.window:
        raise ZeroNotInWindow(f"window {c.window.as_list()} does not contain 0")
    if direction is Direction.backward:
        if c.window.lo == 0:
            return np.zeros((c.dim, 0))
        return decaying_subspace(c.restrict(IndexWindow(c.window.lo, 0)).reversed(), "forward", decay_tol)
    if c.window.hi == 0:
        return np.zeros((c.dim, 0))
    half = c.restrict(IndexWindow(0, c.window.hi))
    logs = _log_growth(half.maps, c.dim)
    m = int(np.sum(logs <= math.log(decay_tol)))
    frame = _generic_frame(c.dim)
    return _backward_subspace(half.inverses, frame[:, :m])[0]


@dataclasses.dataclass(frozen=True, eq=False)
class SubspacePair:
    basis_plus: np.ndarray
    basis_minus: np.ndarray
    min_principal_angle: float


def subspace_pair(basis_plus, basis_minus) -> SubspacePair:
    bp = np.asarray(basis_plus, dtype=float)
    bm = np.asarray(basis_minus, dtype=float)
    for b in (bp, bm):
        if b.shape[1] and spectral_norm(b.T @ b - np.eye(b.shape[1])) > 1e-10:
            raise DomainError("subspace bases must be orthonormal")
    if bp.shape[1] and bm.shape[1]:
        angle = float(np.min(subspace_angles(bp, bm)))
    else:
        angle = math.pi / 2
    return SubspacePair(bp, bm, angle)


@dataclasses.dataclass(frozen=True)
class Transversality:
    transverse: bool
    angle: float


def transversality_check(p: SubspacePair, dim: int) -> Transversality:
    """Whether ``B+ + B- = R^dim``, with the smallest angle between the parts outside their intersection."""
    bp, bm = p.basis_plus, p.basis_minus
    stacked = np.hstack([bp, bm]) if (bp.shape[1] + bm.shape[1]) else np.zeros((dim, 0))
    sv = np.linalg.svd(stacked, compute_uv=False) if stacked.shape[1] else np.zeros(0)
    rank = int(np.sum(sv > 1e-8))
    transverse = rank == dim
    if bp.shape[1] == 0 or bm.shape[1] == 0:
        return Transversality(transverse, math.pi / 2 if transverse else 0.0)
    angles = np.sort(subspace_angles(bp, bm))
    if transverse:
        overlap = bp.shape[1] + bm.shape[1] - dim
        rest = angles[overlap:]
        angle = float(rest.min()) if rest.size else math.pi / 2
    else:
        angle = float(angles.min())
    return Transversality(transverse, angle)
