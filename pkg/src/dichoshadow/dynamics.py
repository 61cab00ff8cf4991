"""Hyperbolic toral maps, decaying pseudo-orbits and their shadowing orbits.

On the flat torus the exponential map is a translation, so the chart map at
``x_k`` is ``F_k(v) = lift(f(x_k + v) - x_{k+1})`` where ``lift`` picks the
representative of a difference in ``[-1/2, 1/2)^2``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .cocycle import IndexWindow, make_cocycle
from .dichotomy import (
    decaying_subspace,
    estimate_splitting,
    subspace_pair,
    transversality_check,
)
from .errors import (
    DomainError,
    GluingNotSolvable,
    NoGapDetected,
    VerificationFailed,
    ZeroNotInWindow,
)
from .perron import solve_fullline
from .shadowing import (
    NonlinearSequenceSystem,
    operator_bound,
    property_c_from_projections,
    shadowing_constants,
    solve_nonlinear,
)
from .weighted import WeightedSeq, weighted_norm

log = logging.getLogger(__name__)

CAT = ((2, 1), (1, 1))
DEFAULT_DELTA = 0.1
SEGMENT = 20
_TWO_PI = 2.0 * math.pi


def lift(delta) -> np.ndarray:
    """Representative of a torus displacement with coordinates in ``[-1/2, 1/2)``."""
    delta = np.asarray(delta, dtype=float)
    return delta - np.floor(delta + 0.5)


def torus_dist(x, y) -> np.ndarray:
    return np.linalg.norm(lift(np.asarray(x) - np.asarray(y)), axis=-1)


@dataclasses.dataclass(frozen=True, eq=False)
class TorusMap:
    """``x -> M x + eps (sin 2 pi x_2, sin 2 pi x_1)  (mod 1)`` for an integer ``M`` with ``|det M| = 1``."""

    matrix: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or np.any(m != np.round(m)):
            raise DomainError("torus map needs a 2x2 integer matrix")
        if round(abs(np.linalg.det(m))) != 1:
            raise DomainError("torus map matrix must have determinant +-1")
        inv = np.round(np.linalg.inv(m))
        if self.epsilon < 0 or _TWO_PI * self.epsilon * np.linalg.norm(inv, 2) >= 0.5:
            raise DomainError("perturbation too large for the map to stay invertible")
        m.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_inv", inv)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def derivative_lipschitz(self) -> float:
        """Lipschitz constant of the perturbation's derivative."""
        return _TWO_PI ** 2 * self.epsilon

    def perturbation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.epsilon * np.sin(_TWO_PI * x[..., ::-1])

    def perturbation_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = _TWO_PI * self.epsilon * np.cos(_TWO_PI * x)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = c[..., 1]
        out[..., 1, 0] = c[..., 0]
        return out

    def lifted(self, x) -> np.ndarray:
        """The map on R^2 before reduction mod 1."""
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.perturbation(x)

    def inverse(self, y, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
        """Preimage in ``[0,1)^2``; fixed-point solve of ``x = M^-1 (y - p(x))``."""
        y = np.asarray(y, dtype=float)
        x = y @ self._inv.T
        for _ in range(max_iter):
            nxt = (y - self.perturbation(x)) @ self._inv.T
            if np.max(np.abs(nxt - x)) < tol:
                x = nxt
                break
            x = nxt
        else:
            raise DomainError("inverse map iteration did not converge")
        # the iteration contracts by at most 1/2 per step; polish to rounding level
        if self.epsilon:
            for _ in range(6):
                x = (y - self.perturbation(x)) @ self._inv.T
        return np.mod(x, 1.0)

    def to_json(self) -> dict:
        kind = "linear"
        if np.array_equal(self.matrix, np.array(CAT, dtype=float)):
            kind = "perturbed_cat" if self.epsilon else "cat"
        return {"kind": kind, "matrix": self.matrix.astype(int).tolist(), "epsilon": self.epsilon}


def cat_map(epsilon: float = 0.0) -> TorusMap:
    return TorusMap(np.array(CAT), epsilon)


def map_from_json(obj: dict) -> TorusMap:
    kind = obj.get("kind", "cat")
    if kind not in ("cat", "perturbed_cat", "linear"):
        raise DomainError(f"unknown map kind {kind!r}")
    matrix = obj.get("matrix", CAT if kind != "linear" else None)
    if matrix is None:
        raise DomainError("linear maps need a matrix")
    return TorusMap(np.array(matrix), float(obj.get("epsilon", 0.0)))


def map_step(m: TorusMap, x) -> np.ndarray:
    return np.mod(m.lifted(x), 1.0)


def map_derivative(m: TorusMap, x) -> np.ndarray:
    return m.matrix + m.perturbation_derivative(x)


@dataclasses.dataclass(frozen=True, eq=False)
class PseudoOrbit:
    window: IndexWindow
    points: np.ndarray
    d: float
    gamma: float
    seed: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.shape != (len(self.window), 2):
            raise DomainError("pseudo-orbit needs one torus point per window index")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def envelope(self, scale: float | None = None) -> np.ndarray:
        """``scale (|k|+1)**-gamma`` (``scale`` defaults to ``d``)."""
        s = self.d if scale is None else scale
        return s * (np.abs(self.window.indices()) + 1.0) ** -self.gamma


def step_errors(m: TorusMap, po: PseudoOrbit) -> np.ndarray:
    """``dist(x_{k+1}, f(x_k))`` for ``k`` in ``[lo, hi-1]``."""
    return torus_dist(po.points[1:], map_step(m, po.points[:-1]))


def generate_pseudo_orbit(m: TorusMap, x0, window: IndexWindow, d: float, gamma: float,
                          seed: int) -> PseudoOrbit:
    """Two-sided ``gamma``-decreasing ``d``-pseudo-orbit through ``x0``.

    Each step error has a uniformly drawn direction and magnitude strictly below
    ``d (|k|+1)**-gamma``.  Forward errors are drawn first, then backward ones.
    """
    if 0 not in window:
        raise ZeroNotInWindow(f"window {window.as_list()} does not contain 0")
    if not 0.0 <= d < 0.25:
        raise DomainError("d must lie in [0, 0.25)")
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    rng = np.random.default_rng(seed)
    lo, hi = window.lo, window.hi
    pts = np.empty((len(window), 2))
    z = -lo
    pts[z] = np.mod(np.asarray(x0, dtype=float), 1.0)

    def error(k):
        radius = d * (abs(k) + 1.0) ** -gamma * rng.uniform() * (1.0 - 1e-9)
        theta = rng.uniform(0.0, _TWO_PI)
        return radius * np.array([math.cos(theta), math.sin(theta)])

    for k in range(0, hi):
        pts[z + k + 1] = np.mod(m.lifted(pts[z + k]) + error(k), 1.0)
    for k in range(-1, lo - 1, -1):
        pts[z + k] = m.inverse(np.mod(pts[z + k + 1] - error(k), 1.0))
    return PseudoOrbit(window, pts, float(d), float(gamma), int(seed))


@dataclasses.dataclass(frozen=True, eq=False)
class ShadowingOutcome:
    window: IndexWindow
    p: np.ndarray
    orbit: np.ndarray
    distances: np.ndarray
    L_used: float
    d: float
    gamma: float
    certified: bool
    iterations: int = 0
    contraction_observed: float = 0.0

    def envelope(self) -> np.ndarray:
        return self.L_used * self.d * (np.abs(self.window.indices()) + 1.0) ** -self.gamma

    def to_json(self) -> dict:
        return {
            "window": self.window.as_list(),
            "p": self.p.tolist(),
            "L": self.L_used,
            "d": self.d,
            "gamma": self.gamma,
            "certified": self.certified,
            "iterations": self.iterations,
            "contraction_observed": self.contraction_observed,
            "max_weighted_distance": float(np.max(self.distances * (np.abs(self.window.indices()) + 1.0) ** self.gamma)),
        }


def _cat_splitting(m: TorusMap, n: int) -> np.ndarray:
    """Orthogonal projections onto the contracting eigenline (symmetric integer matrix)."""
    vals, vecs = np.linalg.eigh(m.matrix)
    s = vecs[:, [int(np.argmin(np.abs(vals)))]]
    return np.broadcast_to(s @ s.T, (n, 2, 2)).copy()


def shadow_orbit(m: TorusMap, po: PseudoOrbit, Delta: float = DEFAULT_DELTA) -> ShadowingOutcome:
    """Find the true orbit through ``p`` that shadows ``po`` in the ``gamma``-weighted norm."""
    window = po.window
    x = po.points
    A = map_derivative(m, x[:-1])
    c = make_cocycle(list(A), window)
    n = len(window)
    if m.epsilon == 0.0 and np.allclose(m.matrix, m.matrix.T):
        P = _cat_splitting(m, n)
    else:
        P = estimate_splitting(c).projections
    data = property_c_from_projections(c, P)
    kappa = m.derivative_lipschitz * Delta
    consts = shadowing_constants(data.N, data.lam, kappa, Delta)

    offsets = lift(m.lifted(x[:-1]) - x[1:])
    base_p = m.perturbation(x[:-1])
    base_dp = m.perturbation_derivative(x[:-1])
    lo = window.lo

    def nonlinearity(j, V):
        k = np.asarray(j) - 1 - lo
        pv = m.perturbation(x[k] + V)
        return offsets[k] + pv - base_p[k] - np.einsum("kij,kj->ki", base_dp[k], V)

    system = NonlinearSequenceSystem(c, nonlinearity, kappa, Delta)
    res = solve_nonlinear(system, data, po.gamma, consts, check_lipschitz=m.epsilon > 0)
    v = res.v.vectors
    orbit = np.mod(x + v, 1.0)
    p = orbit[-lo].copy()
    recomputed, gap = _segment_distances(m, orbit, p, x, lo)
    dist = np.linalg.norm(v, axis=1)
    disagreement = float(np.max(np.abs(recomputed - dist)))
    if disagreement > 1e-6 or gap > 1e-6:
        raise VerificationFailed(
            f"recomputed orbit disagrees with the chart solution by {max(disagreement, gap):.3e}"
        )
    env = consts.L * po.d * (np.abs(window.indices()) + 1.0) ** -po.gamma
    certified = bool(np.all(dist <= env))
    return ShadowingOutcome(window, p, orbit, dist, consts.L, po.d, po.gamma, certified,
                            res.iterations, res.contraction_observed)


def _segment_distances(m: TorusMap, orbit: np.ndarray, p: np.ndarray, x: np.ndarray, lo: int):
    """Distances ``dist(x_k, f^k(p))`` recomputed segment by segment outward from 0.

    Each segment restarts from the orbit point at its inner end (``p`` itself
    at 0) and iterates ``SEGMENT`` steps; the returned gap is the largest jump
    between a segment's last point and the orbit point it should reach.
    """
    n = len(orbit)
    z = -lo
    out = np.empty(n)
    out[z] = torus_dist(x[z], p)
    gap = 0.0
    for start in range(z, n - 1, SEGMENT):
        y = p if start == z else orbit[start]
        for i in range(start + 1, min(start + SEGMENT, n - 1) + 1):
            y = map_step(m, y)
            out[i] = torus_dist(x[i], y)
        gap = max(gap, float(torus_dist(y, orbit[i])))
    for start in range(z, 0, -SEGMENT):
        y = p if start == z else orbit[start]
        for i in range(start - 1, max(start - SEGMENT, 0) - 1, -1):
            y = m.inverse(y)
            out[i] = torus_dist(x[i], y)
        gap = max(gap, float(torus_dist(y, orbit[i])))
    return out, gap


@dataclasses.dataclass
class ShadowingReport:
    certified: bool
    max_ratio: float
    max_disagreement: float
    max_gap: float
    distances: np.ndarray
    ratios: np.ndarray

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "max_ratio": self.max_ratio,
            "max_disagreement": self.max_disagreement,
            "max_segment_gap": self.max_gap,
        }


def verify_shadowing(m: TorusMap, po: PseudoOrbit, out: ShadowingOutcome) -> ShadowingReport:
    """Recompute ``dist(x_k, f^k(p))`` segment-wise and compare with ``L d (|k|+1)**-gamma``."""
    dist, gap = _segment_distances(m, out.orbit, out.p, po.points, po.window.lo)
    env = out.L_used * po.d * (np.abs(po.window.indices()) + 1.0) ** -po.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dist == 0, 0.0, dist / env)
    max_ratio = float(np.max(ratios))
    # a segment that fails to reach the next anchor means the anchors are not one orbit
    if gap > 1e-6:
        max_ratio = max(max_ratio, math.inf if po.d == 0 else gap / (out.L_used * po.d))
    disagreement = float(np.max(np.abs(dist - out.distances)))
    return ShadowingReport(max_ratio <= 1.0, max_ratio, disagreement, gap, dist, ratios)


def outcome_csv_rows(po: PseudoOrbit, out: ShadowingOutcome, report: ShadowingReport):
    header = ["k", "x1", "x2", "dist", "envelope", "ratio"]
    env = out.envelope()
    rows = [
        [int(k), float(pt[0]), float(pt[1]), float(dk), float(e), float(r)]
        for k, pt, dk, e, r in zip(po.window.indices(), po.points, report.distances, env, report.ratios)
    ]
    return header, rows


def true_orbit(m: TorusMap, p, window: IndexWindow) -> np.ndarray:
    if 0 not in window:
        raise ZeroNotInWindow(f"window {window.as_list()} does not contain 0")
    pts = np.empty((len(window), 2))
    z = -window.lo
    pts[z] = np.mod(np.asarray(p, dtype=float), 1.0)
    for i in range(z, len(window) - 1):
        pts[i + 1] = map_step(m, pts[i])
    for i in range(z - 1, -1, -1):
        pts[i] = m.inverse(pts[i + 1])
    return pts


@dataclasses.dataclass
class AdmissibilityReport:
    transverse: bool
    angle: float
    dim_plus: int
    dim_minus: int
    norms: list
    max_norm: float
    envelope: float
    within_envelope: bool
    verdict: str

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def admissibility_probe(m: TorusMap, p, window: IndexWindow, gamma: float, trials: int, seed: int,
                        decay_tol: float = 1e-3, jobs: int = 1) -> AdmissibilityReport:
    """Transversality of the decaying subspaces along the orbit of ``p`` plus random solvability trials.

    Trials draw ``z`` with ``||z||_gamma <= 1`` and record the weighted norm
    of the glued bounded solution.  A missing gap or a failed gluing yields a
    negative verdict rather than an exception.
    """
    orbit = true_orbit(m, p, window)
    c = make_cocycle(list(map_derivative(m, orbit[:-1])), window)
    bp = decaying_subspace(c, "forward", decay_tol)
    bm = decaying_subspace(c, "backward", decay_tol)
    t = transversality_check(subspace_pair(bp, bm), c.dim)
    base = dict(transverse=t.transverse, angle=t.angle, dim_plus=bp.shape[1], dim_minus=bm.shape[1])
    if not t.transverse:
        return AdmissibilityReport(**base, norms=[], max_norm=math.nan, envelope=math.nan,
                                   within_envelope=False, verdict="not-transverse")
    try:
        s_plus = estimate_splitting(c.restrict(IndexWindow(0, window.hi)))
        s_minus = estimate_splitting(c.restrict(IndexWindow(window.lo, 0)))
    except NoGapDetected as e:
        log.info("probe: %s", e)
        return AdmissibilityReport(**base, norms=[], max_norm=math.nan, envelope=math.nan,
                                   within_envelope=False, verdict="no-gap")
    rng = np.random.default_rng(seed)
    w = (np.abs(window.indices()) + 1.0) ** -gamma
    inputs = []
    for _ in range(trials):
        u = rng.standard_normal((len(window), c.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        u *= rng.uniform(0, 1, (len(window), 1))
        inputs.append(WeightedSeq(window, u * w[:, None], gamma))

    def run(z):
        try:
            return weighted_norm(solve_fullline(c, s_plus, s_minus, z).y)
        except GluingNotSolvable:
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, inputs))
    else:
        results = [run(z) for z in inputs]
    norms = [r for r in results if r is not None]
    verdict = "admissible" if len(norms) == len(results) else "gluing-failed"
    K = max(s_plus.K, s_minus.K)
    lam = max(s_plus.lam, s_minus.lam)
    env = operator_bound(window, K, lam, gamma)
    max_norm = max(norms, default=0.0)
    return AdmissibilityReport(**base, norms=norms, max_norm=max_norm, envelope=env,
                               within_envelope=bool(max_norm <= env), verdict=verdict)


__all__ = [
    "TorusMap", "PseudoOrbit", "ShadowingOutcome", "ShadowingReport", "AdmissibilityReport",
    "cat_map", "map_from_json", "map_step", "map_derivative", "lift", "torus_dist",
    "generate_pseudo_orbit", "step_errors", "shadow_orbit", "verify_shadowing",
    "outcome_csv_rows", "true_orbit", "admissibility_probe",
]
