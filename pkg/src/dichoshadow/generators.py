"""Seeded families of test cocycles and nonlinear systems with known structure."""

from __future__ import annotations

import dataclasses

import numpy as np

from .cocycle import IndexWindow, LinearCocycle, make_cocycle
from .dichotomy import DichotomySplitting
from .shadowing import NonlinearSequenceSystem, property_c_from_projections


def _bounded_matrix(rng: np.random.Generator, dim: int, cond: float) -> np.ndarray:
    """Random matrix with singular values in ``[1/sqrt(cond), sqrt(cond)]``."""
    u, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    v, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    s = np.exp(rng.uniform(-0.5, 0.5, dim) * np.log(cond))
    return u @ np.diag(s) @ v.T


@dataclasses.dataclass(frozen=True, eq=False)
class HyperbolicFamily:
    """``A_k = T_{k+1} D T_k^{-1}`` with periodic frames ``T_k`` and diagonal ``D``.

    ``lam_true`` is the largest stable entry of ``D`` and the reciprocal of the
    smallest unstable one, so the exact splitting ``T_k diag(I, 0) T_k^{-1}``
    is a dichotomy with rate ``lam_true`` and ``K <= max ||T|| ||T^-1||``.
    """

    cocycle: LinearCocycle
    projections: np.ndarray
    lam_true: float
    K_true: float
    stable_dim: int

    def splitting(self, window: IndexWindow | None = None) -> DichotomySplitting:
        full = DichotomySplitting(self.cocycle.window, self.projections, self.K_true, self.lam_true)
        return full if window is None else full.restrict(window)


def hyperbolic_family(rng: np.random.Generator, dim: int, window: IndexWindow, lam_true: float,
                      period: int = 5, cond: float = 4.0, stable_dim: int | None = None) -> HyperbolicFamily:
    """Conjugation chain of a fixed hyperbolic diagonal by ``period`` random frames."""
    s = int(rng.integers(1, dim)) if stable_dim is None else stable_dim
    stable = lam_true * rng.uniform(0.5, 1.0, s)
    stable[0] = lam_true
    unstable = rng.uniform(1.0, 2.0, dim - s) / lam_true
    if dim - s:
        unstable[0] = 1.0 / lam_true
    D = np.diag(np.r_[stable, unstable])
    frames = [_bounded_matrix(rng, dim, cond) for _ in range(period)]
    inv = [np.linalg.inv(t) for t in frames]

    def frame(k):
        return k % period

    ks = window.indices()
    mats = [frames[frame(k + 1)] @ D @ inv[frame(k)] for k in ks[:-1]]
    sel = np.diag(np.r_[np.ones(s), np.zeros(dim - s)])
    P = np.array([frames[frame(k)] @ sel @ inv[frame(k)] for k in ks])
    Kt = max(np.linalg.norm(t, 2) * np.linalg.norm(ti, 2) for t, ti in zip(frames, inv))
    Kt = max(Kt, float(np.max(np.linalg.norm(np.eye(dim) - P, ord=2, axis=(1, 2)))))
    return HyperbolicFamily(make_cocycle(mats, window), P, lam_true, Kt * (1 + 1e-9), s)


def property_c_family(rng: np.random.Generator, dim: int, window: IndexWindow,
                      N_max: float = 2.0, lam_max: float = 0.5, max_tries: int = 200):
    """Cocycle plus property-(C) data with fitted ``N <= N_max`` and ``lam <= lam_max``.

    Draws strongly hyperbolic conjugation chains with mildly non-orthogonal
    frames and rejects those whose one-step constants exceed the targets.
    """
    for _ in range(max_tries):
        fam = hyperbolic_family(rng, dim, window, lam_true=rng.uniform(0.1, 0.3), period=4, cond=1.5)
        data = property_c_from_projections(fam.cocycle, fam.projections)
        if data.N <= N_max and data.lam <= lam_max:
            return fam.cocycle, data
    raise RuntimeError("rejection sampling for property (C) systems did not succeed")


def sine_nonlinearity(rng: np.random.Generator, window: IndexWindow, dim: int, kappa: float,
                      offsets: np.ndarray):
    """``w_j(v) = o_j + kappa R_j (sin(v + c_j) - sin c_j)`` with random rotations ``R_j``.

    ``offsets[i]`` is ``o_j`` for ``j = lo + i``; each ``w_j`` is
    ``kappa``-Lipschitz everywhere.
    """
    n = len(window)
    R = np.array([np.linalg.qr(rng.standard_normal((dim, dim)))[0] for _ in range(n)])
    phase = rng.uniform(0, 2 * np.pi, (n, dim))
    lo = window.lo
    offsets = np.array(offsets, dtype=float)

    def w(j, V):
        i = np.asarray(j) - lo
        return offsets[i] + kappa * np.einsum("kij,kj->ki", R[i], np.sin(V + phase[i]) - np.sin(phase[i]))

    return w


def random_nonlinear_system(rng: np.random.Generator, dim: int, window: IndexWindow, kappa: float,
                            d: float, gamma: float, Delta: float = 1.0):
    """Property-(C) system whose offsets ``f_k(0)`` have ``gamma``-norm exactly ``d``."""
    c, data = property_c_family(rng, dim, window)
    n = len(window)
    k = window.indices()
    raw = rng.standard_normal((n, dim)) * rng.uniform(0.2, 1.0, (n, 1))
    raw *= ((np.abs(k) + 1.0) ** -gamma)[:, None]
    raw[-1] = 0.0
    weighted = np.linalg.norm(raw, axis=1) * (np.abs(k) + 1.0) ** gamma
    raw *= d / weighted.max()
    # f_k(0) = w_{k+1}(0): shift the offsets onto the nonlinearity's own index
    o = np.zeros((n, dim))
    o[1:] = raw[:-1]
    system = NonlinearSequenceSystem(c, sine_nonlinearity(rng, window, dim, kappa, o), kappa, Delta)
    return system, data


def rotation_cocycle(angle: float, window: IndexWindow) -> LinearCocycle:
    r = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return make_cocycle([r] * (len(window) - 1), window)


def piecewise_expanding(window: IndexWindow) -> LinearCocycle:
    """``diag(2,2)`` for ``k >= 0`` and ``diag(1/2,1/2)`` for ``k < 0``: every solution grows both ways."""
    mats = [np.diag([2.0, 2.0]) if k >= 0 else np.diag([0.5, 0.5]) for k in window.indices()[:-1]]
    return make_cocycle(mats, window)


__all__ = [
    "HyperbolicFamily", "hyperbolic_family", "property_c_family", "sine_nonlinearity",
    "random_nonlinear_system", "rotation_cocycle", "piecewise_expanding",
]
