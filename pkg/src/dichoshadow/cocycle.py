"""Finite windows of linear cocycles on R^d and their transition operators."""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from . import config
from .errors import DimensionMismatch, IndexOutOfWindow, SingularMatrix


@dataclasses.dataclass(frozen=True)
class IndexWindow:
    """Inclusive integer interval ``[lo, hi]``."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ValueError("window bounds must be integers")
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    def __len__(self):
        return self.hi - self.lo + 1

    def __contains__(self, k):
        return self.lo <= k <= self.hi

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def pos(self, k: int) -> int:
        """Array position of index ``k``."""
        if k not in self:
            raise IndexOutOfWindow(k, self)
        return k - self.lo

    def as_list(self):
        return [self.lo, self.hi]


def spectral_norm(a: np.ndarray) -> np.ndarray:
    """Operator 2-norm; works on a single matrix or a stack of them."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 0 or a.shape[-2] == 0:
        return np.zeros(a.shape[:-2])
    return np.linalg.norm(a, ord=2, axis=(-2, -1))


@dataclasses.dataclass(frozen=True)
class TransitionTable:
    """Prefix products ``Phi_{k,lo}`` and ``Phi_{lo,k}`` for every k in the window.

    These are kept for diagnostics (overflow warnings); the transition operator
    itself is evaluated as a direct segment product, see :func:`transition`.
    """

    prefix: np.ndarray
    prefix_inv: np.ndarray
    max_norm: float


@dataclasses.dataclass(frozen=True, eq=False)
class LinearCocycle:
    """Invertible maps ``A_k`` for ``k`` in ``[lo, hi-1]`` acting on R^d.

    Use :func:`make_cocycle` to build one; it computes inverses and the norm
    bound ``M``.
    """

    dim: int
    window: IndexWindow
    maps: np.ndarray
    inverses: np.ndarray
    norm_bound: float
    table: TransitionTable

    @property
    def ill_conditioned(self) -> bool:
        # reported, never raised: long hyperbolic windows routinely exceed it
        return self.table.max_norm > config.get().overflow_warning

    def A(self, k: int) -> np.ndarray:
        if not (self.window.lo <= k < self.window.hi):
            raise IndexOutOfWindow(k, self.window)
        return self.maps[k - self.window.lo]

    def Ainv(self, k: int) -> np.ndarray:
        if not (self.window.lo <= k < self.window.hi):
            raise IndexOutOfWindow(k, self.window)
        return self.inverses[k - self.window.lo]

    def restrict(self, window: IndexWindow) -> "LinearCocycle":
        """Sub-cocycle on a smaller window."""
        if window.lo < self.window.lo or window.hi > self.window.hi:
            raise IndexOutOfWindow(window.lo if window.lo < self.window.lo else window.hi, self.window)
        a = window.lo - self.window.lo
        b = window.hi - self.window.lo
        return _build(self.maps[a:b], self.inverses[a:b], window)

    def reversed(self) -> "LinearCocycle":
        """Time-reversed cocycle ``B_j = A_{-j-1}^{-1}`` on ``[-hi, -lo]``.

        Index ``j`` of the result corresponds to index ``-j`` of ``self``.
        """
        window = IndexWindow(-self.window.hi, -self.window.lo)
        return _build(self.inverses[::-1].copy(), self.maps[::-1].copy(), window)


def _build(maps, inverses, window):
    n = len(window)
    d = maps.shape[1] if len(maps) else 0
    prefix = np.empty((n, d, d))
    prefix_inv = np.empty((n, d, d))
    prefix[0] = prefix_inv[0] = np.eye(d)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n - 1):
            prefix[i + 1] = maps[i] @ prefix[i]
            prefix_inv[i + 1] = prefix_inv[i] @ inverses[i]
        max_norm = float(np.nanmax(np.abs(np.concatenate([prefix, prefix_inv])))) if n else 1.0
    if len(maps):
        M = float(max(spectral_norm(maps).max(), spectral_norm(inverses).max()))
    else:
        M = 1.0
    maps.setflags(write=False)
    inverses.setflags(write=False)
    table = TransitionTable(prefix, prefix_inv, max_norm)
    return LinearCocycle(d, window, maps, inverses, max(M, 1.0), table)


def make_cocycle(matrices, window: IndexWindow | tuple | list) -> LinearCocycle:
    """Build a cocycle from ``len(window) - 1`` square matrices.

    Raises :class:`SingularMatrix` with the offending index if some ``A_k``
    cannot be inverted to within the invertibility tolerance.
    """
    if not isinstance(window, IndexWindow):
        window = IndexWindow(*window)
    mats = [np.asarray(m, dtype=float) for m in matrices]
    if len(mats) != len(window) - 1:
        raise DimensionMismatch(
            f"window [{window.lo}, {window.hi}] needs {len(window) - 1} maps, got {len(mats)}"
        )
    if not mats:
        raise DimensionMismatch("a cocycle needs at least one map")
    d = mats[0].shape[0] if mats[0].ndim == 2 else -1
    for m in mats:
        if m.ndim != 2 or m.shape != (d, d):
            raise DimensionMismatch(f"expected {d}x{d} matrices, got shape {m.shape}")
    maps = np.array(mats)
    tol = config.get().invertibility
    inverses = np.empty_like(maps)
    eye = np.eye(d)
    for i, a in enumerate(maps):
        k = window.lo + i
        try:
            inv = np.linalg.inv(a)
        except np.linalg.LinAlgError:
            raise SingularMatrix(k) from None
        if not np.all(np.isfinite(inv)) or spectral_norm(a @ inv - eye) > tol:
            raise SingularMatrix(k)
        inverses[i] = inv
    return _build(maps, inverses, window)


def constant_cocycle(matrix, window) -> LinearCocycle:
    if not isinstance(window, IndexWindow):
        window = IndexWindow(*window)
    return make_cocycle([matrix] * (len(window) - 1), window)


def transition(c: LinearCocycle, m: int, l: int) -> np.ndarray:
    """Cauchy matrix ``Phi_{m,l}``.

    ``A_{m-1}...A_l`` for m > l, the identity for m == l and
    ``A_m^{-1}...A_{l-1}^{-1}`` for m < l.  Evaluated as a direct product over
    the segment between ``l`` and ``m``: composing cached prefixes
    ``Phi_{m,lo} Phi_{lo,l}`` loses every digit of the contracting directions
    once the prefixes outgrow ~1e8.
    """
    w = c.window
    if m not in w:
        raise IndexOutOfWindow(m, w)
    if l not in w:
        raise IndexOutOfWindow(l, w)
    if m == l:
        return np.eye(c.dim)
    if m > l:
        seg = c.maps[l - w.lo:m - w.lo]
        return functools.reduce(lambda acc, a: a @ acc, seg, np.eye(c.dim))
    seg = c.inverses[m - w.lo:l - w.lo]
    return functools.reduce(lambda acc, a: acc @ a, seg, np.eye(c.dim))


def random_invertible_cocycle(rng: np.random.Generator, dim: int, length: int,
                              spread: float = 1.25, lo: int = 0) -> LinearCocycle:
    """Random cocycle whose maps have singular values in ``[1/spread, spread]``."""
    mats = []
    for _ in range(length - 1):
        u, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        v, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        s = np.exp(rng.uniform(-np.log(spread), np.log(spread), dim))
        mats.append(u @ np.diag(s) @ v.T)
    return make_cocycle(mats, IndexWindow(lo, lo + length - 1))


def cocycle_to_json(c: LinearCocycle) -> dict:
    return {"window": c.window.as_list(), "maps": c.maps.tolist()}


def cocycle_from_json(obj: dict) -> LinearCocycle:
    """Inverse of :func:`cocycle_to_json`."""
    return make_cocycle(obj["maps"], IndexWindow(*obj["window"]))
