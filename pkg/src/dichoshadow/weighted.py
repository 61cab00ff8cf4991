"""Sequences in polynomially weighted sup-norm spaces.

A sequence ``x`` on a window has norm ``sup_k |x_k| (|k| + 1)**omega``.  The
weight always uses the absolute index ``k``, so sequences living on
``[-n, n]`` are weighted symmetrically about zero.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .cocycle import IndexWindow
from .errors import DimensionMismatch, DomainError, IndexOutOfWindow


@dataclasses.dataclass(frozen=True, eq=False)
class WeightedSeq:
    window: IndexWindow
    vectors: np.ndarray
    omega: float = 0.0

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != len(self.window):
            raise DimensionMismatch(
                f"need {len(self.window)} vectors for window {self.window.as_list()}, got shape {v.shape}"
            )
        if self.omega < 0:
            raise DomainError(f"omega must be >= 0, got {self.omega}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.vectors[self.window.pos(k)]

    def weights(self, exponent: float | None = None) -> np.ndarray:
        e = self.omega if exponent is None else exponent
        return (np.abs(self.window.indices()) + 1.0) ** e

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)

    def retag(self, omega: float) -> "WeightedSeq":
        return WeightedSeq(self.window, self.vectors, omega)

    def with_vectors(self, vectors) -> "WeightedSeq":
        return WeightedSeq(self.window, vectors, self.omega)

    def __add__(self, other: "WeightedSeq") -> "WeightedSeq":
        _check_compatible(self, other)
        return self.with_vectors(self.vectors + other.vectors)

    def __sub__(self, other: "WeightedSeq") -> "WeightedSeq":
        _check_compatible(self, other)
        return self.with_vectors(self.vectors - other.vectors)

    def __mul__(self, scalar: float) -> "WeightedSeq":
        return self.with_vectors(float(scalar) * self.vectors)

    __rmul__ = __mul__


def _check_compatible(a: WeightedSeq, b: WeightedSeq):
    if a.window != b.window or a.dim != b.dim:
        raise DimensionMismatch("sequences live on different windows or dimensions")
    if a.omega != b.omega:
        raise DomainError("sequences carry different weights; retag one explicitly")


def zeros(window: IndexWindow, dim: int, omega: float = 0.0) -> WeightedSeq:
    return WeightedSeq(window, np.zeros((len(window), dim)), omega)


def weighted_norm(s: WeightedSeq) -> float:
    if len(s.vectors) == 0:
        return 0.0
    return float(np.max(s.magnitudes() * s.weights()))


def impulse(window: IndexWindow, s: int, xi, omega: float = 0.0) -> WeightedSeq:
    """Sequence equal to ``xi`` at index ``s`` and zero elsewhere."""
    if s not in window:
        raise IndexOutOfWindow(s, window)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    v = np.zeros((len(window), xi.size))
    v[window.pos(s)] = xi
    return WeightedSeq(window, v, omega)


def envelope_ratio(s: WeightedSeq, d: float, gamma: float) -> float:
    """``max_k |x_k| (|k|+1)**gamma / d``; at most 1 iff the decaying envelope holds."""
    if d <= 0:
        raise DomainError("envelope scale d must be positive")
    if len(s.vectors) == 0:
        return 0.0
    return float(np.max(s.magnitudes() * s.weights(gamma)) / d)


def to_json(s: WeightedSeq) -> dict:
    return {"window": s.window.as_list(), "omega": s.omega, "vectors": s.vectors.tolist()}


def from_json(obj: dict) -> WeightedSeq:
    window = IndexWindow(*obj["window"])
    return WeightedSeq(window, np.asarray(obj["vectors"], dtype=float), obj.get("omega", 0.0))


def csv_rows(s: WeightedSeq):
    """Header and rows ``k, x_1..x_d, weight, weighted_mag``."""
    header = ["k"] + [f"x_{i + 1}" for i in range(s.dim)] + ["weight", "weighted_mag"]
    w = s.weights()
    mags = s.magnitudes() * w
    rows = [
        [int(k), *map(float, vec), float(wk), float(m)]
        for k, vec, wk, m in zip(s.window.indices(), s.vectors, w, mags)
    ]
    return header, rows
