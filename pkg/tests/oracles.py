"""Independent brute-force oracles.

Nothing here imports the package's numerical routines: every quantity is
recomputed from the raw matrices by the most direct formula available, at the
cost of speed, so it can only be used on small windows.
"""

from __future__ import annotations

import math

import numpy as np


def transition_naive(maps, lo: int, m: int, l: int) -> np.ndarray:
    """``Phi_{m,l}`` by explicit multiplication of ``maps[k - lo]`` or their inverses."""
    d = maps[0].shape[0]
    out = np.eye(d)
    if m >= l:
        for k in range(l, m):
            out = maps[k - lo] @ out
    else:
        for k in range(m, l):
            out = out @ np.linalg.inv(maps[k - lo])
    return out


def pair_norms_naive(maps, projections, lo: int):
    """``{(k, l): ||Phi_{k,l} P_l||}`` for k >= l and ``{(k, l): ||Phi_{k,l} Q_l||}`` for k <= l."""
    n = len(projections)
    d = projections[0].shape[0]
    stable, unstable = {}, {}
    for a in range(n):
        for b in range(n):
            k, l = lo + a, lo + b
            T = transition_naive(maps, lo, k, l)
            if k >= l:
                stable[k, l] = np.linalg.norm(T @ projections[b], 2)
            if k <= l:
                unstable[k, l] = np.linalg.norm(T @ (np.eye(d) - projections[b]), 2)
    return stable, unstable


def green_naive(maps, projections, f, lo: int = 0) -> np.ndarray:
    """Green's-function double sum, truncated at the window end."""
    n, d = f.shape
    y = np.zeros((n, d))
    for a in range(n):
        k = lo + a
        for b in range(n):
            u = lo + b
            T = transition_naive(maps, lo, k, u)
            if u <= k:
                y[a] += T @ projections[b] @ f[b]
            else:
                y[a] -= T @ (np.eye(d) - projections[b]) @ f[b]
    return y


def series_constant_direct(lam: float, omega: float, k_max: int):
    """Direct summation of the weighted geometric series for every k; terms below 1e-20 dropped."""
    J = int(math.ceil(math.log(1e-20) / math.log(lam))) + 1
    k = np.arange(k_max + 1)[:, None]
    j = np.arange(J + 1)[None, :]
    u = k - j
    head_terms = np.where(u >= 0, lam ** j * (np.maximum(u, 0) + 1.0) ** -omega, 0.0)
    jt = np.arange(1, J + 1)[None, :]
    tail_terms = lam ** jt * (k + jt + 1.0) ** -omega
    vals = (k[:, 0] + 1.0) ** omega * (head_terms.sum(axis=1) + tail_terms.sum(axis=1))
    return float(vals.max()), int(vals.argmax())


def weighted_to_plain_scan(K1: float, lambda1: float, omega: float, l_max: int = 200):
    l = np.arange(l_max + 1)
    K2 = float(np.max(K1 * lambda1 ** (l / 2.0) * (l + 1.0) ** omega))
    return max(K1, K2, 2.0 ** omega * K1), math.sqrt(lambda1)


def green_operator_naive(maps, P, B, z):
    """``G(z)_k = sum_{u<=k} A_{k-1}..A_u P_u z_u - sum_{u>k} B_k..B_{u-1} Q_u z_u``."""
    n, d = z.shape
    out = np.zeros((n, d))
    for k in range(n):
        for u in range(n):
            if u <= k:
                T = np.eye(d)
                for i in range(u, k):
                    T = maps[i] @ T
                out[k] += T @ P[u] @ z[u]
            else:
                T = np.eye(d)
                for i in range(k, u):
                    T = T @ B[i]
                out[k] -= T @ (np.eye(d) - P[u]) @ z[u]
    return out


def cat_eigen():
    """Eigenvalues and orthonormal eigenvectors of [[2,1],[1,1]] from the characteristic polynomial."""
    big = (3 + math.sqrt(5)) / 2
    small = (3 - math.sqrt(5)) / 2
    # (A - t I) v = 0 with A = [[2,1],[1,1]] gives v = (1, t - 2)
    vs = [np.array([1.0, t - 2.0]) for t in (big, small)]
    return (big, small), [v / np.linalg.norm(v) for v in vs]
