"""Panel-based Gauss-Legendre quadrature with geometric grading.

The integrands in this package are smooth except for algebraic
singularities at panel endpoints (kernel tails like |v-u|^{-1-gamma},
reservoir rates like u^{-gamma}).  Fixed-order Gauss-Legendre on panels
that shrink geometrically toward the singular point resolves those to
near machine precision without adaptive machinery.
"""

from __future__ import annotations

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], cached."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to the interval [a, b]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def integrate_panels(f, edges: np.ndarray, n: int = 16) -> float:
    """Integrate f over consecutive panels given by ``edges`` (sorted)."""
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = panel_nodes(a, b, n)
        total += float(np.dot(w, f(x)))
    return total


def graded_edges(a: float, b: float, *, toward: str, levels: int,
                 ratio: float = 2.0) -> np.ndarray:
    """Panel edges on [a, b] shrinking geometrically toward one endpoint.

    ``toward='a'`` puts the smallest panel at a; ``levels`` panels total.
    """
    if b <= a:
        return np.array([a, b])
    fracs = ratio ** -np.arange(levels, dtype=float)  # 1, 1/r, 1/r^2, ...
    offsets = np.concatenate([[0.0], fracs[::-1]]) * (b - a)
    if toward == "a":
        return a + offsets
    if toward == "b":
        return b - offsets[::-1]
    raise ValueError(f"toward must be 'a' or 'b', got {toward!r}")


def singular_edges(a: float, b: float, *, levels: int = 48,
                   interior: int = 8) -> np.ndarray:
    """Edges on [a, b] graded toward both endpoints with a uniform middle."""
    if b <= a:
        return np.array([a, b])
    width = b - a
    lo = a + 0.25 * width
    hi = b - 0.25 * width
    left = graded_edges(a, lo, toward="a", levels=levels)
    mid = np.linspace(lo, hi, interior + 1)
    right = graded_edges(hi, b, toward="b", levels=levels)
    return np.unique(np.concatenate([left, mid, right]))


def integrate_singular(f, a: float, b: float, *, levels: int = 48,
                       interior: int = 8, n: int = 16) -> float:
    """Integrate f on [a, b] assuming endpoint-only algebraic singularities."""
    return integrate_panels(f, singular_edges(a, b, levels=levels,
                                              interior=interior), n=n)
