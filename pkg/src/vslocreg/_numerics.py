"""Small numerical building blocks shared by the rest of the package.

Adaptive Gauss-Legendre quadrature, golden-section minimisation,
bracketed bisection (scalar and vectorised) and grid integration.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def _gl_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _panel(func, a: float, b: float, order: int) -> float:
    t, w = _gl_nodes(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return half * float(np.dot(w, func(mid + half * t)))


def adaptive_gauss_legendre(
    func: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    breakpoints: Sequence[float] = (),
    order: int = 16,
    max_panels: int = 20000,
) -> float:
    """Integrate a vectorised ``func`` over ``[a, b]``.

    Each panel is compared with the sum of its two halves; panels that
    disagree by more than their share of ``tol`` are bisected.  Interior
    ``breakpoints`` (kinks of the integrand) become panel edges up front.
    """
    if b < a:
        return -adaptive_gauss_legendre(func, b, a, tol, breakpoints, order, max_panels)
    if b == a:
        return 0.0
    edges = sorted({a, b, *(p for p in breakpoints if a < p < b)})
    width = b - a
    total = 0.0
    err_total = 0.0
    stack = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        stack.append((lo, hi, _panel(func, lo, hi, order)))
    evaluated = 0
    while stack:
        lo, hi, whole = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _panel(func, lo, mid, order)
        right = _panel(func, mid, hi, order)
        err = abs(left + right - whole)
        evaluated += 1
        share = tol * (hi - lo) / width
        if err <= max(share, 1e-15 * abs(left + right)) or hi - lo < 1e-13 * width:
            total += left + right
            err_total += err
            continue
        if evaluated > max_panels:
            raise QuadratureError("adaptive Gauss-Legendre did not converge", err_total + err)
        stack.append((lo, mid, left))
        stack.append((mid, hi, right))
    return total


def golden_section(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    rtol: float = 1e-10,
    atol: float = 1e-14,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Minimise a unimodal ``func`` on ``[lo, hi]``; returns ``(argmin, min)``."""
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if b - a <= rtol * (abs(a) + abs(b)) / 2 + atol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    fx = func(x)
    # the bracket end points can beat the midpoint when the minimum sits on them
    best = min(((fx, x), (fc, c), (fd, d)))
    return best[1], best[0]


def bracket_minimum_on_grid(func, grid: np.ndarray) -> tuple[float, float, int, np.ndarray]:
    """Scan ``func`` over ``grid`` and return the bracket around the smallest value."""
    values = np.array([func(g) for g in grid])
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    return lo, hi, i, values


def bisect_increasing(
    func: Callable[[np.ndarray], np.ndarray],
    target: np.ndarray,
    lo: np.ndarray | float,
    hi: np.ndarray | float,
    iters: int = 200,
    log: bool = True,
) -> np.ndarray:
    """Vectorised bisection for ``func(x) = target`` with ``func`` increasing on ``[lo, hi]``.

    Works on arrays of targets at once.  With ``log=True`` the bracket is
    split geometrically, which suits parameters spanning many decades.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(iters):
        mid = np.sqrt(lo * hi) if log else 0.5 * (lo + hi)
        above = func(mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    return np.sqrt(lo * hi) if log else 0.5 * (lo + hi)


def integrate_grid(values: np.ndarray, step: float, rule: str = "riemann") -> float:
    """Integrate samples taken on an equally spaced grid.

    ``"riemann"`` sums ``step * values`` over every grid point (the
    convention behind the published bandwidth tables); ``"trapezoid"`` is
    the composite trapezoid rule.
    """
    values = np.asarray(values, dtype=float)
    if rule == "riemann":
        return float(step * np.sum(values))
    if rule == "trapezoid":
        return float(step * (np.sum(values) - 0.5 * (values[0] + values[-1])))
    raise ValueError(f"unknown grid integration rule {rule!r}")
