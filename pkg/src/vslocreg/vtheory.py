"""Variance factor V(lambda) of the convex-combination estimator.

Covers the interval rule l(lambda), evaluation of V, its extrema, the
feasibility test for variance stabilisation by local weighting, and the
solvers that turn a target variance level into a weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._numerics import bisect_increasing, golden_section
from .kernels import KernelSpec, cross_products, moments

__all__ = [
    "LAMBDA_CAP",
    "VCurve",
    "FeasibilityVerdict",
    "ShapeError",
    "InfeasibleError",
    "interval_l",
    "v_of_lambda",
    "v_sup_limit",
    "v_extrema",
    "feasibility",
    "solve_lambda_for_v",
    "zeta_var",
    "zeta_mise",
]

LAMBDA_CAP = 1e4
SCAN_LO, SCAN_HI = 1e-6, 50.0


class ShapeError(RuntimeError):
    """V(lambda) does not have the single-trough shape the solvers rely on."""


class InfeasibleError(ValueError):
    """Variance stabilisation by local weighting is impossible for this input."""


def interval_l(kernel: KernelSpec, lam):
    """Offset multiplier l(lambda) = sqrt((1 + 1/(2 lambda)) kappa_2)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise ValueError("lambda must be > 0")
    out = np.sqrt((1.0 + 0.5 / lam) * moments(kernel).kappa2)
    return out if out.ndim else float(out)


def _v_scalar(kernel: KernelSpec, lam: float) -> float:
    ints = moments(kernel)
    l = math.sqrt((1.0 + 0.5 / lam) * ints.kappa2)
    c0, cpm, t = cross_products(kernel, l)
    num = (
        (2 * lam * lam + 1) * ints.roughness
        + (6 * lam + 1) * c0
        + 0.5 * (4 * lam + 1) ** 2 * cpm
        + lam * (2 * lam + 1) / ints.kappa2 * t
    )
    return num / (2 * lam + 1) ** 2


def _v_gaussian(lam: np.ndarray) -> np.ndarray:
    # closed-form cross-products of the standard normal kernel (kappa_2 = 1)
    s = 1.0 / (2 * math.sqrt(math.pi))
    l2 = 1.0 + 0.5 / lam
    c0 = s * np.exp(-l2 / 4)
    e = np.exp(-l2)
    cpm = s * e
    t = 0.5 * s * (1 - e)
    num = (2 * lam * lam + 1) * s + (6 * lam + 1) * c0 + 0.5 * (4 * lam + 1) ** 2 * cpm
    num = num + lam * (2 * lam + 1) * t
    return num / (2 * lam + 1) ** 2


def v_of_lambda(kernel: KernelSpec, lam):
    """V(lambda) for a scalar or an array of weights."""
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise ValueError("lambda must be > 0")
    if kernel.family == "gaussian":
        out = _v_gaussian(lam)
    elif lam.ndim == 0:
        return _v_scalar(kernel, float(lam))
    else:
        out = np.array([_v_scalar(kernel, float(v)) for v in lam.ravel()]).reshape(lam.shape)
    return out if out.ndim else float(out)


def v_sup_limit(kernel: KernelSpec) -> float:
    """Limit of V(lambda) as lambda grows without bound (l -> sqrt(kappa_2))."""
    ints = moments(kernel)
    _, cpm, t = cross_products(kernel, math.sqrt(ints.kappa2))
    return 0.5 * ints.roughness + 2 * cpm + t / (2 * ints.kappa2)


@dataclass(frozen=True)
class VCurve:
    """V(lambda) for one kernel together with its extrema.

    ``v_sup`` is the supremum of V; for every built-in kernel it is the
    large-lambda limit, never attained.  ``v_at_zero_limit`` equals R(K).
    ``left_monotone`` records whether V also falls monotonically below the
    minimiser; only the rising branch is used by the solvers.
    """

    kernel: KernelSpec
    lambda_min: float
    v_min: float
    v_sup: float
    v_at_zero_limit: float
    lambda_cap: float = LAMBDA_CAP
    left_monotone: bool = True

    @property
    def ratio(self) -> float:
        return self.v_sup / self.v_min

    @property
    def v_range(self) -> float:
        return self.v_sup - self.v_min

    def __call__(self, lam):
        return v_of_lambda(self.kernel, lam)

    def interval(self, lam):
        return interval_l(self.kernel, lam)


@lru_cache(maxsize=None)
def v_extrema(kernel: KernelSpec, scan_points: int = 241) -> VCurve:
    """Locate the minimiser of V and its supremum.

    A log-spaced scan over [1e-6, 50] brackets the minimum, golden-section
    search refines it, and the scan doubles as the shape check: V must rise
    monotonically after the minimiser, which is what the largest-root solver
    relies on.  Bumps on the left branch are allowed and flagged.
    """
    grid = np.geomspace(SCAN_LO, SCAN_HI, scan_points)
    values = np.asarray(v_of_lambda(kernel, grid))
    i = int(np.argmin(values))
    if i == 0 or i == len(grid) - 1:
        raise ShapeError(f"minimum of V for {kernel} is not bracketed inside [{SCAN_LO}, {SCAN_HI}]")
    lo, hi = math.log(grid[i - 1]), math.log(grid[i + 1])
    u, v_min = golden_section(lambda s: v_of_lambda(kernel, math.exp(s)), lo, hi, rtol=1e-12)
    lam_min = math.exp(u)

    slack = 1e-12 * max(1.0, abs(v_min))
    left, right = np.diff(values[: i + 1]), np.diff(values[i:])
    if np.any(right < -slack):
        raise ShapeError(f"V for {kernel} is not increasing to the right of its minimum")

    r = moments(kernel).roughness
    v_sup = max(v_sup_limit(kernel), r, float(values.max()))
    return VCurve(kernel=kernel, lambda_min=lam_min, v_min=float(v_min), v_sup=v_sup, v_at_zero_limit=r,
                  left_monotone=not np.any(left > slack))


@dataclass(frozen=True)
class FeasibilityVerdict:
    gamma_ratio: float
    v_ratio: float
    feasible: bool
    zeta_range: tuple[float, float] | None


def feasibility(curve: VCurve, gamma_max: float, gamma_min: float) -> FeasibilityVerdict:
    """Whether V(lambda(x)) gamma(x) can be held constant, and the admissible zeta interval."""
    if not gamma_max >= gamma_min > 0:
        raise ValueError(f"need gamma_max >= gamma_min > 0, got {gamma_max}, {gamma_min}")
    g_ratio = gamma_max / gamma_min
    ok = g_ratio <= curve.ratio
    rng = (curve.v_min * gamma_max, curve.v_sup * gamma_min) if ok else None
    return FeasibilityVerdict(gamma_ratio=g_ratio, v_ratio=curve.ratio, feasible=ok, zeta_range=rng)


def solve_lambda_for_v(curve: VCurve, v_target, tol: float = 1e-9):
    """Largest lambda with V(lambda) = v_target (vectorised over targets).

    Roots are searched on the rising branch [lambda_min, lambda_cap].  Targets
    within ``tol`` of the supremum, or above V(lambda_cap), map to lambda_cap.
    """
    target = np.asarray(v_target, dtype=float)
    if np.any(target < curve.v_min - tol):
        raise ValueError(f"target below V_min = {curve.v_min:.10g}: {target.min():.10g}")
    if np.any(target > curve.v_sup + tol):
        raise ValueError(f"target above V_sup = {curve.v_sup:.10g}: {target.max():.10g}")
    v_cap = float(v_of_lambda(curve.kernel, curve.lambda_cap))
    capped = (target >= curve.v_sup - tol) | (target >= v_cap)
    at_min = target <= curve.v_min
    inner = ~(capped | at_min)
    out = np.full(target.shape, curve.lambda_min)
    out[capped] = curve.lambda_cap
    if np.any(inner):
        out[inner] = bisect_increasing(
            lambda lam: v_of_lambda(curve.kernel, lam), target[inner], curve.lambda_min, curve.lambda_cap
        )
    return out if out.ndim else float(out)


def zeta_var(curve: VCurve, gamma_max: float, gamma_min: float | None = None) -> float:
    """Smallest admissible stabilised level: V_min * gamma(x_max)."""
    if gamma_min is not None and not feasibility(curve, gamma_max, gamma_min).feasible:
        raise InfeasibleError(
            f"gamma ratio {gamma_max / gamma_min:.4f} exceeds V ratio {curve.ratio:.4f}"
        )
    return curve.v_min * gamma_max


def zeta_mise(curve: VCurve, scenario, n: int, **kwargs) -> float:
    """AMISE-minimising stabilised level; see :func:`vslocreg.selection.zeta_mise`."""
    from .selection import zeta_mise as _zeta_mise

    return _zeta_mise(curve, scenario, n, **kwargs)
