"""Local linear, skewed and convex-combination (CC) regression estimators.

Single-point functions (``local_linear_fit``, ``sk_estimate``,
``cc_estimate``) are the reference implementation.  ``local_linear_many``
and ``cc_many`` evaluate many centres at once: for a chunk of neighbouring
centres the kernel weights form a matrix and every weighted sum comes out of
one matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, eval_kernel
from .vtheory import interval_l

__all__ = [
    "RegressionSample",
    "LocalFitSums",
    "SingularWindow",
    "CCError",
    "CCResult",
    "DET_RTOL",
    "fit_sums",
    "local_linear_fit",
    "sk_estimate",
    "cc_estimate",
    "local_linear_many",
    "cc_many",
]

DET_RTOL = 1e-12
_SIDES = ("left", "centre", "right")


class SingularWindow(ArithmeticError):
    """Too few distinct design points carry kernel weight at a centre."""

    def __init__(self, centre: float, h: float):
        super().__init__(f"singular local fit at x0={centre:.6g} with h={h:.6g}")
        self.centre, self.h = centre, h


class CCError(SingularWindow):
    """One of the three component fits of the CC estimator failed."""

    def __init__(self, x: float, side: str, centre: float, h: float):
        ArithmeticError.__init__(self, f"CC estimate at x={x:.6g}: {side} fit at x0={centre:.6g} (h={h:.6g}) is singular")
        self.x, self.side, self.centre, self.h = x, side, centre, h


@dataclass(frozen=True)
class RegressionSample:
    """Pairs (x_i, y_i); stores a sorted copy for windowed evaluation."""

    x: np.ndarray
    y: np.ndarray
    _order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"x and y lengths differ: {x.size} vs {y.size}")
        if x.size < 2:
            raise ValueError("a regression sample needs at least two points")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "_order", np.argsort(x, kind="stable"))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def sorted_x(self) -> np.ndarray:
        return self.x[self._order]

    @property
    def sorted_y(self) -> np.ndarray:
        return self.y[self._order]


@dataclass(frozen=True)
class LocalFitSums:
    """Kernel-weighted sums at one centre: r_j = sum d^j K y, s_j = sum d^j K (d = x_i - x0)."""

    r0: float
    r1: float
    s0: float
    s1: float
    s2: float

    @property
    def determinant(self) -> float:
        return self.s0 * self.s2 - self.s1 * self.s1

    @property
    def singular(self) -> bool:
        return not self.determinant > DET_RTOL * (self.s0 * self.s2 + 1e-300)

    def coefficients(self) -> tuple[float, float]:
        d = self.determinant
        return (self.r0 * self.s2 - self.r1 * self.s1) / d, (self.r1 * self.s0 - self.r0 * self.s1) / d


def _check_h(h) -> None:
    if np.any(~(np.asarray(h) > 0)):
        raise ValueError("bandwidth must be > 0")


def fit_sums(data: RegressionSample, x0: float, h: float, kernel: KernelSpec) -> LocalFitSums:
    _check_h(h)
    d = data.x - x0
    w = eval_kernel(kernel, d / h)
    wd = w * d
    return LocalFitSums(
        r0=float(np.sum(w * data.y)), r1=float(np.sum(wd * data.y)),
        s0=float(np.sum(w)), s1=float(np.sum(wd)), s2=float(np.sum(wd * d)),
    )


def local_linear_fit(data: RegressionSample, x0: float, h: float, kernel: KernelSpec) -> tuple[float, float]:
    """Intercept and slope of the kernel-weighted least-squares line at ``x0``."""
    sums = fit_sums(data, x0, h, kernel)
    if sums.singular:
        raise SingularWindow(x0, h)
    return sums.coefficients()


def sk_estimate(data: RegressionSample, x: float, x0: float, h: float, kernel: KernelSpec) -> float:
    """Line fitted at ``x0`` evaluated at ``x``."""
    b0, b1 = local_linear_fit(data, x0, h, kernel)
    return b0 + b1 * (x - x0)


def cc_estimate(data: RegressionSample, x: float, h: float, lam: float, kernel: KernelSpec) -> float:
    """[lam m(x|x-lh) + m(x|x) + lam m(x|x+lh)] / (1 + 2 lam) with l = l(lam)."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    _check_h(h)
    offset = interval_l(kernel, lam) * h
    parts = []
    for side, x0 in zip(_SIDES, (x - offset, x, x + offset)):
        try:
            parts.append(sk_estimate(data, x, x0, h, kernel))
        except SingularWindow:
            raise CCError(x, side, x0, h) from None
    return (lam * parts[0] + parts[1] + lam * parts[2]) / (1 + 2 * lam)


def local_linear_many(data: RegressionSample, centres, h, kernel: KernelSpec,
                      chunk: int = 128) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local linear fits at many centres.

    ``h`` is a scalar or one bandwidth per centre.  Returns ``(b0, b1, ok)``;
    where ``ok`` is False the window was singular and the coefficients are NaN.
    Design points whose kernel weight is below the truncation level of an
    unbounded kernel (about 1e-16) are skipped.
    """
    centres = np.asarray(centres, dtype=float).ravel()
    h = np.broadcast_to(np.asarray(h, dtype=float), centres.shape)
    _check_h(h)
    xs, ys = data.sorted_x, data.sorted_y
    radius = kernel.truncation
    order = np.argsort(centres, kind="stable")
    b0 = np.full(centres.shape, np.nan)
    b1 = np.full(centres.shape, np.nan)
    for start in range(0, centres.size, chunk):
        idx = order[start:start + chunk]
        c, hc = centres[idx], h[idx]
        lo = np.searchsorted(xs, np.min(c - radius * hc), side="left")
        hi = np.searchsorted(xs, np.max(c + radius * hc), side="right")
        if hi - lo < 2:
            continue
        shift = 0.5 * (c[0] + c[-1])
        z = xs[lo:hi] - shift
        y = ys[lo:hi]
        dc = c - shift
        w = eval_kernel(kernel, (z[None, :] - dc[:, None]) / hc[:, None])
        raw = w @ np.column_stack([np.ones_like(z), z, z * z, y, z * y])
        m0, m1, m2, my, mzy = raw.T
        s0 = m0
        s1 = m1 - dc * m0
        s2 = m2 - 2 * dc * m1 + dc * dc * m0
        r0 = my
        r1 = mzy - dc * my
        det = s0 * s2 - s1 * s1
        good = det > DET_RTOL * (s0 * s2 + 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            b0[idx] = np.where(good, (r0 * s2 - r1 * s1) / det, np.nan)
            b1[idx] = np.where(good, (r1 * s0 - r0 * s1) / det, np.nan)
    return b0, b1, np.isfinite(b0)


@dataclass(frozen=True)
class CCResult:
    """CC estimates on a grid; ``failed_side`` is -1 where all fits succeeded,
    else the index (0 left, 1 centre, 2 right) of the first failed component."""

    x: np.ndarray
    estimate: np.ndarray
    failed_side: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.failed_side < 0

    @property
    def failures(self) -> int:
        return int(np.sum(~self.ok))


def cc_many(data: RegressionSample, x, h, lam, kernel: KernelSpec, chunk: int = 128) -> CCResult:
    """CC estimator at every point of ``x`` with per-point ``h`` and ``lam`` (scalars broadcast)."""
    x = np.asarray(x, dtype=float).ravel()
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), x.shape)
    if np.any(~(lam > 0)):
        raise ValueError("lambda must be > 0")
    offset = np.asarray(interval_l(kernel, lam)) * h
    centres = np.concatenate([x - offset, x, x + offset])
    b0, b1, ok = local_linear_many(data, centres, np.tile(h, 3), kernel, chunk=chunk)
    m = x.size
    sk = (b0 + b1 * (np.tile(x, 3) - centres)).reshape(3, m)
    ok = ok.reshape(3, m)
    est = (lam * sk[0] + sk[1] + lam * sk[2]) / (1 + 2 * lam)
    failed = np.where(ok.all(axis=0), -1, np.argmin(ok, axis=0))
    est = np.where(failed < 0, est, np.nan)
    return CCResult(x=x, estimate=est, failed_side=failed)
