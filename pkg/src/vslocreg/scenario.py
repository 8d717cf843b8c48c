"""Analytic test problems and the gamma*(x) = sigma^2(x)/f(x) profile.

A :class:`Scenario` bundles a design density with its first two
derivatives, a noise variance function and a regression function with
derivatives up to order four, all as vectorised callables on a domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Scenario",
    "GammaProfile",
    "builtin_scenario",
    "tabulated_scenario",
    "gamma_profile",
    "derivative_check",
    "grid_points",
]

Func = Callable[[np.ndarray], np.ndarray]

_FIELDS = ("f", "f1", "f2", "sigma2", "m", "m1", "m2", "m3", "m4")


def grid_points(lo: float, hi: float, step: float) -> np.ndarray:
    """Equally spaced grid lo + step*j covering [lo, hi] (end point included)."""
    if not step > 0:
        raise ValueError(f"grid step must be > 0, got {step}")
    count = int(round((hi - lo) / step))
    if abs(lo + count * step - hi) > 1e-9 * max(1.0, abs(hi)):
        raise ValueError(f"grid step {step} does not divide [{lo}, {hi}]")
    return lo + step * np.arange(count + 1)


@dataclass(frozen=True)
class Scenario:
    """Design density, noise variance and regression function on ``domain``.

    ``f1``/``f2`` are derivatives of ``f``; ``m1``..``m4`` derivatives of ``m``.
    """

    name: str
    domain: tuple[float, float]
    f: Func
    f1: Func
    f2: Func
    sigma2: Func
    m: Func
    m1: Func
    m2: Func
    m3: Func
    m4: Func
    grid_step: float = 1e-3
    meta: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError(f"empty domain {self.domain}")
        x = self.grid
        if np.any(~(np.asarray(self.sigma2(x)) > 0)):
            raise ValueError("sigma2 must be positive on the domain")
        if np.any(~(np.asarray(self.f(x)) > 0)):
            raise ValueError("design density must be positive on the domain")

    @property
    def grid(self) -> np.ndarray:
        return grid_points(self.domain[0], self.domain[1], self.grid_step)

    def gamma(self, x):
        return self.sigma2(x) / self.f(x)

    def evaluate(self, x=None) -> dict[str, np.ndarray]:
        """All scenario functions evaluated on ``x`` (default: the grid)."""
        x = self.grid if x is None else np.asarray(x, dtype=float)
        out = {"x": x}
        for name in _FIELDS:
            out[name] = np.broadcast_to(np.asarray(getattr(self, name)(x), dtype=float), x.shape)
        return out


def builtin_scenario(k: int = 1, sigma_offset: float = 2.5, grid_step: float = 1e-3,
                     sigma_slope: float = 1.0) -> Scenario:
    """Truncated-Gaussian design on [0, 1] with m_k(x) = 0.4[3 sin(2k pi x) + 2 sin(3 pi x)].

    The design is the N(0.5, 1) density renormalised to [0, 1] and the noise
    variance is ``sigma_offset + sigma_slope * |x - 0.5|``.
    """
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    if not sigma_offset > 0:
        raise ValueError(f"sigma_offset must be > 0, got {sigma_offset}")
    if sigma_slope < 0:
        raise ValueError(f"sigma_slope must be >= 0, got {sigma_slope}")
    norm = math.erf(0.5 / math.sqrt(2.0))  # P(|Z| <= 0.5)
    c = 1.0 / (norm * math.sqrt(2 * math.pi))
    a, b = 2 * k * math.pi, 3 * math.pi

    def f(x):
        return c * np.exp(-0.5 * (np.asarray(x) - 0.5) ** 2)

    def f1(x):
        u = np.asarray(x) - 0.5
        return -u * f(x)

    def f2(x):
        u = np.asarray(x) - 0.5
        return (u * u - 1.0) * f(x)

    def sigma2(x):
        return sigma_offset + sigma_slope * np.abs(np.asarray(x) - 0.5)

    def deriv(order):
        # d^r/dx^r sin(wx) = w^r sin(wx + r pi/2)
        def g(x):
            x = np.asarray(x, dtype=float)
            shift = order * math.pi / 2
            return 0.4 * (3 * a**order * np.sin(a * x + shift) + 2 * b**order * np.sin(b * x + shift))
        return g

    return Scenario(
        name=f"builtin-k{k}",
        domain=(0.0, 1.0),
        f=f, f1=f1, f2=f2, sigma2=sigma2,
        m=deriv(0), m1=deriv(1), m2=deriv(2), m3=deriv(3), m4=deriv(4),
        grid_step=grid_step,
        meta={"k": k, "sigma_offset": sigma_offset, "sigma_slope": sigma_slope, "normaliser": norm,
              "design_mean": 0.5, "design_sd": 1.0},
    )


def tabulated_scenario(table: Mapping[str, np.ndarray], name: str = "tabulated",
                       grid_step: float = 1e-3) -> Scenario:
    """Scenario from tabulated values, linearly interpolated.

    ``table`` needs an increasing ``x`` column plus one column per field in
    f, f1, f2, sigma2, m, m2, m3, m4 (``m1`` is optional and defaults to the
    numerical gradient of ``m``).  Supplying consistent derivatives is the
    caller's job; :func:`derivative_check` measures how consistent they are.
    """
    x = np.asarray(table["x"], dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("tabulated x must be strictly increasing with at least two points")
    cols = {}
    for key in _FIELDS:
        if key in table:
            cols[key] = np.asarray(table[key], dtype=float)
        elif key == "m1":
            cols[key] = np.gradient(np.asarray(table["m"], dtype=float), x)
        else:
            raise ValueError(f"tabulated scenario lacks column {key!r}")
        if cols[key].shape != x.shape:
            raise ValueError(f"column {key!r} has shape {cols[key].shape}, expected {x.shape}")

    def interp(values):
        return lambda t: np.interp(np.asarray(t, dtype=float), x, values)

    return Scenario(name=name, domain=(float(x[0]), float(x[-1])), grid_step=grid_step,
                    **{k: interp(v) for k, v in cols.items()})


@dataclass(frozen=True)
class GammaProfile:
    x: np.ndarray
    values: np.ndarray
    gamma_max: float
    gamma_min: float
    x_max: float
    x_min: float

    @property
    def ratio(self) -> float:
        return self.gamma_max / self.gamma_min


def gamma_profile(s: Scenario) -> GammaProfile:
    """gamma*(x) on the scenario grid with its extremes taken over the grid."""
    x = s.grid
    g = np.asarray(s.gamma(x), dtype=float)
    i, j = int(np.argmax(g)), int(np.argmin(g))
    return GammaProfile(x=x, values=g, gamma_max=float(g[i]), gamma_min=float(g[j]),
                        x_max=float(x[i]), x_min=float(x[j]))


_PAIRS = (("f", "f1"), ("f1", "f2"), ("m", "m1"), ("m1", "m2"), ("m2", "m3"), ("m3", "m4"))


def derivative_check(s: Scenario, points: int = 100, delta: float = 1e-3, seed: int = 0) -> dict[str, tuple[float, float]]:
    """Central-difference consistency of the derivative fields.

    For each (g, g') pair returns the largest error at ``delta`` and at
    ``delta/2`` over random interior points; with exact derivatives the
    second is about a quarter of the first.
    """
    lo, hi = s.domain
    margin = 0.01 * (hi - lo)
    x = np.random.default_rng(seed).uniform(lo + margin, hi - margin, points)
    out = {}
    for g, dg in _PAIRS:
        fn, dfn = getattr(s, g), getattr(s, dg)
        errs = []
        for d in (delta, delta / 2):
            fd = (fn(x + d) - fn(x - d)) / (2 * d)
            errs.append(float(np.max(np.abs(fd - dfn(x)))))
        out[dg] = (errs[0], errs[1])
    return out
