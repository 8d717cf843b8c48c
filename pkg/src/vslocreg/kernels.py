"""Kernel families, their moments, roughness and shifted cross-products."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn

from ._numerics import QuadratureError, adaptive_gauss_legendre

__all__ = [
    "KernelSpec",
    "KernelIntegrals",
    "QuadratureError",
    "STANDARD_KERNELS",
    "parse_kernel",
    "eval_kernel",
    "moments",
    "cross_products",
]

QUAD_TOL = 1e-10
TAIL_CUTOFF = 1e-16

_BOUNDED = {"beta", "vskernel", "cosine", "triangle", "tricube"}
_UNBOUNDED = {"gaussian", "logistic", "sigmoid"}
_ALIASES = {"uniform": 0, "epanechnikov": 1, "biweight": 2, "triweight": 3}

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric probability kernel.

    ``family`` is one of ``beta``, ``vskernel``, ``gaussian``, ``logistic``,
    ``sigmoid``, ``cosine``, ``triangle`` or ``tricube``.  ``params`` holds
    ``(theta,)`` for ``beta`` and ``(a0, a1)`` for ``vskernel``.
    """

    family: str
    params: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        fam = self.family
        if fam not in _BOUNDED | _UNBOUNDED:
            raise ValueError(f"unknown kernel family {fam!r}")
        if fam == "beta":
            if len(self.params) != 1:
                raise ValueError("beta kernel takes one parameter theta")
            theta = self.params[0]
            if int(theta) != theta or theta < 0:
                raise ValueError(f"beta kernel needs a nonnegative integer theta, got {theta}")
            object.__setattr__(self, "params", (int(theta),))
        elif fam == "vskernel":
            if len(self.params) != 2:
                raise ValueError("vskernel takes two parameters (a0, a1)")
            a0, a1 = (float(p) for p in self.params)
            if not a1 > 0:
                raise ValueError(f"vskernel needs a1 > 0, got {a1}")
            upper = (1 + a1) / (2 * a1)
            if not 0 <= a0 <= upper:
                raise ValueError(f"vskernel needs 0 <= a0 <= (1+a1)/(2 a1) = {upper:.6g}, got {a0}")
            object.__setattr__(self, "params", (a0, a1))
        elif self.params:
            raise ValueError(f"{fam} kernel takes no parameters")
        if not self.name:
            object.__setattr__(self, "name", _default_name(fam, self.params))

    @property
    def bounded(self) -> bool:
        return self.family in _BOUNDED

    @property
    def support(self) -> tuple[float, float]:
        return (-1.0, 1.0) if self.bounded else (-math.inf, math.inf)

    @property
    def truncation(self) -> float:
        """Half-width used for integration: 1 for bounded kernels, else where K < 1e-16."""
        return 1.0 if self.bounded else _tail_cutoff(self)

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points where the density or one of its low derivatives is not smooth."""
        return (-1.0, 0.0, 1.0) if self.bounded else (0.0,)

    def __call__(self, t):
        return eval_kernel(self, t)

    def __str__(self) -> str:
        return self.name


def _default_name(family: str, params: tuple) -> str:
    if family == "beta":
        theta = params[0]
        for alias, th in _ALIASES.items():
            if th == theta:
                return alias
        return f"beta:{theta}"
    if family == "vskernel":
        return f"vs:{params[0]:g}:{params[1]:g}"
    return family


def parse_kernel(kernel_id: str) -> KernelSpec:
    """Build a kernel from its string id (``"gaussian"``, ``"beta:4"``, ``"vs:0:6.0131"``...)."""
    key = kernel_id.strip().lower()
    if key in _ALIASES:
        return KernelSpec("beta", (_ALIASES[key],))
    if key.startswith("beta:"):
        try:
            theta = float(key.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad beta kernel id {kernel_id!r}") from None
        return KernelSpec("beta", (theta,))
    if key.startswith("vs:"):
        parts = key.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad vs kernel id {kernel_id!r}; expected vs:<a0>:<a1>")
        try:
            return KernelSpec("vskernel", (float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ValueError(f"bad vs kernel id {kernel_id!r}: {exc}") from None
    if key in _UNBOUNDED or key in ("cosine", "triangle", "tricube"):
        return KernelSpec(key)
    raise ValueError(
        f"unknown kernel id {kernel_id!r}; valid ids: uniform, epanechnikov, biweight, "
        "triweight, beta:<theta>, gaussian, logistic, sigmoid, cosine, triangle, tricube, vs:<a0>:<a1>"
    )


STANDARD_KERNELS: tuple[str, ...] = (
    "tricube", "cosine", "triangle", "gaussian", "logistic", "sigmoid",
    *(f"beta:{theta}" for theta in range(11)),
)


def eval_kernel(k: KernelSpec, t):
    """Kernel density at ``t`` (scalar or array); zero outside a bounded support."""
    t = np.asarray(t, dtype=float)
    fam = k.family
    if fam == "gaussian":
        return np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    if fam == "logistic":
        e = np.exp(-np.abs(t))
        return e / (1.0 + e) ** 2
    if fam == "sigmoid":
        e = np.exp(-np.abs(t))
        return (2.0 / math.pi) * e / (1.0 + e * e)
    a = np.abs(t)
    inside = a <= 1.0
    if fam == "beta":
        theta = k.params[0]
        norm = _beta_norm(theta)
        out = np.where(inside, np.clip(1.0 - t * t, 0.0, None) ** theta / norm, 0.0)
    elif fam == "vskernel":
        a0, a1 = k.params
        c = 0.5 * (1 - 2 * a0) * (a1 + 1)
        out = np.where(inside, a0 + c * np.minimum(a, 1.0) ** a1, 0.0)
    elif fam == "cosine":
        out = np.where(inside, (math.pi / 4) * np.cos(math.pi * np.minimum(a, 1.0) / 2), 0.0)
    elif fam == "triangle":
        out = np.where(inside, 1.0 - a, 0.0)
    else:  # tricube
        out = np.where(inside, (70.0 / 81.0) * (1.0 - np.minimum(a, 1.0) ** 3) ** 3, 0.0)
    return out if out.ndim else float(out)


def _beta_norm(theta: int) -> float:
    # integral of (1 - t^2)^theta over [-1, 1] = 2^(2 theta + 1) Beta(theta+1, theta+1)
    return float(2 ** (2 * theta + 1) * beta_fn(theta + 1, theta + 1))


@lru_cache(maxsize=None)
def _tail_cutoff(k: KernelSpec) -> float:
    lo, hi = 1.0, 2.0
    while eval_kernel(k, hi) >= TAIL_CUTOFF:
        lo, hi = hi, 2 * hi
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if eval_kernel(k, mid) >= TAIL_CUTOFF:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class KernelIntegrals:
    """Scalar integrals of a kernel plus access to its shifted cross-products.

    ``t2_roughness`` is the integral of t^2 K(t)^2; it is the l-independent
    half of the third cross-product term.
    """

    kernel: KernelSpec
    kappa2: float
    kappa4: float
    kappa5: float
    roughness: float
    t2_roughness: float

    def cross(self, l: float) -> tuple[float, float, float]:
        return cross_products(self.kernel, l)


def _integrate(k: KernelSpec, func, lo: float, hi: float, shifts=(0.0,)) -> float:
    if hi <= lo:
        return 0.0
    points = [p + s for p in k.kinks for s in shifts]
    return adaptive_gauss_legendre(func, lo, hi, tol=QUAD_TOL, breakpoints=points)


def _quadrature_moments(k: KernelSpec) -> dict[str, float]:
    T = k.truncation
    out = {}
    for name, power in (("kappa2", 2), ("kappa4", 4), ("kappa5", 5)):
        out[name] = _integrate(k, lambda t, p=power: t**p * eval_kernel(k, t), -T, T)
    out["roughness"] = _integrate(k, lambda t: eval_kernel(k, t) ** 2, -T, T)
    out["t2_roughness"] = _integrate(k, lambda t: t * t * eval_kernel(k, t) ** 2, -T, T)
    return out


def _closed_form_moments(k: KernelSpec) -> dict[str, float]:
    """Closed forms that are known for the family; missing keys fall back to quadrature."""
    fam = k.family
    pi = math.pi
    if fam == "beta":
        theta = k.params[0]
        b = beta_fn(0.5, theta + 1)
        return {
            "kappa2": beta_fn(1.5, theta + 1) / b,
            "kappa4": beta_fn(2.5, theta + 1) / b,
            "roughness": beta_fn(0.5, 2 * theta + 1) / b**2,
            "t2_roughness": beta_fn(1.5, 2 * theta + 1) / b**2,
        }
    if fam == "vskernel":
        a0, a1 = k.params
        c = 0.5 * (1 - 2 * a0) * (a1 + 1)
        return {
            "kappa2": 2 * (a0 / 3 + c / (a1 + 3)),
            "kappa4": 2 * (a0 / 5 + c / (a1 + 5)),
            "roughness": 2 * (a0**2 + 2 * a0 * c / (a1 + 1) + c**2 / (2 * a1 + 1)),
            "t2_roughness": 2 * (a0**2 / 3 + 2 * a0 * c / (a1 + 3) + c**2 / (2 * a1 + 3)),
        }
    if fam == "gaussian":
        return {"kappa2": 1.0, "kappa4": 3.0, "roughness": 1 / (2 * SQRT_PI),
                "t2_roughness": 1 / (4 * SQRT_PI)}
    if fam == "logistic":
        return {"kappa2": pi**2 / 3, "kappa4": 7 * pi**4 / 15, "roughness": 1 / 6}
    if fam == "sigmoid":
        return {"kappa2": pi**2 / 4, "kappa4": 5 * pi**4 / 16, "roughness": 2 / pi**2}
    if fam == "cosine":
        return {"kappa2": 1 - 8 / pi**2, "kappa4": 1 - 48 / pi**2 + 384 / pi**4,
                "roughness": pi**2 / 16}
    if fam == "triangle":
        return {"kappa2": 1 / 6, "kappa4": 1 / 15, "roughness": 2 / 3, "t2_roughness": 1 / 15}
    if fam == "tricube":
        return {"kappa2": 35 / 243, "kappa4": 1 / 22, "roughness": 175 / 247}
    return {}


@lru_cache(maxsize=None)
def _moments_cached(k: KernelSpec, method: str) -> KernelIntegrals:
    if method == "quadrature":
        vals = _quadrature_moments(k)
    elif method == "auto":
        vals = _closed_form_moments(k)
        vals["kappa5"] = 0.0
        if {"kappa2", "kappa4", "roughness", "t2_roughness"} - vals.keys():
            quad = _quadrature_moments(k)
            for key, value in quad.items():
                vals.setdefault(key, value)
    else:
        raise ValueError(f"unknown moments method {method!r}")
    return KernelIntegrals(kernel=k, **vals)


def moments(k: KernelSpec, method: str = "auto") -> KernelIntegrals:
    """kappa_2, kappa_4, kappa_5, R(K) and the integral of t^2 K^2.

    ``method="auto"`` uses closed forms where the family has them and
    adaptive quadrature otherwise; ``method="quadrature"`` forces quadrature
    for every quantity.
    """
    return _moments_cached(k, method)


def _gaussian_cross(l: float) -> tuple[float, float, float]:
    c0 = math.exp(-l * l / 4) / (2 * SQRT_PI)
    cpm = math.exp(-l * l) / (2 * SQRT_PI)
    t = (1 - math.exp(-l * l)) / (4 * SQRT_PI)
    return c0, cpm, t


def _uniform_cross(l: float) -> tuple[float, float, float]:
    c0 = max(2 - l, 0.0) / 4
    cpm = max(2 - 2 * l, 0.0) / 4
    w = max(1 - l, 0.0)
    t = 1 / 6 - (2 * w**3 / 3) / 4
    return c0, cpm, t


def cross_products(k: KernelSpec, l: float, method: str = "auto") -> tuple[float, float, float]:
    """Shifted cross-products at offset ``l``.

    Returns ``(C0, Cpm, T)`` with C0 = int K(t-l)K(t) dt,
    Cpm = int K(t-l)K(t+l) dt and T = int t^2 [K(t)^2 - K(t-l)K(t+l)] dt.
    """
    l = float(l)
    if not math.isfinite(l):
        raise ValueError(f"offset must be finite, got {l}")
    l = abs(l)
    if method == "auto":
        if k.family == "gaussian":
            return _gaussian_cross(l)
        if k.family == "beta" and k.params[0] == 0:
            return _uniform_cross(l)
    elif method != "quadrature":
        raise ValueError(f"unknown cross-product method {method!r}")
    T = k.truncation
    ints = moments(k)
    c0 = _integrate(k, lambda t: eval_kernel(k, t - l) * eval_kernel(k, t), l - T, T, (0.0, l))
    cpm = _integrate(
        k, lambda t: eval_kernel(k, t - l) * eval_kernel(k, t + l), l - T, T - l, (l, -l)
    )
    t2pm = _integrate(
        k, lambda t: t * t * eval_kernel(k, t - l) * eval_kernel(k, t + l), l - T, T - l, (l, -l)
    )
    return c0, cpm, ints.t2_roughness - t2pm
