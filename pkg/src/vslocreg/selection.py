"""Bias coefficient B(x; lambda) and the eight bandwidth/weight rules (a)-(h).

Rules come in two groups sharing one construction each:

=====  ==========  =========================================================
 id    objective   construction
=====  ==========  =========================================================
 a/e   Var/MISE    VS weighting: lambda(x) solves V(lambda) gamma*(x) = zeta,
                   constant h
 b/f   Var/MISE    VS bandwidth: h(x) proportional to gamma*(x), constant lambda
 c/g   Var/MISE    AMISE-optimal fixed h, constant lambda
 d/h   Var/MISE    AMSE-optimal local h(x); lambda_min or per-x optimal lambda
=====  ==========  =========================================================

Every grid integral goes through :func:`vslocreg._numerics.integrate_grid`.
Optimised quantities (zeta, constant lambda) do not depend on n because n
only scales the AMISE, so they are computed once on the n-free shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import golden_section, integrate_grid
from .kernels import KernelSpec, moments
from .scenario import Scenario, gamma_profile
from .vtheory import (
    InfeasibleError,
    VCurve,
    feasibility,
    solve_lambda_for_v,
    v_extrema,
    v_of_lambda,
    zeta_var,
)

__all__ = [
    "AMISE_CONST",
    "RULE_IDS",
    "LAMBDA_SEARCH",
    "EstimatorRule",
    "SingularDensityError",
    "bias_components",
    "bias_B",
    "zeta_mise",
    "rule_vs_weighting",
    "rule_vs_bandwidth",
    "rule_fixed",
    "rule_mse_local",
    "build_rule",
    "amise_of_rule",
    "amise_direct",
    "optimal_constant_lambda",
]

AMISE_CONST = 8.0 ** (1 / 9) + 8.0 ** (-8 / 9)
RULE_IDS = ("a", "b", "c", "d", "e", "f", "g", "h")
LAMBDA_SEARCH = (1e-4, 5.0)
CLAMP_PERCENTILE = 99.0

_OBJECTIVE = {"a": "Var", "b": "Var", "c": "Var", "d": "Var",
              "e": "MISE", "f": "MISE", "g": "MISE", "h": "MISE"}


class SingularDensityError(ZeroDivisionError):
    """B(x; lambda) requested where the design density vanishes."""


def bias_components(s: Scenario, kernel: KernelSpec, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Split B(x; lambda) = P(x) - Q(x)/lambda.

    P = (k2^2 - k4)(2 f'' m'' + 4 f' m''' + f m'''')/(8 f) and
    Q = k2^2 m''''/16.
    """
    ints = moments(kernel)
    x = s.grid if x is None else np.asarray(x, dtype=float)
    f = np.asarray(s.f(x), dtype=float)
    if np.any(f == 0):
        raise SingularDensityError("design density is zero at a requested point")
    m4 = s.m4(x)
    core = 2 * s.f2(x) * s.m2(x) + 4 * s.f1(x) * s.m3(x) + f * m4
    p = (ints.kappa2**2 - ints.kappa4) * core / (8 * f)
    q = ints.kappa2**2 * m4 / 16
    return p, q


def bias_B(s: Scenario, x, lam, kernel: KernelSpec):
    """Leading bias coefficient of the CC estimator (the factor of h^4)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise ValueError("lambda must be > 0")
    p, q = bias_components(s, kernel, np.asarray(x, dtype=float))
    out = p - q / lam
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class EstimatorRule:
    """One bandwidth/weight configuration evaluated on the scenario grid.

    ``h_report``/``lam_report`` are the scalars printed in bandwidth tables:
    the constant h (a, c, e, g), the factor h0 with h(x) = gamma*(x) h0
    (b, f), or ``None`` for the local rules d and h.
    """

    id: str
    objective: str
    kernel: KernelSpec
    n: int
    x: np.ndarray
    h: np.ndarray
    lam: np.ndarray
    amise: float
    h_report: float | None
    lam_report: float | None
    zeta: float | None = None
    integration: str = "riemann"
    singular: np.ndarray = field(default=None, repr=False)
    clamped: np.ndarray = field(default=None, repr=False)
    boundary: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        blank = np.zeros(self.x.shape, dtype=bool)
        for name in ("singular", "clamped", "boundary"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, blank.copy())
        if np.any(~(self.h > 0)) or np.any(~(self.lam > 0)):
            raise ValueError(f"rule {self.id}: bandwidth and weight must be positive on the grid")

    @property
    def diagnostics(self) -> list[tuple[float, str]]:
        """Grid points that needed special handling, as (x, reason)."""
        out = []
        for name in ("singular", "clamped", "boundary"):
            out.extend((float(v), name) for v in self.x[getattr(self, name)])
        return sorted(out)


class _Setup:
    """Grid evaluations shared by every rule for one (scenario, kernel)."""

    def __init__(self, s: Scenario, kernel: KernelSpec, integration: str):
        self.s, self.kernel, self.integration = s, kernel, integration
        self.x = s.grid
        self.f = np.asarray(s.f(self.x), dtype=float)
        self.sigma2 = np.broadcast_to(np.asarray(s.sigma2(self.x), dtype=float), self.x.shape)
        self.gamma = self.sigma2 / self.f
        self.p, self.q = bias_components(s, kernel, self.x)
        self.curve = v_extrema(kernel)
        self.profile = gamma_profile(s)

    def integrate(self, values) -> float:
        return integrate_grid(values, self.s.grid_step, self.integration)

    def B(self, lam):
        return self.p - self.q / lam


def _log_scan_then_golden(obj, lo: float, hi: float, points: int = 81, rtol: float = 1e-5):
    """Global-ish minimiser of a 1-D function on [lo, hi] (log scale)."""
    grid = np.geomspace(lo, hi, points)
    vals = np.array([obj(g) for g in grid])
    i = int(np.argmin(vals))
    a, b = math.log(grid[max(i - 1, 0)]), math.log(grid[min(i + 1, points - 1)])
    u, best = golden_section(lambda t: obj(math.exp(t)), a, b, rtol=0.0, atol=rtol)
    return math.exp(u), best, i in (0, points - 1)


# ---------------------------------------------------------------- rules a/e

def _vs_weights(st: _Setup, zeta: float) -> np.ndarray:
    return np.asarray(solve_lambda_for_v(st.curve, zeta / st.gamma), dtype=float)


def _weighting_shape(st: _Setup, zeta: float) -> tuple[float, np.ndarray]:
    lam = _vs_weights(st, zeta)
    return st.integrate(st.f * st.B(lam) ** 2), lam


def _zeta_range(st: _Setup) -> tuple[float, float]:
    verdict = feasibility(st.curve, st.profile.gamma_max, st.profile.gamma_min)
    if not verdict.feasible:
        raise InfeasibleError(
            f"variance stabilisation by weighting is infeasible for {st.kernel} "
            f"(gamma ratio {verdict.gamma_ratio:.4f} > V ratio {verdict.v_ratio:.4f}); "
            "use the VS bandwidth rules b/f instead"
        )
    return verdict.zeta_range


def _zeta_mise(st: _Setup, rtol: float) -> float:
    lo, hi = _zeta_range(st)
    if hi - lo <= rtol * hi:
        return lo

    def shape(z):
        a, _ = _weighting_shape(st, z)
        return z ** (8 / 9) * a ** (1 / 9)

    grid = np.linspace(lo, hi, 21)
    vals = np.array([shape(z) for z in grid])
    i = int(np.argmin(vals))
    z, _ = golden_section(shape, grid[max(i - 1, 0)], grid[min(i + 1, 20)], rtol=rtol)
    return z


def zeta_mise(curve: VCurve, scenario: Scenario, n: int | None = None, integration: str = "riemann",
              rtol: float = 1e-5) -> float:
    """Stabilised level zeta minimising the AMISE of the VS weighting rule.

    ``n`` is accepted for symmetry with the other rules; the argmin does not
    depend on it.
    """
    st = _Setup(scenario, curve.kernel, integration)
    return _zeta_mise(st, rtol)


def _rule_vs_weighting(st: _Setup, n: int, objective: str, rtol: float = 1e-5) -> EstimatorRule:
    if objective == "Var":
        _zeta_range(st)
        zeta = zeta_var(st.curve, st.profile.gamma_max)
    else:
        zeta = _zeta_mise(st, rtol)
    a, lam = _weighting_shape(st, zeta)
    h = (zeta / (8 * a)) ** (1 / 9) * n ** (-1 / 9)
    amise = AMISE_CONST * zeta ** (8 / 9) * a ** (1 / 9) * n ** (-8 / 9)
    return EstimatorRule(
        id="a" if objective == "Var" else "e", objective=objective, kernel=st.kernel, n=n, x=st.x,
        h=np.full(st.x.shape, h), lam=lam, amise=amise, h_report=h, lam_report=None, zeta=zeta,
        integration=st.integration,
        boundary=np.isclose(lam, st.curve.lambda_cap),
    )


def rule_vs_weighting(s: Scenario, kernel: KernelSpec, n: int, objective: str = "Var",
                      integration: str = "riemann") -> EstimatorRule:
    """Rules a (objective ``"Var"``) and e (``"MISE"``)."""
    return _rule_vs_weighting(_Setup(s, kernel, integration), _check_n(n), _check_objective(objective))


# ---------------------------------------------------------------- rules b/f

def _vs_bandwidth_parts(st: _Setup, lam: float) -> tuple[float, float]:
    v = float(v_of_lambda(st.kernel, lam))
    a = st.integrate(st.sigma2**8 * st.B(lam) ** 2 / st.f**7)
    return v, a


def _fixed_parts(st: _Setup, lam: float) -> tuple[float, float]:
    v = float(v_of_lambda(st.kernel, lam))
    return st.integrate(st.sigma2) * v, st.integrate(st.f * st.B(lam) ** 2)


def optimal_constant_lambda(s: Scenario, kernel: KernelSpec, family: str, integration: str = "riemann",
                            bounds: tuple[float, float] = LAMBDA_SEARCH, rtol: float = 1e-5) -> float:
    """AMISE-minimising constant weight for the ``"vs_bandwidth"`` or ``"fixed"`` rule."""
    st = _Setup(s, kernel, integration)
    return _optimal_lambda(st, family, bounds, rtol)[0]


def _optimal_lambda(st: _Setup, family: str, bounds, rtol):
    parts = {"vs_bandwidth": _vs_bandwidth_parts, "fixed": _fixed_parts}[family]

    def shape(lam):
        v, a = parts(st, lam)
        return v ** (8 / 9) * a ** (1 / 9)

    lam, _, at_edge = _log_scan_then_golden(shape, *bounds, rtol=rtol)
    return lam, at_edge


def _rule_vs_bandwidth(st: _Setup, n: int, objective: str, rtol: float = 1e-5) -> EstimatorRule:
    edge = False
    if objective == "Var":
        lam = st.curve.lambda_min
    else:
        lam, edge = _optimal_lambda(st, "vs_bandwidth", LAMBDA_SEARCH, rtol)
    v, a = _vs_bandwidth_parts(st, lam)
    h0 = v ** (1 / 9) * (8 * a) ** (-1 / 9) * n ** (-1 / 9)
    amise = AMISE_CONST * v ** (8 / 9) * a ** (1 / 9) * n ** (-8 / 9)
    return EstimatorRule(
        id="b" if objective == "Var" else "f", objective=objective, kernel=st.kernel, n=n, x=st.x,
        h=st.gamma * h0, lam=np.full(st.x.shape, lam), amise=amise, h_report=h0, lam_report=lam,
        integration=st.integration, boundary=np.full(st.x.shape, edge),
    )


def rule_vs_bandwidth(s: Scenario, kernel: KernelSpec, n: int, objective: str = "Var",
                      integration: str = "riemann") -> EstimatorRule:
    """Rules b and f: h(x) = gamma*(x) * h0 with a constant weight."""
    return _rule_vs_bandwidth(_Setup(s, kernel, integration), _check_n(n), _check_objective(objective))


# ---------------------------------------------------------------- rules c/g

def _rule_fixed(st: _Setup, n: int, objective: str, rtol: float = 1e-5) -> EstimatorRule:
    edge = False
    if objective == "Var":
        lam = st.curve.lambda_min
    else:
        lam, edge = _optimal_lambda(st, "fixed", LAMBDA_SEARCH, rtol)
    var_part, bias_part = _fixed_parts(st, lam)
    h = (var_part / (8 * bias_part)) ** (1 / 9) * n ** (-1 / 9)
    amise = AMISE_CONST * var_part ** (8 / 9) * bias_part ** (1 / 9) * n ** (-8 / 9)
    return EstimatorRule(
        id="c" if objective == "Var" else "g", objective=objective, kernel=st.kernel, n=n, x=st.x,
        h=np.full(st.x.shape, h), lam=np.full(st.x.shape, lam), amise=amise, h_report=h,
        lam_report=lam, integration=st.integration, boundary=np.full(st.x.shape, edge),
    )


def rule_fixed(s: Scenario, kernel: KernelSpec, n: int, objective: str = "Var",
               integration: str = "riemann") -> EstimatorRule:
    """Rules c and g: one AMISE-optimal bandwidth for the whole domain."""
    return _rule_fixed(_Setup(s, kernel, integration), _check_n(n), _check_objective(objective))


# ---------------------------------------------------------------- rules d/h

def _local_weights(st: _Setup, bounds=LAMBDA_SEARCH, scan_points: int = 201, rtol: float = 1e-10):
    """Per-x minimiser of V(lambda)^4 |B(x; lambda)| (equivalently of the AMSE)."""
    lo, hi = bounds
    grid = np.geomspace(lo, hi, scan_points)
    vg = np.asarray(v_of_lambda(st.kernel, grid))
    p, q = st.p, st.q
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(p != 0, q / p, np.nan)
    singular = (root >= lo) & (root <= hi)

    obj = vg[None, :] ** 4 * np.abs(p[:, None] - q[:, None] / grid[None, :])
    j = np.argmin(obj, axis=1)
    boundary = ~singular & ((j == 0) | (j == scan_points - 1))
    a = np.log(grid[np.maximum(j - 1, 0)])
    b = np.log(grid[np.minimum(j + 1, scan_points - 1)])

    def f(u):
        lam = np.exp(u)
        return np.asarray(v_of_lambda(st.kernel, lam)) ** 4 * np.abs(p - q / lam)

    u = _golden_vec(f, a, b, rtol)
    lam = np.exp(u)
    lam[boundary] = grid[j[boundary]]
    lam[singular] = root[singular]
    return lam, singular, boundary


def _golden_vec(func, a: np.ndarray, b: np.ndarray, atol: float, max_iter: int = 200) -> np.ndarray:
    """Golden-section search run independently on many brackets at once."""
    g = (math.sqrt(5.0) - 1) / 2
    a, b = a.copy(), b.copy()
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if np.all(b - a <= atol):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - g * (b - a), d)
        new_d = np.where(left, c, a + g * (b - a))
        fcd_c = np.where(left, np.nan, fd)
        fcd_d = np.where(left, fc, np.nan)
        c, d = new_c, new_d
        # one fresh evaluation per bracket: c on the left branch, d on the right
        fresh = func(np.where(left, c, d))
        fc = np.where(left, fresh, fcd_c)
        fd = np.where(left, fcd_d, fresh)
    return 0.5 * (a + b)


def _rule_mse_local(st: _Setup, n: int, objective: str) -> EstimatorRule:
    if objective == "Var":
        lam = np.full(st.x.shape, st.curve.lambda_min)
        singular = np.zeros(st.x.shape, dtype=bool)
        boundary = singular.copy()
    else:
        lam, singular, boundary = _local_weights(st)
    v = np.asarray(v_of_lambda(st.kernel, lam))
    bias = st.B(lam)
    bias[singular] = 0.0
    with np.errstate(divide="ignore"):
        raw = 8 ** (-1 / 9) * (st.sigma2 * v / (st.f * bias**2)) ** (1 / 9) * n ** (-1 / 9)
    finite = np.isfinite(raw)
    singular = singular | ~finite
    cap = float(np.percentile(raw[finite], CLAMP_PERCENTILE))
    clamped = raw > cap
    h = np.minimum(raw, cap)
    rule = EstimatorRule(
        id="d" if objective == "Var" else "h", objective=objective, kernel=st.kernel, n=n, x=st.x,
        h=h, lam=lam, amise=float("nan"), h_report=None,
        lam_report=st.curve.lambda_min if objective == "Var" else None,
        integration=st.integration, singular=singular, clamped=clamped, boundary=boundary,
    )
    object.__setattr__(rule, "amise", _amise_local(st, rule))
    return rule


def rule_mse_local(s: Scenario, kernel: KernelSpec, n: int, objective: str = "Var",
                   integration: str = "riemann") -> EstimatorRule:
    """Rules d and h: pointwise AMSE-optimal bandwidth.

    Where B(x; lambda(x)) = 0 the optimal bandwidth is infinite; such points
    are flagged ``singular`` and, like any other extreme value, h is clamped
    at the 99th percentile of the finite bandwidths.
    """
    return _rule_mse_local(_Setup(s, kernel, integration), _check_n(n), _check_objective(objective))


# ---------------------------------------------------------------- AMISE

def _amise_local(st: _Setup, rule: EstimatorRule) -> float:
    v = np.asarray(v_of_lambda(st.kernel, rule.lam))
    bias = np.where(rule.singular, 0.0, st.B(rule.lam))
    integrand = st.sigma2 ** (8 / 9) * st.f ** (1 / 9) * v ** (8 / 9) * np.abs(bias) ** (2 / 9)
    return AMISE_CONST * st.integrate(integrand) * rule.n ** (-8 / 9)


def amise_of_rule(rule: EstimatorRule, s: Scenario, kernel: KernelSpec | None = None,
                  n: int | None = None) -> float:
    """Closed-form AMISE of a built rule, optionally re-scaled to another ``n``."""
    kernel = rule.kernel if kernel is None else kernel
    n = rule.n if n is None else _check_n(n)
    st = _Setup(s, kernel, rule.integration)
    scale = n ** (-8 / 9)
    if rule.id in ("a", "e"):
        a = st.integrate(st.f * st.B(rule.lam) ** 2)
        return AMISE_CONST * rule.zeta ** (8 / 9) * a ** (1 / 9) * scale
    if rule.id in ("b", "f"):
        v, a = _vs_bandwidth_parts(st, float(rule.lam[0]))
        return AMISE_CONST * v ** (8 / 9) * a ** (1 / 9) * scale
    if rule.id in ("c", "g"):
        var_part, bias_part = _fixed_parts(st, float(rule.lam[0]))
        return AMISE_CONST * var_part ** (8 / 9) * bias_part ** (1 / 9) * scale
    return _amise_local(st, rule) * (n / rule.n) ** (-8 / 9)


def amise_direct(rule: EstimatorRule, s: Scenario) -> float:
    """AMISE from the profiles themselves: integral of f [B^2 h^8 + sigma^2 V / (n h f)]."""
    st = _Setup(s, rule.kernel, rule.integration)
    v = np.asarray(v_of_lambda(rule.kernel, rule.lam))
    bias = np.where(rule.singular, 0.0, st.B(rule.lam))
    integrand = st.f * bias**2 * rule.h**8 + st.sigma2 * v / (rule.n * rule.h)
    return st.integrate(integrand)


# ---------------------------------------------------------------- dispatch

def build_rule(rule_id: str, s: Scenario, kernel: KernelSpec, n: int,
               integration: str = "riemann") -> EstimatorRule:
    """Construct rule ``a``..``h`` for scenario ``s``."""
    if rule_id not in RULE_IDS:
        raise ValueError(f"unknown rule {rule_id!r}; expected one of {', '.join(RULE_IDS)}")
    st = _Setup(s, kernel, integration)
    n = _check_n(n)
    objective = _OBJECTIVE[rule_id]
    if rule_id in ("a", "e"):
        return _rule_vs_weighting(st, n, objective)
    if rule_id in ("b", "f"):
        return _rule_vs_bandwidth(st, n, objective)
    if rule_id in ("c", "g"):
        return _rule_fixed(st, n, objective)
    return _rule_mse_local(st, n, objective)


def _check_n(n) -> int:
    if int(n) != n or n < 2:
        raise ValueError(f"sample size must be an integer >= 2, got {n}")
    return int(n)


def _check_objective(objective: str) -> str:
    if objective not in ("Var", "MISE"):
        raise ValueError(f"objective must be 'Var' or 'MISE', got {objective!r}")
    return objective
