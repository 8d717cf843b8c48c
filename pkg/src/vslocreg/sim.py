"""Seeded Monte Carlo harness for comparing estimator rules.

Each replication draws a fresh sample, evaluates every rule's CC estimator
on the evaluation grid, and stores the estimates.  Afterwards the per-point
sample variances, their spread over trimmed domains, and an integrated
squared error estimate are computed per rule.

Replication r uses the substream ``SeedSequence([seed, r])`` feeding a
Philox generator, so results do not depend on how replications are
scheduled.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._numerics import integrate_grid
from .estimators import RegressionSample, cc_many
from .kernels import KernelSpec
from .scenario import Scenario
from .selection import RULE_IDS, EstimatorRule, build_rule

__all__ = [
    "DEFAULT_TRIMS",
    "MAX_REJECTIONS",
    "BoxMuller",
    "SamplingError",
    "SimConfig",
    "RuleReport",
    "SimReport",
    "replicate_stream",
    "generate_sample",
    "run_simulation",
]

DEFAULT_TRIMS = (0.0, 0.05, 0.10, 0.15)
MAX_REJECTIONS = 1_000_000


class SamplingError(RuntimeError):
    """Rejection sampling exceeded its budget."""


class BoxMuller:
    """Standard normal variates by the polar Box-Muller method.

    Uniform pairs (v1, v2) on the square are kept when they fall inside the
    unit disc; each kept pair yields two independent normals.  Work is done
    in vectorised batches with leftovers buffered, so the output sequence
    depends only on the underlying uniform stream.
    """

    def __init__(self, rng: np.random.Generator, batch: int = 4096):
        self.rng = rng
        self.batch = batch
        self._buffer = np.empty(0)

    def uniform(self, size: int) -> np.ndarray:
        return self.rng.random(size)

    def _refill(self, needed: int) -> None:
        chunks = [self._buffer]
        have = self._buffer.size
        while have < needed:
            pairs = max(self.batch, (needed - have) // 2 + 16)
            v = 2.0 * self.rng.random((pairs, 2)) - 1.0
            rsq = v[:, 0] ** 2 + v[:, 1] ** 2
            keep = (rsq > 0) & (rsq < 1)
            v, rsq = v[keep], rsq[keep]
            fac = np.sqrt(-2.0 * np.log(rsq) / rsq)
            normals = (v * fac[:, None]).ravel()
            chunks.append(normals)
            have += normals.size
        self._buffer = np.concatenate(chunks)

    def normal(self, size: int) -> np.ndarray:
        if self._buffer.size < size:
            self._refill(size)
        out, self._buffer = self._buffer[:size], self._buffer[size:]
        return out.copy()


def replicate_stream(seed: int, replicate: int) -> BoxMuller:
    """Independent normal generator for one replication."""
    ss = np.random.SeedSequence([int(seed), int(replicate)])
    return BoxMuller(np.random.Generator(np.random.Philox(ss)))


def _draw_design(s: Scenario, n: int, stream: BoxMuller, max_rejections: int) -> np.ndarray:
    lo, hi = s.domain
    out = np.empty(0)
    rejected = 0
    if "design_mean" in s.meta:
        mu, sd = float(s.meta["design_mean"]), float(s.meta["design_sd"])
        while out.size < n:
            want = n - out.size
            z = mu + sd * stream.normal(int(want / 0.35) + 8)
            inside = (z >= lo) & (z <= hi)
            # rejections count only up to the last accepted draw we keep
            acc_idx = np.flatnonzero(inside)[:want]
            used = acc_idx[-1] + 1 if acc_idx.size == want else z.size
            rejected += int(used - acc_idx.size)
            out = np.concatenate([out, z[acc_idx]])
            if rejected > max_rejections:
                raise SamplingError(f"design rejection sampling exceeded {max_rejections} rejections")
        return out
    # generic scenarios: uniform proposal under a flat envelope
    grid = s.grid
    ceiling = 1.05 * float(np.max(s.f(grid)))
    while out.size < n:
        want = n - out.size
        u = lo + (hi - lo) * stream.uniform(4 * want + 8)
        accept = stream.uniform(u.size) * ceiling <= s.f(u)
        acc_idx = np.flatnonzero(accept)[:want]
        used = acc_idx[-1] + 1 if acc_idx.size == want else u.size
        rejected += int(used - acc_idx.size)
        out = np.concatenate([out, u[acc_idx]])
        if rejected > max_rejections:
            raise SamplingError(f"design rejection sampling exceeded {max_rejections} rejections")
    return out


def generate_sample(s: Scenario, n: int, stream: BoxMuller,
                    max_rejections: int = MAX_REJECTIONS) -> RegressionSample:
    """Draw X from the design density, then Y = m(X) + sigma(X) Z."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    x = _draw_design(s, n, stream, max_rejections)
    noise = np.sqrt(s.sigma2(x)) * stream.normal(n)
    return RegressionSample(x, s.m(x) + noise)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``common_stream`` makes every replication reuse the substream of
    replication 0 (a determinism check: all sample variances vanish).
    """

    scenario: Scenario
    kernel: KernelSpec
    rules: tuple[str, ...] = RULE_IDS
    n: int = 100
    M: int = 100
    seed: int = 0
    trims: tuple[float, ...] = DEFAULT_TRIMS
    integration: str = "riemann"
    workers: int = 1
    common_stream: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "trims", tuple(float(t) for t in self.trims))
        bad = [r for r in self.rules if r not in RULE_IDS]
        if bad or not self.rules:
            raise ValueError(f"rules must be a non-empty subset of {RULE_IDS}, got {self.rules}")
        if self.n < 10:
            raise ValueError(f"n must be >= 10, got {self.n}")
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if any(not 0 <= t < 0.5 for t in self.trims):
            raise ValueError(f"trim levels must lie in [0, 0.5), got {self.trims}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def eval_grid(self) -> np.ndarray:
        """Grid points x = lo + eps*j for j >= 1 (the left end point is skipped)."""
        return self.scenario.grid[1:]


@dataclass
class RuleReport:
    rule: EstimatorRule
    variances: np.ndarray
    sd: dict[float, float]
    mise_hat: float
    excluded_points: int
    failures: int

    @property
    def id(self) -> str:
        return self.rule.id


@dataclass
class SimReport:
    config: SimConfig
    x: np.ndarray
    rules: dict[str, RuleReport]
    replications: int
    wall_clock: float
    seed: int = field(init=False)

    def __post_init__(self):
        self.seed = self.config.seed


def _one_replicate(cfg: SimConfig, rules: list[EstimatorRule], x: np.ndarray, r: int) -> list[np.ndarray]:
    stream = replicate_stream(cfg.seed, 0 if cfg.common_stream else r)
    sample = generate_sample(cfg.scenario, cfg.n, stream)
    out = []
    for rule in rules:
        res = cc_many(sample, x, rule.h[1:], rule.lam[1:], cfg.kernel)
        out.append(res.estimate)
    return out


def _trim_mask(x: np.ndarray, domain: tuple[float, float], trim: float) -> np.ndarray:
    lo, hi = domain
    width = hi - lo
    tol = 1e-9 * width
    return (x >= lo + trim * width - tol) & (x <= hi - trim * width + tol)


def run_simulation(cfg: SimConfig, prebuilt: dict[str, EstimatorRule] | None = None) -> SimReport:
    """Run ``cfg.M`` replications for every configured rule and summarise them."""
    t0 = time.perf_counter()
    s = cfg.scenario
    prebuilt = prebuilt or {}
    rules = [prebuilt.get(r) or build_rule(r, s, cfg.kernel, cfg.n, cfg.integration) for r in cfg.rules]
    x = cfg.eval_grid()
    est = np.empty((len(rules), cfg.M, x.size))

    if cfg.workers == 1:
        for r in range(cfg.M):
            for i, e in enumerate(_one_replicate(cfg, rules, x, r)):
                est[i, r] = e
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = pool.map(lambda r: _one_replicate(cfg, rules, x, r), range(cfg.M))
            for r, res in enumerate(results):
                for i, e in enumerate(res):
                    est[i, r] = e

    truth = s.m(x)
    f = s.f(x)
    reports = {}
    for i, rule in enumerate(rules):
        e = est[i]
        valid = np.all(np.isfinite(e), axis=0)
        variances = np.full(x.size, np.nan)
        variances[valid] = np.var(e[:, valid], axis=0, ddof=1)
        sd = {}
        for trim in cfg.trims:
            sel = valid & _trim_mask(x, s.domain, trim)
            sd[trim] = float(np.std(variances[sel], ddof=1)) if np.sum(sel) > 1 else float("nan")
        sq = f[valid] * (truth[valid] - e[:, valid]) ** 2
        ise = np.array([integrate_grid(row, s.grid_step, cfg.integration) for row in sq])
        reports[rule.id] = RuleReport(
            rule=rule, variances=variances, sd=sd, mise_hat=float(np.mean(ise)),
            excluded_points=int(np.sum(~valid)), failures=int(np.sum(~np.isfinite(e))),
        )
    return SimReport(config=cfg, x=x, rules=reports, replications=cfg.M,
                     wall_clock=time.perf_counter() - t0)
