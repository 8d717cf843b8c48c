"""``vslocreg`` command line interface.

Every subcommand writes CSV (to ``--out`` or stdout) preceded by ``#``
comment lines that echo the fully resolved configuration.  Settings can
also come from ``--config FILE`` holding ``key = value`` lines; command line
flags win over the file.  Exit status: 0 success, 1 error, and for
``feasibility`` 2 when stabilisation by weighting is infeasible.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from typing import Any, Sequence

import numpy as np

from . import __version__
from .estimators import RegressionSample, cc_many
from .kernels import STANDARD_KERNELS, KernelSpec, moments, parse_kernel
from .scenario import builtin_scenario, gamma_profile, grid_points
from .selection import RULE_IDS, build_rule
from .sim import DEFAULT_TRIMS, SimConfig, run_simulation
from .vtheory import ShapeError, feasibility, interval_l, v_extrema, v_of_lambda

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

# config-file key -> argparse dest
CONFIG_KEYS = {
    "kernel": "kernel",
    "kernels": "kernels",
    "seed": "seed",
    "out": "out",
    "grid_step": "grid_step",
    "scenario.k": "k",
    "scenario.sigma_offset": "sigma_offset",
    "scenario.grid_step": "grid_step",
    "scenario.domain": "domain",
    "integration": "integration",
    "n": "n",
    "M": "M",
    "rules": "rules",
    "rule": "rule",
    "lambda_max": "lambda_max",
    "step": "step",
    "h": "h",
    "lambda": "lam",
    "data": "data",
    "grid": "grid",
    "workers": "workers",
    "family": "family",
    "a0": "a0",
    "a1": "a1",
    "opt_grid": "opt_grid",
}

DEFAULTS = {
    "seed": 20160101,
    "grid_step": 1e-3,
    "k": 1,
    "sigma_offset": 2.5,
    "domain": "0:1",
    "integration": "riemann",
    "kernel": "gaussian",
    "n": 100,
    "M": 100,
    "rules": ",".join(RULE_IDS),
    "lambda_max": 5.0,
    "step": 0.01,
    "grid": "0:1:0.01",
    "workers": 1,
    "family": "vs",
    "a0": "0:0.5",
    "a1": "0.5:12",
    "opt_grid": "6,24",
}


class CliError(Exception):
    """User-facing error; reported on stderr with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def _emit(args, header: dict[str, Any], columns: Sequence[str], rows, notes: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    buf.write(f"# vslocreg {__version__} {args.command}\n")
    for key in sorted(header):
        buf.write(f"# {key} = {_fmt(header[key])}\n")
    for note in notes:
        buf.write(f"# {note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_range(text: str, name: str) -> tuple[float, float]:
    parts = str(text).split(":")
    try:
        lo, hi = (float(p) for p in parts) if len(parts) == 2 else (float(parts[0]),) * 2
    except ValueError:
        raise CliError(f"bad {name} range {text!r}; expected lo:hi") from None
    if hi < lo:
        raise CliError(f"bad {name} range {text!r}: hi < lo")
    return lo, hi


def _kernel(args) -> KernelSpec:
    try:
        return parse_kernel(args.kernel)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _scenario(args):
    if _parse_range(args.domain, "domain") != (0.0, 1.0):
        raise CliError("built-in scenarios are defined on the domain 0:1")
    return builtin_scenario(int(args.k), float(args.sigma_offset), float(args.grid_step))


def _scenario_header(args) -> dict[str, Any]:
    return {"scenario.k": args.k, "scenario.sigma_offset": args.sigma_offset,
            "scenario.grid_step": args.grid_step, "scenario.domain": args.domain,
            "integration": args.integration}


# ---------------------------------------------------------------- commands

def cmd_kernel_table(args) -> int:
    ids = [k for k in (args.kernels or "").split(",") if k.strip()] or list(STANDARD_KERNELS)
    rows = []
    for kid in ids:
        try:
            kern = parse_kernel(kid)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        ints = moments(kern)
        c = v_extrema(kern)
        rows.append([kern.name, ints.kappa2, ints.kappa4, c.v_min, c.v_sup, c.lambda_min, c.v_range, c.ratio])
    _emit(args, {"kernels": ",".join(ids)},
          ["kernel", "kappa2", "kappa4", "v_min", "v_sup", "argmin_lambda", "range", "ratio"], rows)
    return EXIT_OK


def cmd_vcurve(args) -> int:
    kern = _kernel(args)
    step, top = float(args.step), float(args.lambda_max)
    if not (step > 0 and top >= step):
        raise CliError("need step > 0 and lambda-max >= step")
    lam = step * np.arange(1, int(round(top / step)) + 1)
    v = np.asarray(v_of_lambda(kern, lam))
    c = v_extrema(kern)
    notes = [f"v_min = {_fmt(c.v_min)} at lambda = {_fmt(c.lambda_min)}", f"v_sup = {_fmt(c.v_sup)}"]
    _emit(args, {"kernel": kern.name, "lambda_max": top, "step": step}, ["lambda", "V"], zip(lam, v), notes)
    return EXIT_OK


def cmd_feasibility(args) -> int:
    kern = _kernel(args)
    s = _scenario(args)
    gp = gamma_profile(s)
    verdict = feasibility(v_extrema(kern), gp.gamma_max, gp.gamma_min)
    lo, hi = verdict.zeta_range or (None, None)
    word = "feasible" if verdict.feasible else "infeasible"
    header = {"kernel": kern.name, **_scenario_header(args)}
    _emit(args, header,
          ["gamma_max", "gamma_min", "gamma_ratio", "v_ratio", "feasible", "zeta_lo", "zeta_hi"],
          [[gp.gamma_max, gp.gamma_min, verdict.gamma_ratio, verdict.v_ratio, verdict.feasible, lo, hi]],
          [f"verdict: variance stabilisation by weighting is {word} "
           f"(gamma ratio {verdict.gamma_ratio:.4f} vs V ratio {verdict.v_ratio:.4f})"])
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def _rule(args, s, kern, n):
    if args.rule not in RULE_IDS:
        raise CliError(f"unknown rule {args.rule!r}; expected one of {', '.join(RULE_IDS)}")
    return build_rule(args.rule, s, kern, n, args.integration)


def cmd_profiles(args) -> int:
    kern = _kernel(args)
    s = _scenario(args)
    rule = _rule(args, s, kern, int(args.n))
    gamma = s.gamma(rule.x)
    ell = np.asarray(interval_l(kern, rule.lam))
    flags = np.full(rule.x.shape, "", dtype=object)
    for name in ("boundary", "clamped", "singular"):
        flags[getattr(rule, name)] = name
    header = {"kernel": kern.name, "rule": rule.id, "n": rule.n, **_scenario_header(args)}
    notes = ([f"zeta = {_fmt(rule.zeta)}"] if rule.zeta is not None else []) + [f"amise = {_fmt(rule.amise)}"]
    _emit(args, header, ["x", "gamma", "lambda", "l", "h", "flag"],
          zip(rule.x, gamma, rule.lam, ell, rule.h, flags), notes)
    return EXIT_OK


def cmd_bandwidths(args) -> int:
    kern = _kernel(args)
    s = _scenario(args)
    rows = []
    for rid in _rules_list(args):
        r = build_rule(rid, s, kern, int(args.n), args.integration)
        rows.append([r.id, r.objective, r.h_report, r.lam_report, r.zeta, r.amise,
                     int(r.singular.sum()), int(r.clamped.sum())])
    header = {"kernel": kern.name, "n": int(args.n), "rules": ",".join(_rules_list(args)), **_scenario_header(args)}
    _emit(args, header, ["rule", "objective", "bandwidth", "lambda", "zeta", "amise", "singular", "clamped"], rows)
    return EXIT_OK


def _rules_list(args) -> list[str]:
    ids = [r.strip() for r in str(args.rules).split(",") if r.strip()]
    bad = [r for r in ids if r not in RULE_IDS]
    if bad or not ids:
        raise CliError(f"bad rule list {args.rules!r}; rules are {', '.join(RULE_IDS)}")
    return ids


def _read_xy(path: str) -> RegressionSample:
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if not xs and lineno == 1 or not xs:
                    continue  # header line
                raise CliError(f"{path}:{lineno}: expected two numeric columns") from None
            xs.append(x)
            ys.append(y)
    try:
        return RegressionSample(np.array(xs), np.array(ys))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_fit(args) -> int:
    if not args.data:
        raise CliError("fit needs --data")
    kern = _kernel(args)
    data = _read_xy(args.data)
    lo, hi, step = _grid_spec(args.grid)
    x = grid_points(lo, hi, step)
    header = {"kernel": kern.name, "data": args.data, "grid": args.grid, "n": data.n}
    if args.rule:
        if args.h is not None or args.lam is not None:
            raise CliError("give either --rule or --h/--lambda, not both")
        s = _scenario(args)
        rule = _rule(args, s, kern, data.n)
        h = np.interp(x, rule.x, rule.h)
        lam = np.interp(x, rule.x, rule.lam)
        header.update({"rule": rule.id, **_scenario_header(args)})
    else:
        if args.h is None or args.lam is None:
            raise CliError("fit needs --rule or both --h and --lambda")
        h, lam = float(args.h), float(args.lam)
        if not (h > 0 and lam > 0):
            raise CliError("--h and --lambda must be > 0")
        header.update({"h": h, "lambda": lam})
    res = cc_many(data, x, h, lam, kern)
    _emit(args, header, ["x", "m_hat"], zip(x, res.estimate),
          [f"failed points = {res.failures}"])
    return EXIT_OK


def _grid_spec(text: str) -> tuple[float, float, float]:
    parts = str(text).split(":")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"bad grid {text!r}; expected lo:hi:step") from None
    if not (hi > lo and step > 0):
        raise CliError(f"bad grid {text!r}")
    return lo, hi, step


def cmd_simulate(args) -> int:
    kern = _kernel(args)
    s = _scenario(args)
    rules = _rules_list(args)
    try:
        cfg = SimConfig(scenario=s, kernel=kern, rules=tuple(rules), n=int(args.n), M=int(args.M),
                        seed=int(args.seed), trims=DEFAULT_TRIMS, integration=args.integration,
                        workers=int(args.workers))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    rep = run_simulation(cfg)
    sd_cols = [f"sd_{t:g}" for t in cfg.trims]
    rows = []
    for rid in rules:
        rr = rep.rules[rid]
        r = rr.rule
        rows.append([rid, r.objective, r.h_report, float(r.h.min()), float(r.h.max()), r.lam_report,
                     float(r.lam.min()), float(r.lam.max()), r.zeta, r.amise, rr.mise_hat,
                     *(rr.sd[t] for t in cfg.trims), rr.excluded_points])
    header = {"kernel": kern.name, "n": cfg.n, "M": cfg.M, "seed": cfg.seed, "rules": ",".join(rules),
              **_scenario_header(args)}
    _emit(args, header,
          ["rule", "objective", "bandwidth", "h_min", "h_max", "lambda", "lambda_min", "lambda_max",
           "zeta", "amise", "mise_hat", *sd_cols, "excluded_points"], rows)
    if args.dump_variances:
        dump = argparse.Namespace(**{**vars(args), "out": args.dump_variances})
        cols = np.column_stack([rep.x] + [rep.rules[r].variances for r in rules])
        _emit(dump, header, ["x", *(f"var_{r}" for r in rules)], cols.tolist())
    print(f"simulation finished in {rep.wall_clock:.1f} s", file=sys.stderr)
    return EXIT_OK


def _vs_ratio(a0: float, a1: float):
    try:
        c = v_extrema(KernelSpec("vskernel", (a0, a1)))
    except (ValueError, ShapeError):
        return None
    return c


def kernel_search(a0_range, a1_range, grid=(6, 24), tol=1e-6, max_evals=2000):
    """Maximise V_sup/V_min over the (a0, a1) kernel family.

    Coarse grid scan, then a compass pattern search from the best grid point
    with step halving.  Returns ``(a0, a1, curve)``.
    """
    (l0, h0), (l1, h1) = a0_range, a1_range
    if l1 <= 0:
        raise CliError("a1 bounds must be > 0")
    if l0 < 0:
        raise CliError("a0 bounds must be >= 0")
    best = None
    for a0 in np.linspace(l0, h0, grid[0] if h0 > l0 else 1):
        for a1 in np.linspace(l1, h1, grid[1] if h1 > l1 else 1):
            c = _vs_ratio(float(a0), float(a1))
            if c is not None and (best is None or c.ratio > best[2].ratio):
                best = (float(a0), float(a1), c)
    if best is None:
        raise CliError("no admissible (a0, a1) in the given bounds")
    steps = [(h0 - l0) / max(grid[0] - 1, 1), (h1 - l1) / max(grid[1] - 1, 1)]
    evals = 0
    while any(s > tol for s in steps) and evals < max_evals:
        moved = False
        for dim in (0, 1):
            if steps[dim] <= tol:
                continue
            for sign in (1, -1):
                p = [best[0], best[1]]
                p[dim] = min(max(p[dim] + sign * steps[dim], (l0, l1)[dim]), (h0, h1)[dim])
                if p == [best[0], best[1]]:
                    continue
                c = _vs_ratio(*p)
                evals += 1
                if c is not None and c.ratio > best[2].ratio:
                    best = (p[0], p[1], c)
                    moved = True
                    break
        if not moved:
            steps = [s / 2 for s in steps]
    return best


def cmd_kernel_opt(args) -> int:
    if args.family != "vs":
        raise CliError(f"unsupported kernel family {args.family!r}; only 'vs' is searchable")
    r0 = _parse_range(args.a0, "a0")
    r1 = _parse_range(args.a1, "a1")
    try:
        g = tuple(int(v) for v in str(args.opt_grid).split(","))
        assert len(g) == 2 and min(g) >= 1
    except (ValueError, AssertionError):
        raise CliError(f"bad --grid {args.opt_grid!r}; expected N0,N1") from None
    a0, a1, c = kernel_search(r0, r1, g)
    header = {"family": "vs", "a0": args.a0, "a1": args.a1, "grid": args.opt_grid}
    _emit(args, header, ["a0", "a1", "ratio", "v_min", "v_sup", "argmin_lambda"],
          [[a0, a1, c.ratio, c.v_min, c.v_sup, c.lambda_min]])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_globals(p, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--out", default=d, help="output CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=d, help="master RNG seed (unsigned 64-bit)")
    p.add_argument("--grid-step", dest="grid_step", type=float, default=d, help="scenario grid step")
    p.add_argument("--config", default=d, help="key = value settings file; flags override it")


def _add_scenario(p) -> None:
    p.add_argument("--k", type=int, choices=(1, 2, 3), help="regression function index")
    p.add_argument("--sigma-offset", dest="sigma_offset", type=float, help="noise variance offset")
    p.add_argument("--domain", help="scenario domain lo:hi (built-ins: 0:1)")
    p.add_argument("--integration", choices=("riemann", "trapezoid"), help="grid integration rule")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vslocreg", description="Variance-stabilised local linear regression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel-table", help="kappa moments and V extrema per kernel")
    p.add_argument("--kernels", help="comma-separated kernel ids (default: the standard 17)")
    p.set_defaults(func=cmd_kernel_table)

    p = sub.add_parser("vcurve", help="V(lambda) on a grid")
    p.add_argument("--kernel")
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.add_argument("--step", type=float)
    p.set_defaults(func=cmd_vcurve)

    p = sub.add_parser("feasibility", help="can weighting stabilise the variance? (exit 0 yes, 2 no)")
    p.add_argument("--kernel")
    _add_scenario(p)
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("profiles", help="gamma, lambda, l and h along the grid for one rule")
    p.add_argument("--rule")
    p.add_argument("--kernel")
    p.add_argument("--n", type=int)
    _add_scenario(p)
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("bandwidths", help="bandwidth, weight, zeta and AMISE for rules a-h")
    p.add_argument("--kernel")
    p.add_argument("--n", type=int)
    p.add_argument("--rules")
    _add_scenario(p)
    p.set_defaults(func=cmd_bandwidths)

    p = sub.add_parser("fit", help="CC estimate on a grid from (x, y) CSV data")
    p.add_argument("--data")
    p.add_argument("--rule")
    p.add_argument("--h", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kernel")
    p.add_argument("--grid", help="lo:hi:step")
    _add_scenario(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of rules")
    p.add_argument("--kernel")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--rules")
    p.add_argument("--workers", type=int)
    p.add_argument("--dump-variances", dest="dump_variances", help="also write per-point variances here")
    _add_scenario(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kernel-opt", help="search the (a0, a1) kernel family for the largest V ratio")
    p.add_argument("--family")
    p.add_argument("--a0", help="lo:hi bounds (or a single value)")
    p.add_argument("--a1", help="lo:hi bounds (or a single value)")
    p.add_argument("--grid", dest="opt_grid", help="coarse grid sizes N0,N1")
    p.set_defaults(func=cmd_kernel_opt)

    for sp in sub.choices.values():
        _add_globals(sp, suppress=True)
    return parser


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` comments allowed); unknown keys are an error."""
    out = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        out[CONFIG_KEYS[key]] = value
    return out


def _resolve(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    sub = parser._subparsers._group_actions[0].choices[args.command]
    types = {a.dest: a.type for a in sub._actions if a.dest != "help"}
    types.update({"seed": int, "grid_step": float})
    file_values = read_config(args.config) if getattr(args, "config", None) else {}
    for dest in set(DEFAULTS) | set(file_values) | set(types):
        if getattr(args, dest, None) is not None:
            continue
        if dest in file_values:
            conv = types.get(dest) or str
            try:
                setattr(args, dest, conv(file_values[dest]))
            except ValueError:
                raise CliError(f"config value for {dest!r} is invalid: {file_values[dest]!r}") from None
        else:
            setattr(args, dest, DEFAULTS.get(dest))
    return args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _resolve(parser, args)
        return args.func(args)
    except CliError as exc:
        print(f"vslocreg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"vslocreg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
