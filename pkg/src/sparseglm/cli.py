"""Command-line front end.

Subcommands
-----------
``gamma-c``          thresholds per activation and noise level, closed form vs numeric
``mmse-curve``       MMSE against gamma for several sparsities and the limit
``gen-error-curve``  the same for the optimal generalization error
``heatmap``          limiting MMSE on a (Delta, gamma) grid
``simulate``         GAMP runs against the state-evolution prediction

Every output starts with ``#``-prefixed lines holding the package version,
the fully resolved configuration as JSON and the column units (plus a
``status`` line marking the conjectured generalization error).  Passing that
output file back through ``--config`` reproduces it byte for byte.

Parameters resolve as command-line flags over ``--config`` file over
built-in defaults.  The config file is JSON, either a plain mapping of
parameter names (dashes or underscores) or a previous output file.

Exit status is 0 on success, 1 if any grid cell failed to evaluate (masked
critical cells do not count) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (gamma_c, gamma_c_closed_form, gamma_c_numeric, gen_error,
                      get_activation, make_channel)
from .errors import CriticalGammaError, ParameterError, SparseGLMError
from .gamp import gamp_run, generate_instance, sublinear_sparsity
from .potential import ALGORITHMIC_START, RegimeParams, fixed_point, solve_linear_regime
from .prior import named_prior
from .quadrature import DEFAULT_ORDER
from .sublinear import CONJECTURED, asymptotic_mmse, gen_error_sublinear, heatmap

EXIT_OK, EXIT_CELL_ERRORS, EXIT_USAGE = 0, 1, 2

_COMMON = {"order": DEFAULT_ORDER, "format": "csv"}

DEFAULTS = {
    "gamma-c": {"activation": ["linear", "sign", "relu"],
                "delta": [0.1, 0.25, 0.5, 1.0, 2.0]},
    "mmse-curve": {"prior": "bernoulli", "activation": "linear", "delta": 0.1,
                   "gamma_min": 0.2, "gamma_max": 2.0, "gamma_steps": 19,
                   "gamma_units": "gamma_c", "rho": [1e-2, 1e-4, "limit"]},
    "heatmap": {"prior": "linear-5", "activation": "linear", "delta_min": 0.0,
                "delta_max": 4.0, "delta_steps": 21, "gamma_min": 0.5,
                "gamma_max": 10.5, "gamma_steps": 21},
    "simulate": {"prior": "bernoulli", "activation": "linear", "delta": 0.1,
                 "n": 2000, "rho": 0.05, "rho_exponent": None, "gamma": 1.5,
                 "gamma_units": "gamma_c",
                 "seed": 0, "seeds": 10, "max_iter": 500, "damping": 0.5,
                 "tol": 1e-8},
}
DEFAULTS["gen-error-curve"] = dict(DEFAULTS["mmse-curve"])

# Keys that never enter the config echo.
_NOT_ECHOED = ("config", "out", "jobs")


class UsageError(Exception):
    """Invalid command line or configuration."""


@dataclass
class Table:
    """Output rows with column names and units."""

    columns: list
    units: list
    rows: list = field(default_factory=list)
    errors: int = 0
    #: Provenance of derived quantities, e.g. ``{"gen_error": "conjectured"}``.
    status: dict = field(default_factory=dict)


# --------------------------------------------------------------------- parsing

def _rho_value(text):
    if isinstance(text, str) and text.strip().lower() == "limit":
        return "limit"
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"rho must lie in (0, 1) or be 'limit', got {text!r}")
    return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config or a previous output file")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--order", type=int, help="quadrature order of channel integrals")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for independent cells (default 1)")


def _add_gamma_grid(p: argparse.ArgumentParser, units: bool = True) -> None:
    p.add_argument("--gamma-min", type=float)
    p.add_argument("--gamma-max", type=float)
    p.add_argument("--gamma-steps", type=int)
    if units:
        p.add_argument("--gamma-units", choices=("gamma_c", "raw"),
                       help="grid in multiples of gamma_c or raw gamma")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseglm",
        description="Information-theoretic limits of sparse generalized linear models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("gamma-c", argument_default=S,
                       help="all-or-nothing thresholds, closed form vs numeric")
    p.add_argument("--activation", action="append", help="repeatable")
    p.add_argument("--delta", action="append", type=float, help="repeatable")
    _add_common(p)

    for name, what in (("mmse-curve", "MMSE"), ("gen-error-curve", "generalization error")):
        p = sub.add_parser(name, argument_default=S, help=f"{what} against gamma")
        p.add_argument("--prior")
        p.add_argument("--activation")
        p.add_argument("--delta", type=float)
        _add_gamma_grid(p)
        p.add_argument("--rho", action="append", type=_rho_value,
                       help="sparsity or 'limit'; repeatable")
        _add_common(p)

    p = sub.add_parser("heatmap", argument_default=S,
                       help="limiting MMSE over noise level and raw gamma")
    p.add_argument("--prior")
    p.add_argument("--activation")
    p.add_argument("--delta-min", type=float)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--delta-steps", type=int)
    _add_gamma_grid(p, units=False)
    _add_common(p)

    p = sub.add_parser("simulate", argument_default=S,
                       help="GAMP against state evolution")
    p.add_argument("--prior")
    p.add_argument("--activation")
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--rho-exponent", type=float,
                   help="experimental: use rho = n^(-exponent) instead of --rho")
    p.add_argument("--gamma", type=float)
    p.add_argument("--gamma-units", choices=("gamma_c", "raw"))
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--damping", type=float)
    p.add_argument("--tol", type=float)
    _add_common(p)
    return parser


def load_config(path) -> dict:
    """Read a JSON config, or the config echo of a previous output file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if text.startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config: "):
                return json.loads(line[len("# config: "):])
        raise UsageError(f"{path} has no config line")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if isinstance(data, dict) and "columns" in data and "config" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults."""
    command = args.command
    cfg = dict(_COMMON)
    cfg.update(DEFAULTS[command])
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    if flags.get("config"):
        filed = {k.replace("-", "_"): v for k, v in load_config(flags["config"]).items()}
        other = filed.pop("command", command)
        if other != command:
            raise UsageError(f"config is for {other!r}, not {command!r}")
        unknown = set(filed) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(filed)
    for k, v in flags.items():
        if k not in _NOT_ECHOED:
            cfg[k] = v
    if command in ("mmse-curve", "gen-error-curve"):
        try:
            cfg["rho"] = [_rho_value(r) for r in cfg["rho"]]
        except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    _validate_names(cfg)
    echo = {"command": command}
    echo.update(sorted(cfg.items()))
    return echo


def _validate_names(cfg: dict) -> None:
    acts = cfg["activation"]
    for a in [acts] if isinstance(acts, str) else acts:
        try:
            get_activation(a)
        except SparseGLMError as exc:
            raise UsageError(str(exc)) from exc
    if "prior" in cfg:
        named_prior(cfg["prior"])


# ------------------------------------------------------------------ execution

def _map(fn, tasks, jobs: int):
    """Apply ``fn`` to every task, keeping task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _guard(fn, *args):
    """``("ok", value)``, ``("critical", plateaus)`` or ``("error", message)``."""
    try:
        return "ok", fn(*args)
    except CriticalGammaError as exc:
        return "critical", exc.candidates
    except (SparseGLMError, ArithmeticError, ValueError) as exc:
        return "error", f"{type(exc).__name__}: {exc}"


def _channel(cfg: dict, delta: float | None = None):
    d = cfg["delta"] if delta is None else delta
    return make_channel(cfg["activation"], d, cfg["order"])


def _gamma_grid(cfg: dict, gc: float | None):
    """Raw and normalized gamma values of the configured grid."""
    steps = int(cfg["gamma_steps"])
    if steps < 1:
        raise UsageError("gamma-steps must be positive")
    grid = np.linspace(cfg["gamma_min"], cfg["gamma_max"], steps)
    normalizable = gc is not None and math.isfinite(gc) and gc > 0
    if cfg.get("gamma_units", "raw") == "gamma_c":
        if not normalizable:
            raise UsageError(f"gamma_c = {gc!r}; use --gamma-units raw")
        return grid * gc, grid
    return grid, (grid / gc if normalizable else [None] * steps)


def _gamma_c_cell(task):
    act, delta, order = task
    ch = make_channel(act, delta, order)
    closed = _guard(gamma_c_closed_form, ch)
    numeric = _guard(gamma_c_numeric, ch)
    return closed, numeric


def cmd_gamma_c(cfg: dict, jobs: int = 1) -> Table:
    table = Table(["activation", "delta", "gamma_c_closed", "gamma_c_numeric", "rel_diff"],
                  ["", "variance", "1", "1", "1"])
    tasks = [(a, float(d), cfg["order"]) for a in cfg["activation"] for d in cfg["delta"]]
    for (act, delta, _), (closed, numeric) in zip(tasks, _map(_gamma_c_cell, tasks, jobs)):
        c = closed[1] if closed[0] == "ok" else None
        n = numeric[1] if numeric[0] == "ok" else None
        table.errors += (closed[0] != "ok") + (numeric[0] != "ok")
        for status, msg in (closed, numeric):
            if status != "ok":
                _warn(f"{act} delta={delta}: {msg}")
        rel = None
        if c is not None and n is not None:
            rel = 0.0 if c == n else abs(c - n) / abs(c)
        table.rows.append([act, delta, c, n, rel])
    return table


def _curve_cell(task):
    """Values of one (gamma, rho) cell: (selected, algorithmic)."""
    kind, prior_name, act, delta, order, rho, gamma = task
    p0 = named_prior(prior_name)
    ch = make_channel(act, delta, order)
    m2 = p0.second_moment
    if rho == "limit":
        fn = asymptotic_mmse if kind == "mmse" else gen_error_sublinear
        return _guard(fn, p0, ch, gamma)

    def solve():
        sol = solve_linear_regime(p0.sparse(rho), ch, RegimeParams(rho, gamma))
        if kind == "mmse":
            return sol.mmse, sol.mmse_algorithmic
        return gen_error(ch, sol.q_star, m2), gen_error(ch, sol.q_algorithmic, m2)

    return _guard(solve)


def cmd_curve(cfg: dict, kind: str, jobs: int = 1) -> Table:
    """``kind`` is ``"mmse"`` or ``"gen_error"``."""
    p0 = named_prior(cfg["prior"])
    ch = _channel(cfg)
    gc = _guard(gamma_c, ch, p0.second_moment)
    gammas, normalized = _gamma_grid(cfg, gc[1] if gc[0] == "ok" else None)
    unit = "second moment" if kind == "mmse" else "variance"
    columns, units = ["gamma", "gamma_over_gamma_c"], ["1", "gamma_c"]
    for rho in cfg["rho"]:
        if rho == "limit":
            columns += [f"{kind}_limit", "limit_critical"]
            units += [unit, "mask"]
        else:
            columns += [f"{kind}_rho={rho!r}", f"{kind}_algorithmic_rho={rho!r}"]
            units += [unit, unit]
    table = Table(columns, units)
    if kind == "gen_error":
        table.status["gen_error"] = CONJECTURED
    tasks = [(kind, cfg["prior"], cfg["activation"], float(cfg["delta"]), cfg["order"],
              rho, float(g)) for g in gammas for rho in cfg["rho"]]
    results = iter(_map(_curve_cell, tasks, jobs))
    for g, gn in zip(gammas, normalized):
        row = [float(g), gn]
        for rho in cfg["rho"]:
            status, value = next(results)
            if status == "ok":
                row += [value, 0] if rho == "limit" else list(value)
            elif status == "critical":
                row += [None, 1]
            else:
                _warn(f"gamma={g!r} rho={rho}: {value}")
                table.errors += 1
                row += [None, 0] if rho == "limit" else [None, None]
        table.rows.append(row)
    return table


def _heatmap_row(task):
    prior_name, act, delta, order, gammas = task
    p0 = named_prior(prior_name)

    def row():
        hm = heatmap(p0, act, [delta], gammas, order)
        gc = _guard(gamma_c, make_channel(act, delta, order), p0.second_moment)
        return hm.values[0], hm.critical[0], (gc[1] if gc[0] == "ok" else None)

    return _guard(row)


def cmd_heatmap(cfg: dict, jobs: int = 1) -> Table:
    steps = int(cfg["delta_steps"])
    if steps < 1:
        raise UsageError("delta-steps must be positive")
    deltas = np.linspace(cfg["delta_min"], cfg["delta_max"], steps)
    gammas, _ = _gamma_grid(cfg, None)
    table = Table(["delta", "gamma", "gamma_over_gamma_c", "mmse", "critical"],
                  ["variance", "1", "gamma_c", "second moment", "mask"])
    tasks = [(cfg["prior"], cfg["activation"], float(d), cfg["order"], list(gammas))
             for d in deltas]
    for d, (status, value) in zip(deltas, _map(_heatmap_row, tasks, jobs)):
        if status != "ok":
            _warn(f"delta={d!r}: {value}")
            table.errors += len(gammas)
            table.rows += [[float(d), float(g), None, None, 0] for g in gammas]
            continue
        vals, crit, gc = value
        ok_gc = gc is not None and math.isfinite(gc) and gc > 0
        for g, v, c in zip(gammas, vals, crit):
            table.rows.append([float(d), float(g), float(g) / gc if ok_gc else None,
                               None if c else float(v), int(c)])
    return table


def _simulate_seed(task):
    prior_name, act, delta, order, n, rho, gamma, seed, max_iter, damping, tol = task
    prior = named_prior(prior_name).sparse(rho)
    ch = make_channel(act, delta, order)

    def run():
        inst = generate_instance(prior, ch, n, RegimeParams(rho, gamma), seed)
        return gamp_run(inst, prior, ch, max_iter=max_iter, tol=tol, damping=damping)

    return _guard(run)


def cmd_simulate(cfg: dict, jobs: int = 1) -> Table:
    p0 = named_prior(cfg["prior"])
    rho = float(cfg["rho"])
    if cfg["rho_exponent"] is not None:
        rho = sublinear_sparsity(int(cfg["n"]), cfg["rho_exponent"])
    prior = p0.sparse(rho)
    ch = _channel(cfg)
    gamma = float(cfg["gamma"])
    if cfg["gamma_units"] == "gamma_c":
        gc = gamma_c(ch, p0.second_moment)
        if not (math.isfinite(gc) and gc > 0):
            raise UsageError(f"gamma_c = {gc!r}; use --gamma-units raw")
        gamma *= gc
    regime = RegimeParams(rho, gamma)
    se = p0.second_moment - fixed_point(prior, ch, regime, ALGORITHMIC_START).q_star
    seeds = range(int(cfg["seed"]), int(cfg["seed"]) + int(cfg["seeds"]))
    table = Table(["record", "seed", "iteration", "mse", "converged", "diverged",
                   "se_mse", "gap", "n_diverged"],
                  ["", "", "", "second moment", "flag", "flag", "second moment",
                   "second moment", "count"])
    if cfg["rho_exponent"] is not None:
        table.status["rho"] = f"experimental n^-exponent preset, rho = {rho!r}"
    tasks = [(cfg["prior"], cfg["activation"], float(cfg["delta"]), cfg["order"],
              int(cfg["n"]), rho, gamma, s, int(cfg["max_iter"]), float(cfg["damping"]),
              float(cfg["tol"])) for s in seeds]
    finals, n_div = [], 0
    for seed, (status, state) in zip(seeds, _map(_simulate_seed, tasks, jobs)):
        if status != "ok":
            _warn(f"seed={seed}: {state}")
            table.errors += 1
            continue
        for it, mse in enumerate(state.mse_trace):
            table.rows.append(["trace", seed, it, mse, None, None, None, None, None])
        table.rows.append(["final", seed, state.iteration, state.final_mse,
                           int(state.converged), int(state.diverged), None, None, None])
        if state.diverged:
            n_div += 1
        else:
            finals.append(state.final_mse)
    mean = float(np.mean(finals)) if finals else None
    if mean is None:
        table.errors += 1
    gap = None if mean is None else abs(mean - se)
    table.rows.append(["summary", None, None, mean, None, None, se, gap, n_div])
    return table


COMMANDS = {
    "gamma-c": cmd_gamma_c,
    "mmse-curve": lambda cfg, jobs=1: cmd_curve(cfg, "mmse", jobs),
    "gen-error-curve": lambda cfg, jobs=1: cmd_curve(cfg, "gen_error", jobs),
    "heatmap": cmd_heatmap,
    "simulate": cmd_simulate,
}


# --------------------------------------------------------------------- output

def _cell(v):
    """Canonical text of one value; ``None`` for missing entries."""
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return str(v)


def render(table: Table, cfg: dict, fmt: str) -> str:
    """Serialize ``table`` with the config echo in the header."""
    rows = [[_cell(v) for v in row] for row in table.rows]
    if fmt == "json":
        doc = {"version": __version__, "config": cfg, "columns": table.columns,
               "units": dict(zip(table.columns, table.units)), "rows": rows}
        if table.status:
            doc["status"] = table.status
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# sparseglm {__version__}\n")
    buf.write(f"# config: {json.dumps(cfg)}\n")
    buf.write(f"# units: {json.dumps(dict(zip(table.columns, table.units)))}\n")
    if table.status:
        buf.write(f"# status: {json.dumps(table.status)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                    for v in row])
    return buf.getvalue()


def _warn(msg: str) -> None:
    print(f"sparseglm: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    jobs = getattr(args, "jobs", 1)
    out = getattr(args, "out", None)
    try:
        cfg = resolve_config(args)
        table = COMMANDS[args.command](cfg, jobs)
    except (UsageError, ParameterError) as exc:
        _warn(str(exc))
        return EXIT_USAGE
    text = render(table, cfg, cfg["format"])
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return EXIT_CELL_ERRORS if table.errors else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
