"""Command-line front end.

Every subcommand writes one table, CSV or JSON, to a file or stdout.  Exit
status: 0 on success, 1 for invalid arguments or I/O failures, 2 when a
numerical result cannot be certified (truncation, grid, or bracket
failures).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bell import BellEvaluator, BellSettings, scan_alpha, scan_max_sigma
from .errors import ConvergenceError
from .fockspace import pair_coherent
from .homodyne import QuadratureGrid, bell_ratio_homodyne, sigma0_cutoff
from .lhv import lhv_suite, macroscopic_suite, small_noise_search

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
HELP_WIDTH = 100

ANGLE_FLAGS = ("theta", "phi", "theta2", "phi2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH)


def _alpha_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _alpha_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected START:STOP:COUNT")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if count < 1:
        raise argparse.ArgumentTypeError("COUNT must be >= 1")
    return [float(v) for v in np.linspace(start, stop, count)]


def _add_common(p: argparse.ArgumentParser, fmt: str):
    p.add_argument("--output", "-o", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"), default=fmt, help="output format")


def _add_state(p: argparse.ArgumentParser):
    p.add_argument("--r0", type=float, default=1.1, help="pair-coherent parameter r0 [dimensionless]")
    p.add_argument("--tail-tol", type=float, default=1e-12,
                   help="discarded pair-coherent weight bound [probability]")


def _add_angles(p: argparse.ArgumentParser):
    p.add_argument("--theta", type=float, default=0.0, help="site A angle theta [radians]")
    p.add_argument("--phi", type=float, default=-math.pi / 4, help="site B angle phi [radians]")
    p.add_argument("--theta2", type=float, default=math.pi / 2, help="site A angle theta' [radians]")
    p.add_argument("--phi2", type=float, default=-3 * math.pi / 4, help="site B angle phi' [radians]")


def _add_alphas(p: argparse.ArgumentParser, default: str):
    g = p.add_mutually_exclusive_group()
    # String default: argparse converts it with ``type`` and prints it verbatim.
    g.add_argument("--alphas", type=_alpha_list, default=default, metavar="A1,A2,...",
                   help="local-oscillator amplitudes alpha = beta, ascending [sqrt(photons)]")
    g.add_argument("--alpha-range", type=_alpha_range, dest="alphas", default=argparse.SUPPRESS,
                   metavar="START:STOP:COUNT", help="evenly spaced amplitudes instead of --alphas [sqrt(photons)]")


def _add_grid(p: argparse.ArgumentParser):
    p.add_argument("--half-width", type=float, default=12.0,
                   help="quadrature integration half-width [vacuum std units]")
    p.add_argument("--nodes", type=int, default=801, help="quadrature node budget per axis [count]")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="macrobell", formatter_class=_formatter,
                     description="Bell-Clauser-Horne tests with noisy photon-number-difference signs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("bell", help="single Bell ratio from the Fock-space model",
                       formatter_class=_formatter)
    _add_state(p)
    p.add_argument("--alpha", type=float, default=4.0, help="site A local-oscillator amplitude [sqrt(photons)]")
    p.add_argument("--beta", type=float, default=None,
                   help="site B local-oscillator amplitude, defaults to alpha [sqrt(photons)]")
    p.add_argument("--sigma", type=float, default=0.0, help="detector noise std [photon counts]")
    _add_angles(p)
    p.add_argument("--outcome-trunc", type=int, default=None,
                   help="max photons per detected mode, default ceil(a^2)+10ceil(a)+20 [photons]")
    _add_common(p, "json")

    p = sub.add_parser("scan-alpha", help="s versus alpha = beta at fixed noise (CSV alpha,s)",
                       formatter_class=_formatter)
    _add_state(p)
    _add_alphas(p, "1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--sigma", type=float, default=0.0, help="detector noise std [photon counts]")
    _add_angles(p)
    _add_common(p, "csv")

    p = sub.add_parser("scan-sigma-max", help="largest noise with s > 1 versus alpha (CSV alpha,sigma_max)",
                       formatter_class=_formatter)
    _add_state(p)
    _add_alphas(p, "4,6,8,10,12,14,16,18,20")
    p.add_argument("--tol", type=float, default=1e-3, help="bisection tolerance [photon counts]")
    p.add_argument("--sigma-hi", type=float, default=None,
                   help="upper bisection bracket, defaults to max(alpha, 1) [photon counts]")
    _add_angles(p)
    _add_common(p, "csv")

    p = sub.add_parser("homodyne", help="Bell ratio in the large-alpha quadrature limit",
                       formatter_class=_formatter)
    _add_state(p)
    p.add_argument("--sigma0", type=float, default=0.0, help="quadrature noise std [vacuum std units]")
    _add_angles(p)
    _add_grid(p)
    _add_common(p, "json")

    p = sub.add_parser("sigma0-cutoff", help="largest quadrature noise with s > 1",
                       formatter_class=_formatter)
    _add_state(p)
    p.add_argument("--tol", type=float, default=1e-4, help="bisection tolerance [vacuum std units]")
    _add_angles(p)
    _add_grid(p)
    _add_common(p, "json")

    p = sub.add_parser("lhv-suite", help="local and macroscopic-local model property suites",
                       formatter_class=_formatter)
    p.add_argument("--trials", type=int, default=1000, help="models per suite [count]")
    p.add_argument("--seed", type=int, default=0, help="first seed; trial t uses seed + t [integer]")
    p.add_argument("--m", type=int, default=5, dest="M", help="largest nonlocal shift M [photons]")
    p.add_argument("--sigma-over-m", type=float, default=100.0,
                   help="noise for the macroscopic suite as a multiple of M [ratio]")
    p.add_argument("--small-trials", type=int, default=200,
                   help="models in the sigma = M adversarial search [count]")
    _add_angles(p)
    _add_common(p, "json")
    return parser


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"command", "params"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(d["command"], dict(d["params"]))
        cfg.validate()
        return cfg

    def settings(self) -> BellSettings:
        p = self.params
        return BellSettings(p["theta"], p["theta2"], p["phi"], p["phi2"])

    def validate(self):
        allowed = _allowed_params(self.command)
        unknown = set(self.params) - allowed
        if unknown:
            raise UsageError(f"unknown parameters for {self.command}: {sorted(unknown)}")
        p = self.params
        for key in ("r0", "alpha", "beta", "sigma", "sigma0", "sigma_hi"):
            v = p.get(key)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise UsageError(f"--{key.replace('_', '-')} must be finite and >= 0, got {v!r}")
        for key in ANGLE_FLAGS:
            if key in p and not math.isfinite(p[key]):
                raise UsageError(f"--{key} must be finite")
        for key in ("tol", "half_width", "sigma_over_m"):
            if key in p and not (p[key] > 0 and math.isfinite(p[key])):
                raise UsageError(f"--{key.replace('_', '-')} must be > 0")
        if "tail_tol" in p and not (0 < p["tail_tol"] <= 1e-6):
            raise UsageError("--tail-tol must be in (0, 1e-6]")
        for key in ("trials", "small_trials", "nodes", "M"):
            if key in p and p[key] < 0:
                raise UsageError(f"--{key.lower().replace('_', '-')} must be >= 0")
        if "nodes" in p and p["nodes"] < 16:
            raise UsageError("--nodes must be >= 16")
        if "alphas" in p:
            a = p["alphas"]
            if any(not math.isfinite(v) or v < 0 for v in a):
                raise UsageError("--alphas must be finite and >= 0")
            if any(y < x for x, y in zip(a, a[1:])):
                raise UsageError("--alphas must be ascending")
        if p.get("outcome_trunc") is not None and p["outcome_trunc"] < 0:
            raise UsageError("--outcome-trunc must be >= 0")


_OUTPUT_KEYS = {"output", "format"}


def _allowed_params(command: str) -> set[str]:
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in sub.choices:
        raise UsageError(f"unknown command {command!r}")
    return {a.dest for a in sub.choices[command]._actions if a.dest != "help"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    params = {k: v for k, v in vars(ns).items() if k != "command"}
    cfg = RunConfig(ns.command, params)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- output


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_table(rows: Sequence[dict], fmt: str, meta: dict | None = None,
                 columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = list(dict.fromkeys(k for r in rows for k in r))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        doc = {"meta": _jsonable(meta or {}), "data": [_jsonable(dict(r)) for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


def write_table(rows: Sequence[dict], fmt: str, path: str = "-", meta: dict | None = None,
                columns: Sequence[str] | None = None) -> None:
    """Write ``rows`` as CSV (header + rows) or JSON (``meta`` and ``data``).

    Output is byte-stable for identical input.  ``path='-'`` writes to stdout.
    """
    text = render_table(rows, fmt, meta, columns)
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# -------------------------------------------------------------- commands


def _bell_row(res) -> dict:
    return {
        "p_pp_1": res.p_pp[0],
        "p_pp_2": res.p_pp[1],
        "p_pp_3": res.p_pp[2],
        "p_pp_4": res.p_pp[3],
        "p_a": res.p_a,
        "p_b": res.p_b,
        "s": res.s,
    }


def _cmd_bell(cfg: RunConfig):
    p = cfg.params
    ev = BellEvaluator(p["r0"], p["alpha"], p["beta"], tail_tol=p["tail_tol"], outcome_trunc=p["outcome_trunc"])
    res = ev.result(cfg.settings(), p["sigma"])
    row = {"alpha": ev.alpha, "beta": ev.beta, "sigma": p["sigma"], **_bell_row(res)}
    return [row], ev.truncations, None


def _cmd_scan_alpha(cfg: RunConfig):
    p = cfg.params
    pts = scan_alpha(p["r0"], p["sigma"], cfg.settings(), p["alphas"], tail_tol=p["tail_tol"])
    rows = [{"alpha": a, "s": s} for a, s in pts]
    return rows, {"n_pc": pair_coherent(p["r0"], p["tail_tol"]).cutoff, "outcome_trunc": "default"}, ["alpha", "s"]


def _cmd_scan_sigma_max(cfg: RunConfig):
    p = cfg.params
    settings = cfg.settings()
    bracket = None if p["sigma_hi"] is None else (0.0, p["sigma_hi"])
    pts = scan_max_sigma(p["r0"], settings, p["alphas"], tol=p["tol"], bracket=bracket, tail_tol=p["tail_tol"])
    rows = [{"alpha": a, "sigma_max": s} for a, s in pts]
    trunc = {"n_pc": pair_coherent(p["r0"], p["tail_tol"]).cutoff, "outcome_trunc": "default"}
    return rows, trunc, ["alpha", "sigma_max"]


def _grid(p) -> QuadratureGrid:
    return QuadratureGrid(p["half_width"], p["nodes"])


def _cmd_homodyne(cfg: RunConfig):
    p = cfg.params
    res = bell_ratio_homodyne(p["r0"], cfg.settings(), p["sigma0"], _grid(p), p["tail_tol"])
    row = {"sigma0": p["sigma0"], **_bell_row(res)}
    return [row], {"n_pc": pair_coherent(p["r0"], p["tail_tol"]).cutoff}, None


def _cmd_sigma0_cutoff(cfg: RunConfig):
    p = cfg.params
    val = sigma0_cutoff(p["r0"], cfg.settings(), p["tol"], grid=_grid(p))
    return [{"r0": p["r0"], "sigma0_max": val}], {"n_pc": pair_coherent(p["r0"], p["tail_tol"]).cutoff}, None


def _cmd_lhv_suite(cfg: RunConfig):
    p = cfg.params
    settings = cfg.settings()
    local = lhv_suite(p["trials"], p["seed"], settings=settings)
    macro = macroscopic_suite(p["trials"], p["seed"], p["M"], p["sigma_over_m"], settings=settings)
    small = small_noise_search(p["small_trials"], p["seed"], p["M"], settings=settings)
    rows = [
        {"suite": "local", **local},
        {"suite": "macroscopic", **macro},
        {"suite": "sigma-equals-M", **small},
    ]
    return rows, {}, None


COMMANDS = {
    "bell": _cmd_bell,
    "scan-alpha": _cmd_scan_alpha,
    "scan-sigma-max": _cmd_scan_sigma_max,
    "homodyne": _cmd_homodyne,
    "sigma0-cutoff": _cmd_sigma0_cutoff,
    "lhv-suite": _cmd_lhv_suite,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run one subcommand, write its table; returns the exit status."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("macrobell: error: a COMMAND is required (see --help)")
        cfg = config_from_args(ns)
        rows, trunc, columns = COMMANDS[cfg.command](cfg)
        meta = {"config": cfg.to_dict(), "truncations": trunc, "version": __version__}
        write_table(rows, cfg.params["format"], cfg.params["output"], meta, columns)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"macrobell: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        print(f"macrobell: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"macrobell: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    return run(argv)
