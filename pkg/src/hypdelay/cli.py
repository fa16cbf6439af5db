"""Command-line interface.

Subcommands::

    hypdelay check     --config run.json [--out DIR]
    hypdelay simulate  --config run.json [--out DIR]
    hypdelay spectrum  --config run.json [--out DIR]
    hypdelay sweep     --config run.json [--out DIR] --param measure.atoms[0].matrix[0][0] --values 0.8,1.0,1.3
    hypdelay verify    --config run.json [--out DIR]

Exit codes: 0 success (``check``: stable), 1 error, 2 unstable or failed
verification, 3 marginal or indeterminate.  ``HYPDELAY_THREADS`` sets the
worker count for ``sweep``.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import output
from .config import ConfigParseError, RunConfig, parse_config, parse_config_dict
from .measure import DomainError
from .simulate import ConfigError, simulate
from .spectral import BoundaryHitError, certify, locate_roots, upper_root_bound
from .verification import run_verification

log = logging.getLogger("hypdelay")

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE, EXIT_MARGINAL = 0, 1, 2, 3
_VERDICT_EXIT = {"stable": EXIT_OK, "unstable": EXIT_UNSTABLE, "marginal": EXIT_MARGINAL, "indeterminate": EXIT_MARGINAL}


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out if args.out is not None else cfg.output.dir)


def _root_search(cfg: RunConfig) -> dict:
    search = {}
    if cfg.spectral.imag_cap is not None:
        search["imag_cap"] = cfg.spectral.imag_cap
    if cfg.spectral.rect is not None:
        search["a"], search["b"] = cfg.spectral.rect[0], cfg.spectral.rect[1]
    return search


def cmd_check(cfg: RunConfig, out: Path) -> int:
    sys_, m = cfg.build_system(), cfg.build_measure()
    report = certify(sys_, m, tol=cfg.spectral.tol, with_root=True, search=_root_search(cfg))
    text = output.json_text(report.to_dict())
    sys.stdout.write(text)
    if "json" in cfg.output.formats:
        output.write(out, "report.json", text)
    return _VERDICT_EXIT[report.verdict]


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    traj = simulate(
        cfg.build_system(),
        cfg.build_measure(),
        cfg.build_initial_state(),
        cfg.build_initial_history(),
        cfg.sim_config(),
        exponent=cfg.sim.exponent,
    )
    output.write(out, "trajectory.csv", output.trajectory_csv(traj))
    for t, snap in traj.snapshots.items():
        output.write(out, output.snapshot_filename(t), output.snapshot_csv(snap))
    log.info("wrote %d steps to %s", traj.times.size, out)
    return EXIT_OK


def default_rect(cfg: RunConfig) -> tuple[float, float, float, float]:
    sys_, m = cfg.build_system(), cfg.build_measure()
    b = upper_root_bound(sys_, m) + 0.5
    y = cfg.spectral.imag_cap or math.pi / (sys_.min_tau + m.delay)
    return (b - 10.0, b, -y, y)


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    rect = cfg.spectral.rect or default_rect(cfg)
    roots = locate_roots(cfg.build_system(), cfg.build_measure(), rect)
    rows = [(r.value.real, r.value.imag, "argument+newton" if r.flag is None else "argument") for r in roots]
    text = output.csv_text(["re", "im", "method"], rows)
    sys.stdout.write(text)
    output.write(out, "roots.csv", text)
    return EXIT_OK


_PATH_TOKEN = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def parse_param_path(path: str) -> list:
    """``measure.atoms[0].matrix[0][0]`` (or ``measure.atoms.0.matrix.0.0``) to keys."""
    keys = []
    for name, idx in _PATH_TOKEN.findall(path):
        if idx:
            keys.append(int(idx))
        elif name.isdigit():
            keys.append(int(name))
        else:
            keys.append(name)
    if not keys:
        raise ValueError(f"empty parameter path {path!r}")
    return keys


def set_path(data: dict, keys: list, value) -> None:
    node = data
    for key in keys[:-1]:
        node = node[key]
    node[keys[-1]] = value


def parse_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def sweep_rows(raw: dict, params: list[tuple[str, list[float]]], threads: int = 1) -> tuple[list[str], list[list]]:
    """Certificate at each point of the (1-D or 2-D) parameter grid, in input order."""
    points: list[tuple[float, ...]] = [()]
    for _, values in params:
        points = [p + (v,) for p in points for v in values]
    if any(not values for _, values in params):
        points = []
    keys = [parse_param_path(p) for p, _ in params]

    def run(point):
        data = copy.deepcopy(raw)
        for k, v in zip(keys, point):
            set_path(data, k, v)
        cfg = parse_config_dict(data)
        rep = certify(cfg.build_system(), cfg.build_measure(), tol=cfg.spectral.tol)
        return [*point, rep.r_value, rep.cw_lower, rep.cw_upper, rep.verdict]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(run, points))
    header = [p for p, _ in params] + ["r", "lower", "upper", "verdict"]
    return header, rows


def cmd_sweep(raw: dict, cfg: RunConfig, out: Path, args) -> int:
    params = [(args.param, parse_values(args.values))]
    if args.param2:
        params.append((args.param2, parse_values(args.values2 or "")))
    threads = int(os.environ.get("HYPDELAY_THREADS", "1"))
    header, rows = sweep_rows(raw, params, threads)
    text = output.csv_text(header, rows)
    sys.stdout.write(text)
    output.write(out, "sweep.csv", text)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    result = run_verification(cfg)
    text = output.json_text(result)
    sys.stdout.write(text)
    output.write(out, "verify.json", text)
    for c in result["checks"]:
        log.info("%-20s %s", c["name"], c["status"])
    return EXIT_OK if result["passed"] else EXIT_UNSTABLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypdelay", description="Delayed boundary feedback for positive transport systems")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("check", "certify exponential stability"),
        ("simulate", "simulate and write trajectory CSVs"),
        ("spectrum", "locate characteristic roots"),
        ("sweep", "stability map over a parameter"),
        ("verify", "cross-check against the upwind oracle"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: output.dir in config)")
        if name == "sweep":
            p.add_argument("--param", required=True, help="JSON path of the swept value")
            p.add_argument("--values", required=True, help="comma-separated values (may be empty)")
            p.add_argument("--param2", default=None, help="second path for a 2-D grid")
            p.add_argument("--values2", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        out = _out_dir(args, cfg)
        if args.command == "check":
            return cmd_check(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(json.loads(text), cfg, out, args)
        return cmd_verify(cfg, out)
    except ConfigParseError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, DomainError, BoundaryHitError, OSError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
