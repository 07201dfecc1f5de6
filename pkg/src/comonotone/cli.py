"""
Batch runner: sweep ``n`` for one corpus function and write one row per
``n`` plus a log-log rate summary.

Output schema (JSON keys and CSV columns) is stable; see the README.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import get_entry
from .operators import StageError, assemble_tau, resolve_constants, resolve_strict
from .partition import GridTooCoarse, build_partition
from .trigpoly import BreakpointSet
from .verify import fit_rate

__all__ = ["RunConfig", "ConfigError", "run", "format_output", "main", "COLUMNS", "FIT_COLUMNS"]

log = logging.getLogger("comonotone")

COLUMNS = ("n", "degree", "sup_error", "margin", "mode", "wall_ms")
EXTRA_COLUMNS = ("status", "stage")
FIT_COLUMNS = ("slope", "intercept", "r_squared")
MARGIN_TOL = 1e-9
CURVE_POINTS = 2048


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """
    One batch run.

    ``record_timings=False`` writes ``wall_ms = 0`` and drops stage timings so
    that reruns are byte-identical.
    """

    function_id: str = "neg_sin"
    breakpoints: list | None = None
    r: int = 2
    n_list: list = field(default_factory=lambda: [32, 64, 128, 256])
    mode: str = "practical"
    grid_density: int = 4096
    overrides: dict = field(default_factory=dict)
    output_path: str | None = None
    output_format: str = "json"
    dump_partition: bool = False
    record_timings: bool = True

    def validate(self):
        if not self.n_list:
            raise ConfigError("n_list empty")
        ns = [int(v) for v in self.n_list]
        if any(v < 1 for v in ns):
            raise ConfigError("n values must be positive")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_list must be strictly increasing")
        self.n_list = ns
        if int(self.r) < 2:
            raise ConfigError("r must be at least 2")
        self.r = int(self.r)
        if self.mode not in ("practical", "strict"):
            raise ConfigError(f"mode must be 'practical' or 'strict', got {self.mode!r}")
        if self.output_format not in ("json", "csv"):
            raise ConfigError(f"format must be 'json' or 'csv', got {self.output_format!r}")
        if int(self.grid_density) < 8:
            raise ConfigError("grid_density must be at least 8")
        self.grid_density = int(self.grid_density)
        if self.breakpoints is not None:
            pts = [float(v) for v in self.breakpoints]
            if len(pts) == 0 or len(pts) % 2:
                raise ConfigError("breakpoint count must be positive and even")
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise ConfigError("breakpoints must be sorted increasing")
            if pts[0] < -np.pi or pts[-1] >= np.pi:
                raise ConfigError("breakpoints must lie in [-pi, pi)")
            self.breakpoints = pts
        try:
            get_entry(self.function_id)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        return self


@dataclass
class RunOutput:
    config: RunConfig
    rows: list
    fit: dict | None
    curves: dict
    partitions: dict
    ledgers: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(r["status"] == "ok" for r in self.rows)


def _row_status(res):
    return "ok" if res.comonotonicity_margin >= -MARGIN_TOL else "failed"


def _ledger(entry, Y, cfg, n):
    if cfg.mode == "strict":
        return resolve_strict(entry.f, entry.fprime, Y, cfg.r, n, cfg.overrides)
    return resolve_constants(Y.s, cfg.r, mode="practical", overrides=cfg.overrides)


def run(config):
    """
    Execute the sweep and return rows, the rate fit and plot series.

    Pipeline failures become rows with ``status = "failed"`` and the name of
    the stage that raised; they do not abort the sweep.
    """
    cfg = config.validate()
    entry = get_entry(cfg.function_id)
    Y = BreakpointSet(cfg.breakpoints) if cfg.breakpoints is not None else entry.Y
    if cfg.breakpoints is not None:
        entry = entry.with_breakpoints(cfg.breakpoints)
    rows, curves, partitions, ledgers = [], {}, {}, {}
    x = -np.pi + 2.0 * np.pi * np.arange(CURVE_POINTS) / CURVE_POINTS
    for n in cfg.n_list:
        log.info("n = %d", n)
        try:
            led = _ledger(entry, Y, cfg, n)
            ledgers[n] = led.snapshot()
            res = assemble_tau(entry.f, entry.fprime, Y, cfg.r, n, led, grid_density=cfg.grid_density)
        except StageError as exc:
            log.warning("n = %d failed in stage %s: %s", n, exc.stage, exc.cause)
            rows.append(
                {
                    "n": n,
                    "degree": None,
                    "sup_error": None,
                    "margin": None,
                    "mode": cfg.mode,
                    "wall_ms": 0.0,
                    "status": "failed",
                    "stage": exc.stage,
                    "timings_ms": {},
                }
            )
            continue
        row = res.row()
        row["status"] = _row_status(res)
        row["stage"] = "fallback" if res.fallback else ""
        row["timings_ms"] = {k: 1000.0 * v for k, v in sorted(res.timings.items())}
        if not cfg.record_timings:
            row["wall_ms"] = 0.0
            row["timings_ms"] = {}
        rows.append(row)
        ledgers[n] = res.ledger
        curves[n] = np.column_stack([x, res.tau(x), np.asarray(entry.f(x), dtype=float)])
        if cfg.dump_partition:
            try:
                partitions[n] = build_partition(entry.fprime, cfg.r, n, Y).to_dict()
            except GridTooCoarse as exc:
                partitions[n] = {"error": str(exc)}
    rows.sort(key=lambda r: r["n"])
    good = [r for r in rows if r["sup_error"] is not None and r["sup_error"] > 0]
    fit = None
    if len(good) >= 3:
        rf = fit_rate([r["n"] for r in good], [r["sup_error"] for r in good])
        fit = {"slope": rf.slope, "intercept": rf.intercept, "r_squared": rf.r_squared}
    return RunOutput(cfg, rows, fit, curves, partitions, ledgers)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_output(out):
    """Serialize a ``RunOutput`` to text in the configured format."""
    cfg = out.config
    if cfg.output_format == "json":
        doc = {
            "config": {k: v for k, v in asdict(cfg).items() if k not in ("output_path",)},
            "columns": list(COLUMNS),
            "rows": out.rows,
            "fit": out.fit,
            "ledgers": {str(n): out.ledgers[n] for n in sorted(out.ledgers)},
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = COLUMNS + EXTRA_COLUMNS + FIT_COLUMNS
    w.writerow(header)
    for r in out.rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS + EXTRA_COLUMNS] + [""] * len(FIT_COLUMNS))
    if out.fit is not None:
        w.writerow([""] * (len(COLUMNS) - 2) + [cfg.mode, ""] + ["summary", ""] + [_fmt(out.fit[c]) for c in FIT_COLUMNS])
    return buf.getvalue()


def write_outputs(out):
    """Write the main file and the plot series next to it; return written paths."""
    cfg = out.config
    text = format_output(out)
    if cfg.output_path is None:
        sys.stdout.write(text)
        return []
    path = Path(cfg.output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written = [path]
    stem = path.with_suffix("")
    rate = stem.parent / f"{stem.name}.rate.csv"
    with rate.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "sup_error"])
        for r in out.rows:
            if r["sup_error"] is not None:
                w.writerow([r["n"], repr(r["sup_error"])])
    written.append(rate)
    for n, arr in sorted(out.curves.items()):
        p = stem.parent / f"{stem.name}.curve_n{n}.csv"
        np.savetxt(p, arr, delimiter=",", header="x,tau,f", comments="", fmt="%.17g")
        written.append(p)
    if out.partitions:
        p = stem.parent / f"{stem.name}.partition.json"
        p.write_text(json.dumps({str(k): v for k, v in sorted(out.partitions.items())}, indent=2) + "\n")
        written.append(p)
    return written


def _comma_list(conv):
    def parse(text):
        return [conv(v) for v in text.split(",") if v.strip()]

    return parse


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = float(value)
    return out


def build_parser():
    p = argparse.ArgumentParser(
        prog="comonotone",
        description="Sweep n for one corpus function and report error, margin and the fitted rate.",
    )
    p.add_argument("--config", help="JSON file with RunConfig fields; flags given here win")
    p.add_argument("--function", dest="function_id", help="corpus id (const, neg_sin, neg_sin_warped, two_pair)")
    p.add_argument("--breakpoints", type=_comma_list(float), help="comma list overriding the corpus breakpoints")
    p.add_argument("--r", type=int, help="smoothness order, at least 2")
    p.add_argument("--n", dest="n_list", type=_comma_list(int), help="comma list, strictly increasing")
    p.add_argument("--mode", choices=("practical", "strict"))
    p.add_argument("--grid-density", dest="grid_density", type=int, help="measurement samples per unit of n")
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", help="ledger override")
    p.add_argument("--out", dest="output_path", help="output file; plot series are written next to it")
    p.add_argument("--format", dest="output_format", choices=("json", "csv"))
    p.add_argument(
        "--dump-partition", dest="dump_partition", action="store_true", default=None, help="also write <stem>.partition.json"
    )
    p.add_argument(
        "--no-timings",
        dest="record_timings",
        action="store_false",
        default=None,
        help="write wall_ms = 0 so reruns are byte-identical",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
        unknown = set(base) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    flags = {
        k: getattr(args, k)
        for k in (
            "function_id",
            "breakpoints",
            "r",
            "n_list",
            "mode",
            "grid_density",
            "output_path",
            "output_format",
            "dump_partition",
            "record_timings",
        )
        if getattr(args, k) is not None
    }
    if args.overrides:
        merged = dict(base.get("overrides", {}))
        merged.update(_parse_set(args.overrides))
        flags["overrides"] = merged
    base.update(flags)
    return RunConfig(**base)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        out = run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_outputs(out)
    return 0 if out.all_passed else 2


if __name__ == "__main__":
    sys.exit(main())
