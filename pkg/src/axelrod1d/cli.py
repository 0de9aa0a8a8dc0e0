"""Command line experiment runner.

Subcommands: ``simulate``, ``sweep``, ``raster``, ``couple``, ``audit``.
Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
Settings come from an optional flat TOML file (``--config``) overridden
by flags. The default output directory is taken from ``$AXELROD1D_OUT``.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .coupling import couple_run, rate_audit
from .engine import Fault, InterfaceEngine, geometric_grid
from .model import (
    ConfigurationError,
    Horizon,
    SystemParams,
    Topology,
    UsageError,
    monoculture,
)
from .randomness import parse_seed, replica_seed
from .stats import (
    ABSORPTION_HEADER,
    DENSITY_HEADER,
    map_replicas,
    mean_se,
    simulate_replica,
    snapshot_densities,
)

log = logging.getLogger("axelrod1d")

OUT_ENV = "AXELROD1D_OUT"

DEFAULTS = {
    "features": 3,
    "states": 2,
    "size": 64,
    "topology": "torus",
    "seed": 1,
    "replicas": 1,
    "t_max": None,
    "events_max": None,
    "sample_grid": None,
    "out": None,
    "workers": 1,
    "level": 1,
}


def fmt(x) -> str:
    """17 significant digits for reals, plain text otherwise."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def parse_grid(grid, t_max: float | None) -> list[float]:
    """``geom:T0:FACTOR`` (up to t_max), or an explicit comma list of times."""
    if grid is None:
        if t_max is None:
            return []
        return geometric_grid(1.0, t_max, 2.0)
    if isinstance(grid, (list, tuple)):
        times = [float(t) for t in grid]
    elif str(grid).startswith("geom:"):
        parts = str(grid).split(":")
        if t_max is None:
            raise UsageError("a geometric sample grid needs --t-max")
        t0 = float(parts[1])
        factor = float(parts[2]) if len(parts) > 2 else 2.0
        times = geometric_grid(t0, t_max, factor)
    else:
        times = [float(t) for t in str(grid).split(",") if t.strip()]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise UsageError("sample times must be strictly increasing")
    return times


def _int_list(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)
        for k, v in data.items():
            k = k.replace("-", "_")
            if isinstance(v, dict):
                raise UsageError(f"config must be flat; found table {k!r}")
            cfg[k] = v
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config", "func"):
            cfg[k] = v
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV, ".")
    cfg["seed"] = parse_seed(cfg["seed"])
    if int(cfg["replicas"]) < 1:
        raise UsageError("replicas must be >= 1")
    return cfg


def params_from(cfg: dict, features=None, states=None, size=None) -> SystemParams:
    horizon = Horizon(
        t_max=None if cfg.get("t_max") is None else float(cfg["t_max"]),
        events_max=None if cfg.get("events_max") is None else int(cfg["events_max"]),
    )
    try:
        topology = Topology(cfg["topology"])
    except ValueError as exc:
        raise UsageError(f"unknown topology {cfg['topology']!r}") from exc
    return SystemParams(
        features=int(features if features is not None else _int_list(cfg["features"])[0]),
        states=int(states if states is not None else _int_list(cfg["states"])[0]),
        size=int(size if size is not None else _int_list(cfg["size"])[0]),
        topology=topology,
        seed=cfg["seed"],
        horizon=horizon,
    )


class AtomicOutputs:
    """Collects output files and publishes them only if every step succeeds."""

    def __init__(self, out_dir: str | Path):
        self.out = Path(out_dir)
        self.pending: list[tuple[Path, Path]] = []

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        return self

    def write(self, name: str, text: str) -> Path:
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        self.pending.append((Path(tmp), self.out / name))
        return self.out / name

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, final in self.pending:
                os.replace(tmp, final)
        else:
            for tmp, _ in self.pending:
                tmp.unlink(missing_ok=True)
        return False


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


# -- simulate -----------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    params = params_from(cfg)
    times = parse_grid(cfg.get("sample_grid"), params.horizon.t_max)
    initial = monoculture(params) if cfg.get("monoculture") else None
    jobs = [(params, r, params.horizon, times, initial) for r in range(int(cfg["replicas"]))]
    results = map_replicas(simulate_replica, jobs, int(cfg["workers"]))
    records = [rec for rec, _ in results]
    density_rows = []
    if times:
        per = [[snapshot_densities(s, params.features) for s in snaps] for _, snaps in results]
        # replicas censored before the end of the grid contribute only to earlier times
        for k, t in enumerate(times):
            vals = [p[k] for p in per if len(p) > k]
            if not vals:
                continue
            cols = list(zip(*vals))
            m = [mean_se(c) for c in cols]
            density_rows.append([t, m[0][0], m[0][1], m[1][0], m[1][1], m[2][0], m[2][1],
                                 m[3][0], m[4][0]])
    with AtomicOutputs(cfg["out"]) as out:
        out.write("absorption.csv", csv_text(ABSORPTION_HEADER, (r.csv_row() for r in records)))
        out.write("density.csv", csv_text(DENSITY_HEADER, density_rows))
        if cfg.get("snapshots"):
            lines = [json.dumps({"replica": r, **s.as_dict()}, sort_keys=True)
                     for r, (_, snaps) in enumerate(results) for s in snaps]
            out.write("snapshots.jsonl", "".join(line + "\n" for line in lines))
    ms = mean_se([r.n_c for r in records])
    log.info("simulate: %d replicas, mean n_c %.6g (se %.3g)", len(records), *ms)
    return 0


# -- sweep --------------------------------------------------------------------

PHASE_HEADER = ["F", "q", "N", "replicas", "mean_s_max", "se_s_max", "mean_s_max_over_N",
                "se_s_max_over_N", "mean_n_c_over_N", "se_n_c_over_N", "censored", "status"]


def sweep_cell(cfg: dict, F: int, q: int, N: int) -> list:
    params = params_from(cfg, F, q, N)
    jobs = [(params, r, params.horizon) for r in range(int(cfg["replicas"]))]
    recs = [rec for rec, _ in map_replicas(simulate_replica, jobs, int(cfg["workers"]))]
    sm = mean_se([r.s_max for r in recs])
    smn = mean_se([r.s_max / N for r in recs])
    ncn = mean_se([r.n_c / N for r in recs])
    return [F, q, N, len(recs), sm[0], sm[1], smn[0], smn[1], ncn[0], ncn[1],
            sum(r.censored for r in recs), "ok"]


def sweep_cells(cfg: dict) -> list[tuple[int, int, int]]:
    sizes = _int_list(cfg["size"])
    if cfg.get("pairs"):
        pairs = []
        for item in str(cfg["pairs"]).split(","):
            f, q = item.split(":")
            pairs.append((int(f), int(q)))
    else:
        pairs = list(itertools.product(_int_list(cfg["features"]), _int_list(cfg["states"])))
    if not pairs or not sizes:
        raise UsageError("sweep grid is empty")
    return [(f, q, n) for f, q in pairs for n in sizes]


def cmd_sweep(cfg: dict) -> int:
    rows = []
    for F, q, N in sweep_cells(cfg):
        try:
            rows.append(sweep_cell(cfg, F, q, N))
            log.info("sweep cell F=%d q=%d N=%d done", F, q, N)
        except (ConfigurationError, UsageError) as exc:
            log.error("sweep cell F=%d q=%d N=%d failed: %s", F, q, N, exc)
            rows.append([F, q, N, 0] + [math.nan] * 6 + [0, f"error: {exc}"])
    with AtomicOutputs(cfg["out"]) as out:
        out.write("phase.csv", csv_text(PHASE_HEADER, rows))
    return 0


# -- raster -------------------------------------------------------------------


def pgm_text(rows: Sequence[Sequence[int]], maxval: int, comments: Sequence[str]) -> str:
    height = len(rows)
    width = len(rows[0]) if rows else 0
    lines = ["P2"] + [f"# {c}" for c in comments] + [f"{width} {height}", str(maxval)]
    lines += [" ".join(map(str, r)) for r in rows]
    return "\n".join(lines) + "\n"


def raster_columns(params: SystemParams, bins: int, t_max: float, level: int,
                   monoculture_start: bool = False) -> tuple[list[list[int]], list[list[int]]]:
    """Per-bin columns of zeta and of one level's occupation, sampled at bin ends."""
    if params.states != 2:
        raise UsageError("raster requires states == 2")
    if not 1 <= level <= params.features:
        raise UsageError(f"level {level} out of range 1..{params.features}")
    initial = monoculture(params) if monoculture_start else None
    engine = InterfaceEngine(params, initial)
    bit = 1 << (level - 1)
    zeta_cols, level_cols = [], []

    def grab(eng, _t):
        zeta_cols.append(list(eng.zeta))
        level_cols.append([1 if m & bit else 0 for m in eng.masks])

    ends = [t_max * (k + 1) / bins for k in range(bins)]
    engine.run(Horizon(t_max=t_max, until_absorbed=True), sample_times=ends, on_sample=grab)
    return zeta_cols, level_cols


def cmd_raster(cfg: dict) -> int:
    params = params_from(cfg)
    if params.states != 2:
        raise UsageError("raster requires --states 2")
    if params.horizon.t_max is None:
        raise UsageError("raster requires --t-max")
    bins = int(cfg.get("bins") or 600)
    level = int(cfg["level"])
    zeta_cols, level_cols = raster_columns(params, bins, params.horizon.t_max, level,
                                           bool(cfg.get("monoculture")))
    comments = [f"F={params.features} q={params.states} N={params.size} "
                f"topology={params.topology.value} seed={params.seed} "
                f"t_max={fmt(params.horizon.t_max)} bins={bins}"]
    # transpose: rows are edges, columns are time bins
    z_rows = [list(r) for r in zip(*zeta_cols)]
    l_rows = [list(r) for r in zip(*level_cols)]
    with AtomicOutputs(cfg["out"]) as out:
        out.write("raster_total.pgm", pgm_text(z_rows, params.features, comments + ["channel=total"]))
        out.write(f"raster_level{level}.pgm",
                  pgm_text(l_rows, params.features, comments + [f"channel=level {level}"]))
    return 0


# -- couple / audit -----------------------------------------------------------


def cmd_couple(cfg: dict) -> int:
    base = params_from(cfg)
    if base.states != 2:
        raise UsageError("couple requires --states 2")
    if base.horizon.t_max is None and base.horizon.events_max is None:
        base = SystemParams(base.features, 2, base.size, base.topology, base.seed,
                            Horizon(events_max=10_000))
    fault = cfg.get("fault")
    reports = []
    for r in range(int(cfg["replicas"])):
        p = SystemParams(base.features, 2, base.size, base.topology,
                         replica_seed(base.seed, r), base.horizon)
        reports.append(couple_run(p, fault=fault).to_dict())
    passed = all(rep["passed"] for rep in reports)
    text = json.dumps({"passed": passed, "reports": reports}, indent=2)
    print(text)
    if cfg.get("report"):
        with AtomicOutputs(cfg["out"]) as out:
            out.write("couple.json", text + "\n")
    return 0 if passed else 1


def cmd_audit(cfg: dict) -> int:
    params = params_from(cfg)
    if params.states != 2:
        raise UsageError("audit requires --states 2")
    trials = int(cfg.get("trials") or 10_000)
    table = rate_audit(params, trials)
    rows = [{"j": r.occupancy, "trials": r.trials, "accepted": r.accepted,
             "empirical": r.empirical, "expected": r.expected, "ci_low": r.low,
             "ci_high": r.high, "status": r.status} for r in table.rows]
    print(json.dumps({"features": table.features, "passed": table.passed, "rows": rows}, indent=2))
    return 0 if table.passed else 1


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file with default settings")
    common.add_argument("--features", help="feature count F (comma list for sweep)")
    common.add_argument("--states", help="states per feature q (comma list for sweep)")
    common.add_argument("--size", help="number of vertices N (comma list for sweep)")
    common.add_argument("--topology", choices=[t.value for t in Topology])
    common.add_argument("--seed", help="master seed, decimal or 0x-hex")
    common.add_argument("--replicas", type=int)
    common.add_argument("--t-max", dest="t_max", type=float)
    common.add_argument("--events-max", dest="events_max", type=int)
    common.add_argument("--sample-grid", dest="sample_grid",
                        help="geom:T0:FACTOR or comma-separated times")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--workers", type=int)
    common.add_argument("--level", type=int, help="level shown in the single-level raster")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="axelrod1d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="absorption and density CSVs")
    p.add_argument("--monoculture", action="store_true", default=None)
    p.add_argument("--snapshots", action="store_true", default=None,
                   help="also write per-replica snapshots as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="phase table over (F, q, N)")
    p.add_argument("--pairs", help="explicit F:q pairs, e.g. 3:2,2:3")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("raster", parents=[common], help="space-time PGM rasters")
    p.add_argument("--bins", type=int)
    p.add_argument("--monoculture", action="store_true", default=None)
    p.set_defaults(func=cmd_raster)

    p = sub.add_parser("couple", parents=[common], help="vertex/interface coupling check")
    p.add_argument("--fault", choices=[f.value for f in Fault])
    p.add_argument("--report", action="store_true", default=None, help="also write couple.json")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("audit", parents=[common], help="empirical jump-rate audit")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except (UsageError, ConfigurationError, ValueError, OSError) as exc:
        print(f"axelrod1d {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
