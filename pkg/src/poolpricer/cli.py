"""Command line: ``poolpricer simulate|ablate|validate CONFIG``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All outputs are plain CSV/JSON written atomically; every CSV starts with a
``#`` comment line listing the resolved economic parameters and seeds.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .errors import InvalidInputError
from .simulation import (ABLATION_ROWS, HIST_EDGES, SCENARIO_LABELS, SCENARIOS, DayMetrics, HorizonResult,
                         Snapshot, atomic_write, run_ablation, run_horizon)

log = logging.getLogger("poolpricer")

ERROR_BINS = np.linspace(0.0, 1.0, 11)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(header: str, columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def metrics_csv(cfg: RunConfig, metrics: Sequence[DayMetrics]) -> str:
    cols = list(DayMetrics(day=0).row()) + ["profit_std"]
    return _csv(cfg.header(), cols, ([*m.row().values(), m.profit_std] for m in metrics))


def discount_hist_csv(cfg: RunConfig, metrics: Sequence[DayMetrics]) -> str:
    rows = []
    for m in metrics:
        for name, counts in (("shareability", m.hist_shareability), ("offered", m.hist_offered)):
            for b, c in enumerate(counts):
                rows.append((m.day, name, float(HIST_EDGES[b]), float(HIST_EDGES[b + 1]), c))
    return _csv(cfg.header(), ["day", "set", "discount_lo", "discount_hi", "count"], rows)


def class_error_csv(cfg: RunConfig, res: HorizonResult) -> str:
    """Travellers per 10% error bin and day, for everyone and for those
    offered at least one pooled ride."""
    rows = []
    for day, (err, offers) in enumerate(zip(res.class_error_by_day, res.offers_by_day)):
        for group, mask in (("all", np.ones(len(err), bool)), ("pooled", offers > 0)):
            counts, _ = np.histogram(np.clip(err[mask], 0, 1), bins=ERROR_BINS)
            rows.append((day, group, int(mask.sum()), *counts.tolist()))
    cols = ["day", "group", "travellers"] + [f"err_{10 * b}_{10 * (b + 1)}" for b in range(10)]
    return _csv(cfg.header(), cols, rows)


def ablation_csv(cfg: RunConfig, results: dict[str, DayMetrics]) -> str:
    names = list(results)
    rows = [(label, *[getattr(results[s], attr) for s in names]) for label, attr in ABLATION_ROWS]
    return _csv(cfg.header(), ["metric"] + [SCENARIO_LABELS[s] for s in names], rows)


def _load(path: str, overrides: dict) -> RunConfig:
    cfg = load_config(path)
    return cfg.with_overrides(**overrides) if overrides else cfg


def cmd_simulate(args) -> int:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.days is not None:
        over["days"] = args.days
    cfg = _load(args.config, over)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_horizon(cfg)
    if "csv" in cfg.formats:
        atomic_write(out / "metrics.csv", metrics_csv(cfg, res.metrics))
        atomic_write(out / "discount_hist.csv", discount_hist_csv(cfg, res.metrics))
        atomic_write(out / "class_error.csv", class_error_csv(cfg, res))
    if "json" in cfg.formats:
        atomic_write(out / "metrics.json",
                     json.dumps([m.row() | {"hist_shareability": m.hist_shareability,
                                            "hist_offered": m.hist_offered} for m in res.metrics],
                                sort_keys=True))
    Snapshot.from_horizon(res).save(out / "snapshot.json")
    log.info("wrote %d days to %s", len(res.metrics), out)
    return 0


def cmd_ablate(args) -> int:
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()] if args.scenarios else list(SCENARIOS)
    unknown = [s for s in names if s not in SCENARIOS]
    if unknown or not names:
        print(f"error: unknown scenario(s) {', '.join(unknown) or '(none given)'}; "
              f"choose from {', '.join(SCENARIOS)}", file=sys.stderr)
        return 2
    cfg = _load(args.config, {"seed": args.seed} if args.seed is not None else {})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results, horizon = run_ablation(cfg, names)
    atomic_write(out / "ablation.csv", ablation_csv(cfg, results))
    if horizon is not None:
        Snapshot.from_horizon(horizon).save(out / "snapshot.json")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    resolved = dict(cfg.raw)
    resolved["resolved"] = {"demand_seed": cfg.demand_seed, "optimistic_vot": cfg.optimistic_vot,
                            "demand_area": list(cfg.demand_area)}
    print(json.dumps(resolved, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poolpricer", description="Adaptive ride-pooling pricing simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the multi-day simulation")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--days", type=int)
    sim.add_argument("--out", default="results")
    sim.set_defaults(func=cmd_simulate)

    abl = sub.add_parser("ablate", help="compare pricing policies on shared ground truth")
    abl.add_argument("config")
    abl.add_argument("--scenarios", help="comma separated: " + ",".join(SCENARIOS))
    abl.add_argument("--seed", type=int)
    abl.add_argument("--out", default="results")
    abl.set_defaults(func=cmd_ablate)

    val = sub.add_parser("validate", help="check a config and print the resolved parameters")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level guard
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
