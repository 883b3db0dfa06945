"""Command-line entry point: ``msnbargain <command> <scenario> ...``.

A scenario argument is a path to a ``.scn`` YAML file, or ``preset:<name>``
for one of the bundled files (``msnbargain presets`` lists them).
Log verbosity comes from ``--log-level`` or the ``MSNBARGAIN_LOG_LEVEL``
environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import ConstantChannel, RayleighChannel, run_adaptive, run_non_adaptive
from .config import ScenarioFile, load_scenario
from .exceptions import NoAgreementError, ScenarioFileError
from .experiment import (PLOT_KINDS, airtime_by_owner, emit_plotdata, fmt, result_columns, rows_to_csv,
                         run_experiment, timeline_columns, _static_rows, _timeline_delivered,
                         _timeline_rows)
from .oracle import GridSpec, fairness_probe, grid_search, kkt_residual, pareto_probe
from .solver import SolverOptions, run_algorithm1, select_head, solve_subproblem

log = logging.getLogger("msnbargain")

ENV_LOG_LEVEL = "MSNBARGAIN_LOG_LEVEL"


def preset_names() -> list:
    root = resources.files("msnbargain") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario(arg: str) -> ScenarioFile:
    if arg.startswith("preset:"):
        name = arg.split(":", 1)[1]
        ref = resources.files("msnbargain") / "presets" / f"{name}.scn"
        if not ref.is_file():
            raise ScenarioFileError(arg, [f"no preset named {name!r}; have {', '.join(preset_names())}"])
        with resources.as_file(ref) as path:
            return load_scenario(path)
    return load_scenario(arg)


def _options(args) -> SolverOptions:
    return SolverOptions(tolerance=args.tolerance) if args.tolerance else SolverOptions()


def _out_dir(args, sf: ScenarioFile, default: str) -> Path:
    return Path(args.out or sf.experiment.output_dir or default)


def _print_table(header, rows, stream=None):
    stream = stream or sys.stdout
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)), file=stream)
    for r in rows:
        print("  ".join(str(c).rjust(w) for c, w in zip(r, widths)), file=stream)


# -- commands -------------------------------------------------------------

def cmd_solve(args) -> int:
    sf = resolve_scenario(args.scenario)
    sc, opts = sf.scenario, _options(args)
    if args.algorithm1:
        joint = run_algorithm1(sc, opts)
        subs, head = list(joint.candidates), joint.head
        for m in joint.messages:
            log.info("node %d broadcasts product %s", m.sender + 1, m.weighted_product)
    else:
        heads = [args.head - 1] if args.head else range(sc.n_users)
        subs = [solve_subproblem(sc, h, opts) for h in heads]
        try:
            head = select_head(subs).head if not args.head else args.head - 1
        except NoAgreementError as exc:
            print(f"no agreement: {exc}", file=sys.stderr)
            head = None
    table = []
    for s in subs:
        mark = "*" if s.head == head else ""
        table.append([f"{s.head + 1}{mark}", s.status, fmt(s.weighted_product), fmt(s.plain_product),
                      " ".join(fmt(u) for u in s.utilities), " ".join(fmt(x) for x in s.x)])
    _print_table(["head", "status", "weighted", "plain", "utilities", "airtime"], table)
    if head is not None:
        print(f"selected head: user {head + 1}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = _static_rows("", sc, subs, head)
        (out / "results.csv").write_text(rows_to_csv(rows, result_columns(sc.n_users)))
    return 0 if head is not None else 1


def cmd_sweep(args) -> int:
    sf = resolve_scenario(args.scenario)
    if sf.experiment.variable is None:
        log.warning("scenario has no sweep; solving it once")
    out = _out_dir(args, sf, "results")
    summary = run_experiment(sf, out, _options(args), workers=args.workers)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wrote {out / 'results.csv'}")
    return 0


def cmd_adaptive(args) -> int:
    sf = resolve_scenario(args.scenario)
    sc, opts = sf.scenario, _options(args)
    snr = args.snr if args.snr is not None else (sf.experiment.channel.snr if sf.experiment.channel else None)
    channel = RayleighChannel(snr) if snr is not None else ConstantChannel()
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    rows, timeline, table = [], [], []
    for seed in seeds:
        runs = [("adaptive", run_adaptive(sc, args.slot, channel, seed, opts))]
        if snr is not None:
            runs.append(("non_adaptive", run_non_adaptive(sc, channel, seed, args.slot, opts)))
        for scheme, res in runs:
            total = sum((airtime_by_owner(sc, s.airtime) for s in res.slots), np.zeros(sc.n_users))
            rows.append([args.slot, scheme, seed, None, True, "timeline", res.weighted_product,
                         res.plain_product, _timeline_delivered(sc, res), *res.utilities, *total, *res.energy])
            timeline += _timeline_rows(args.slot, scheme, seed, sc, res)
            table.append([seed, scheme, " ".join(str(h + 1) if h is not None else "-" for h in res.heads),
                          fmt(res.plain_product), fmt(res.total_aod)])
    _print_table(["seed", "scheme", "heads per slot", "plain", "aod"], table)
    out = _out_dir(args, sf, "adaptive")
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows, result_columns(sc.n_users)))
    (out / "timeline.csv").write_text(rows_to_csv(timeline, timeline_columns(sc.n_users)))
    print(f"wrote {out / 'timeline.csv'}")
    return 0


def cmd_verify(args) -> int:
    """Oracle checks at every candidate head's solver optimum."""
    sf = resolve_scenario(args.scenario)
    sc, opts = sf.scenario, _options(args)
    table, ok = [], True
    for h in range(sc.n_users):
        sub = solve_subproblem(sc, h, opts)
        if not sub.feasible or np.any(sub.utilities <= 0):
            table.append([h + 1, sub.status, "-", "-", "-", "-"])
            continue
        kkt = kkt_residual(sc, h, sub.x)
        pf = fairness_probe(sc, sub, args.samples, seed=h)
        pareto = pareto_probe(sc, sub, args.samples, seed=h)
        grid_gap = "-"
        if len(sub.x) <= 4 and args.resolution > 0:
            g = grid_search(sc, h, GridSpec(args.resolution))
            grid_gap = fmt(sub.log_objective - g.objective)
            ok &= sub.log_objective >= g.objective - 1e-9
        passed = kkt <= 1e-6 and pf <= 1e-6 and pareto == 0
        ok &= passed
        table.append([h + 1, sub.status, fmt(kkt), fmt(pf), pareto, grid_gap])
    _print_table(["head", "status", "kkt_residual", "max_pf_change", "pareto_improving", "grid_gap"], table)
    print("all checks passed" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


def cmd_plotdata(args) -> int:
    path = emit_plotdata(args.results, args.kind, args.output)
    print(f"wrote {path}")
    return 0


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return 0


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msnbargain", description="Group-head selection and airtime "
                                "allocation by Nash bargaining.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--out", help="output directory (default: from the file, else ./results)")
    p.add_argument("--tolerance", type=float, default=None, help="solver duality-gap tolerance")
    p.add_argument("--log-level", default=None, help=f"logging level (or set {ENV_LOG_LEVEL})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one scenario and print every candidate head")
    s.add_argument("scenario")
    s.add_argument("--head", type=int, help="only solve for this head (1-based)")
    s.add_argument("--algorithm1", action="store_true", help="simulate the distributed protocol")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="run the file's experiment block")
    s.add_argument("scenario")
    s.add_argument("--workers", type=int, default=1, help="worker processes for sweep points")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("adaptive", help="slot-wise run, optionally under Rayleigh fading")
    s.add_argument("scenario")
    s.add_argument("--slot", type=float, required=True, help="slot size in seconds")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--seed-base", type=int, default=0)
    s.add_argument("--snr", type=float, default=None, help="Rayleigh SNR; omit for constant links")
    s.set_defaults(func=cmd_adaptive)

    s = sub.add_parser("verify", help="run the oracle checks at each head's optimum")
    s.add_argument("scenario")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--resolution", type=float, default=0.25, help="grid step in seconds (0 skips)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("plotdata", help="long-format series,x,y CSV from a results directory")
    s.add_argument("results", help="directory holding results.csv and summary.json")
    s.add_argument("--kind", required=True, choices=PLOT_KINDS)
    s.add_argument("--output", help="file to write (default: <results>/<kind>.csv)")
    s.set_defaults(func=cmd_plotdata)

    s = sub.add_parser("presets", help="list bundled scenario files")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or os.environ.get(ENV_LOG_LEVEL) or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, NoAgreementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
