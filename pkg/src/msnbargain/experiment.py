"""Parameter sweeps over scenario files and their CSV/JSON output.

``results.csv`` has one row per (sweep value, candidate head) for static
sweeps, or one row per (slot size, scheme, seed) for slot-size sweeps.
Numbers are printed with 6 significant digits and user columns are
1-based, so the same file and seed always give byte-identical output.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .adaptive import ConstantChannel, run_adaptive, run_non_adaptive
from .config import ExperimentSpec, ScenarioFile, parse_power
from .exceptions import NoAgreementError
from .model import Scenario
from .solver import SolverOptions, select_head, solve_subproblem

log = logging.getLogger(__name__)

OWN_AIRTIME_TOL = 1e-6


def result_columns(n_users: int) -> list:
    cols = ["sweep_value", "scheme", "seed", "candidate_head", "selected", "status",
            "weighted_product", "plain_product", "delivered_mb"]
    for name in ("utility", "airtime", "energy"):
        cols += [f"{name}_{i + 1}" for i in range(n_users)]
    return cols


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or isinstance(v, np.floating):
        v = float(v)
        if v == 0:
            return "0"
        return f"{v:.6g}"
    return str(v)


# -- applying a sweep value ------------------------------------------------

def apply_sweep(scenario: Scenario, spec: ExperimentSpec, value) -> Scenario:
    """Scenario variant for one sweep value (slot sizes leave it unchanged)."""
    var = spec.variable
    if var is None or var == "slot_size":
        return scenario
    if var == "budget":
        users = list(scenario.users)
        users[spec.user] = replace(users[spec.user], energy_budget=float(parse_power(value)))
        return replace(scenario, users=tuple(users))
    if var == "unit_reward":
        return replace(scenario, unit_reward=float(parse_power(value)))
    if var == "bargaining_power":
        a = parse_power(value)
        n = scenario.n_users
        rest = (1.0 - a) / (n - 1)
        alpha = tuple(a if i == spec.user else rest for i in range(n))
        return replace(scenario, bargaining_power=alpha)
    if var == "data_load":
        z = float(parse_power(value))
        items = tuple(replace(it, size=z) if it.owner == spec.user else it for it in scenario.items)
        return replace(scenario, items=items)
    if var == "preference_case":
        drops = spec.cases[str(value)]
        items = []
        for it in scenario.items:
            gone = set(drops.get(it.name, ()))
            items.append(replace(it, interested=frozenset(it.interested - gone)))
        return replace(scenario, items=tuple(items))
    raise ValueError(f"unknown sweep variable {var!r}")


def delivered(plan, x) -> float:
    """Interested-user MB delivered by airtime ``x`` (one entry per variable)."""
    maps_vars = [ip for ip in plan.items if ip.transmission_count > 0]
    return float(sum(len(ip.interested) * xv / ip.time_weight for ip, xv in zip(maps_vars, x)))


def airtime_by_owner(scenario: Scenario, per_item) -> np.ndarray:
    out = np.zeros(scenario.n_users)
    for it, x in zip(scenario.items, per_item):
        out[it.owner] += x
    return out


# -- static sweeps ---------------------------------------------------------

def _static_point(args):
    scenario, options = args
    subs = [solve_subproblem(scenario, h, options) for h in range(scenario.n_users)]
    try:
        head = select_head(subs).head
    except NoAgreementError:
        head = None
    return subs, head


def _static_rows(value, scenario, subs, head):
    rows = []
    for sub in subs:
        per_item = np.zeros(len(scenario.items))
        per_item[list(sub.plan.variables)] = sub.x
        rows.append([value, "static", None, sub.head + 1, sub.head == head, sub.status,
                     sub.weighted_product, sub.plain_product, delivered(sub.plan, sub.x),
                     *sub.utilities, *airtime_by_owner(scenario, per_item), *sub.energy])
    return rows


def _run_pool(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_sweep(sf: ScenarioFile, options: Optional[SolverOptions] = None, workers: int = 1):
    """Rows, summary and timeline rows for the file's experiment."""
    options = options or SolverOptions()
    spec, base = sf.experiment, sf.scenario
    if spec.variable == "slot_size":
        return _run_slot_sweep(sf, options, workers)
    values = list(spec.values) if spec.variable else [""]
    scenarios = [apply_sweep(base, spec, v) for v in values]
    results = _run_pool(_static_point, [(s, options) for s in scenarios], workers)
    rows, heads, own = [], {}, {}
    for v, sc, (subs, head) in zip(values, scenarios, results):
        rows += _static_rows(v, sc, subs, head)
        heads[fmt(v)] = None if head is None else head + 1
        if head is not None:
            per_item = np.zeros(len(sc.items))
            per_item[list(subs[head].plan.variables)] = subs[head].x
            own[fmt(v)] = float(airtime_by_owner(sc, per_item)[head])
    summary = {"sweep_variable": spec.variable, "values": [fmt(v) for v in values],
               "selected_heads": heads}
    if spec.variable == "unit_reward":
        summary["others_first_reward"] = others_first_point(values, [own.get(fmt(v)) for v in values])
    return rows, summary, []


def others_first_point(values, head_own_airtime) -> Optional[float]:
    """Smallest reward at which the head gives its own data no airtime."""
    pts = sorted((parse_power(v), a) for v, a in zip(values, head_own_airtime) if a is not None)
    for g, a in pts:
        if a <= OWN_AIRTIME_TOL:
            return g
    return None


# -- slot-size sweeps ------------------------------------------------------

def _slot_point(args):
    scenario, slot, channel, seed, options = args
    ada = run_adaptive(scenario, slot, channel or ConstantChannel(), seed, options)
    # the fixed-plan baseline only differs from the adaptive run under fading
    non = run_non_adaptive(scenario, channel, seed, slot, options) if channel is not None else None
    return ada, non


def _timeline_rows(value, scheme, seed, scenario, res):
    rows = []
    for s in res.slots:
        rows.append([value, scheme, seed, s.index, s.start, s.length,
                     None if s.head is None else s.head + 1, s.status,
                     *airtime_by_owner(scenario, s.airtime), *s.utilities])
    return rows


def timeline_columns(n_users: int) -> list:
    return (["sweep_value", "scheme", "seed", "slot", "start", "length", "head", "status"]
            + [f"airtime_{i + 1}" for i in range(n_users)] + [f"utility_{i + 1}" for i in range(n_users)])


def _run_slot_sweep(sf: ScenarioFile, options, workers):
    spec, sc = sf.experiment, sf.scenario
    channel = spec.channel
    seeds = spec.seed_list if channel is not None else [spec.seed_base]
    jobs = [(sc, float(parse_power(v)), channel, s, options)
            for v in spec.values for s in seeds]
    out = _run_pool(_slot_point, jobs, workers)
    rows, timeline = [], []
    counts, spread = {}, {}
    for (_, slot, _, seed, _), (ada, non) in zip(jobs, out):
        key = fmt(slot)
        for scheme, res in (("adaptive", ada), ("non_adaptive", non)):
            if res is None:
                continue
            total = np.zeros(sc.n_users)
            for s in res.slots:
                total += airtime_by_owner(sc, s.airtime)
            rows.append([slot, scheme, seed, None, True, "timeline", res.weighted_product,
                         res.plain_product, _timeline_delivered(sc, res), *res.utilities, *total, *res.energy])
            timeline += _timeline_rows(slot, scheme, seed, sc, res)
        counts.setdefault(key, []).append(ada.head_counts(sc.n_users))
        spread.setdefault(key, []).append(float(np.std(ada.energy)))
    summary = {"sweep_variable": "slot_size", "values": [fmt(float(parse_power(v))) for v in spec.values],
               "seeds": seeds,
               "head_counts": {k: [float(c) for c in np.mean(v, axis=0)] for k, v in counts.items()},
               "energy_std": {k: float(np.mean(v)) for k, v in spread.items()}}
    return rows, summary, timeline


def _timeline_delivered(sc, res) -> float:
    # every interested receiver of an item ends up with (size - remaining)
    st = res.state
    return float(sum(len(it.interested) * (it.size - st.remaining[m]) for m, it in enumerate(sc.items)))


# -- output ----------------------------------------------------------------

def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def run_experiment(sf: ScenarioFile, out_dir=None, options: Optional[SolverOptions] = None,
                   workers: int = 1) -> dict:
    """Run the file's experiment and write ``results.csv`` and ``summary.json``
    (plus ``timeline.csv`` for slot-size sweeps) into ``out_dir``.

    Returns the summary dict.
    """
    out = Path(out_dir or sf.experiment.output_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    rows, summary, timeline = run_sweep(sf, options, workers)
    n = sf.scenario.n_users
    (out / "results.csv").write_text(rows_to_csv(rows, result_columns(n)))
    if timeline:
        (out / "timeline.csv").write_text(rows_to_csv(timeline, timeline_columns(n)))
    summary = {"scenario": sf.name or (Path(sf.path).stem if sf.path else ""), "n_users": n, **summary}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# -- plot data -------------------------------------------------------------

_AXES = {"budget": "budget", "reward": "unit_reward", "power": "bargaining_power",
         "load": "data_load", "case": "preference_case", "slot": "slot_size"}
_QUANTITIES = ("airtime", "utility", "energy", "product")
PLOT_KINDS = tuple(f"{q}_vs_{a}" for q in _QUANTITIES for a in _AXES)


def emit_plotdata(results_dir, kind: str, out_path=None) -> Path:
    """Long-format ``series,x,y`` CSV for one figure-like view of the results.

    Only rows for the selected head are used; slot-size results are averaged
    over seeds, per scheme.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    qty, axis = kind.split("_vs_")
    results_dir = Path(results_dir)
    summary_path = results_dir / "summary.json"
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    swept = summary.get("sweep_variable")
    if swept is not None and swept != _AXES[axis]:
        raise ValueError(f"results sweep {swept!r}, but plot kind {kind!r} needs {_AXES[axis]!r}")
    out_path = Path(out_path) if out_path else results_dir / f"{kind}.csv"
    with open(results_dir / "results.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["selected"] == "1"]
    order, acc = [], {}
    for r in rows:
        x = r["sweep_value"]
        prefix = "" if r["scheme"] in ("static", "adaptive") else f"{r['scheme']}:"
        if qty == "product":
            series = [(f"{prefix}weighted", r["weighted_product"]), (f"{prefix}plain", r["plain_product"])]
        else:
            users = sorted(int(k.split("_")[1]) for k in r if k.startswith(f"{qty}_"))
            series = [(f"{prefix}user{i}", r[f"{qty}_{i}"]) for i in users]
        for name, y in series:
            key = (name, x)
            if key not in acc:
                order.append(key)
                acc[key] = []
            acc[key].append(float(y))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    for name, x in sorted(order, key=lambda k: k[0]):
        w.writerow([name, x, fmt(float(np.mean(acc[(name, x)])))])
    out_path.write_text(buf.getvalue())
    return out_path
