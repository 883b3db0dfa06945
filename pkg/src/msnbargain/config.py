"""Scenario files: YAML with units in the key names, validated before use.

A file describes one group (users, their data, links) and optionally an
``experiment`` block saying what to sweep. User indices in files are
1-based. Example::

    airtime_horizon_seconds: 20
    unit_reward_per_mb: 0.01
    link_capacity_mb_per_s: 4
    data_size_mb: 10
    users:
      - {energy_budget_joules: 300, sensitivity: 1}
      - {energy_budget_joules: 500, sensitivity: 1}
    experiment:
      sweep: {variable: budget, user: 1, values: [50, 100, 300, 500]}

Without an ``items`` list every user gets one block (``data_size_mb``,
either top-level or per user) that all other users want.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .adaptive import RayleighChannel
from .exceptions import ScenarioError, ScenarioFileError
from .model import DataItem, Scenario, UserProfile
from .utility import UtilityParams

SWEEP_VARIABLES = ("budget", "unit_reward", "bargaining_power", "data_load", "preference_case", "slot_size")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INDEX = {"type": "integer", "minimum": 1}
_FRACTION = {"oneOf": [_NONNEG, {"type": "string", "pattern": r"^\s*\d+(\.\d*)?\s*(/\s*\d+)?\s*$"}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["users"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "airtime_horizon_seconds": _NONNEG,
        "unit_reward_per_mb": _NONNEG,
        "energy_per_mb_send_joules": _NONNEG,
        "energy_per_mb_recv_joules": _NONNEG,
        "normalized_cost": {"type": "boolean"},
        "utility_scale": _POS,
        "link_capacity_mb_per_s": {"oneOf": [_POS, {"type": "array", "items": {"type": "array", "items": _NONNEG}}]},
        "bargaining_power": {"type": "array", "items": _FRACTION},
        "data_size_mb": {"oneOf": [_POS, {"type": "array", "items": _POS}]},
        "users": {
            "type": "array", "minItems": 2,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["energy_budget_joules"],
                "properties": {
                    "energy_budget_joules": _POS,
                    "sensitivity": {"type": "number", "minimum": 0, "maximum": 1},
                    "data_size_mb": _POS,
                },
            },
        },
        "items": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["owner", "size_mb"],
                "properties": {
                    "owner": _INDEX,
                    "size_mb": _POS,
                    "interested": {"type": "array", "items": _INDEX},
                    "name": {"type": "string"},
                },
            },
        },
        "experiment": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "sweep": {
                    "type": "object", "additionalProperties": False,
                    "required": ["variable"],
                    "properties": {
                        "variable": {"enum": list(SWEEP_VARIABLES)},
                        "user": _INDEX,
                        "values": {"type": "array", "items": {"oneOf": [_NUM, {"type": "string"}]}},
                    },
                },
                "cases": {
                    "type": "array",
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["label"],
                        "properties": {
                            "label": {"type": ["string", "integer"]},
                            "uninterested": {"type": "object",
                                             "additionalProperties": {"type": "array", "items": _INDEX}},
                        },
                    },
                },
                "seeds": {"type": "integer", "minimum": 1},
                "seed_base": {"type": "integer", "minimum": 0},
                "channel": {
                    "type": "object", "additionalProperties": False,
                    "required": ["snr"],
                    "properties": {"snr": _POS},
                },
                "output_dir": {"type": "string"},
            },
        },
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    """What to vary, and where results go. User indices here are 0-based."""

    variable: Optional[str] = None
    user: Optional[int] = None
    values: tuple = ()
    cases: dict = field(default_factory=dict)   # label -> {item name: (users,)}
    seeds: int = 1
    seed_base: int = 0
    channel: Optional[RayleighChannel] = None
    output_dir: Optional[str] = None

    @property
    def seed_list(self) -> list:
        return list(range(self.seed_base, self.seed_base + self.seeds))


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    experiment: ExperimentSpec
    path: Optional[str] = None
    name: str = ""


def parse_power(value) -> float:
    if isinstance(value, str):
        return float(Fraction(value.strip().replace(" ", "")))
    return float(value)


def _line_lookup(text: str):
    """Map a location path (tuple of keys/indices) to a 1-based line number."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        root = None

    def find(path):
        node, line = root, None
        for key in path:
            if node is None:
                break
            line = node.start_mark.line + 1
            if isinstance(node, yaml.MappingNode):
                node = next((v for k, v in node.value if k.value == key), None)
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                node = None
        if node is not None:
            line = node.start_mark.line + 1
        return line

    return find


def _where(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _fmt(find, path, msg) -> str:
    line = find(tuple(path))
    prefix = f"line {line}: " if line else ""
    return f"{prefix}{_where(path)}: {msg}"


def parse_scenario(text: str, path: str = "<string>") -> ScenarioFile:
    """Parse and validate scenario YAML; raises ScenarioFileError listing every problem."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ScenarioFileError(path, [f"{where}YAML parse error: {getattr(exc, 'problem', exc)}"]) from exc
    if not isinstance(data, dict):
        raise ScenarioFileError(path, ["<root>: expected a mapping of keys to values"])
    find = _line_lookup(text)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ScenarioFileError(path, [_fmt(find, e.absolute_path, e.message) for e in errors])
    problems = _semantic_problems(data, find)
    if problems:
        raise ScenarioFileError(path, problems)
    try:
        scenario = _build_scenario(data)
    except ScenarioError as exc:
        raise ScenarioFileError(path, exc.problems) from exc
    return ScenarioFile(scenario, _build_experiment(data, scenario), path, data.get("name", ""))


def load_scenario(path) -> ScenarioFile:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioFileError(path, [f"cannot read file: {exc.strerror}"]) from exc
    return parse_scenario(text, str(path))


def _semantic_problems(data, find) -> list:
    """Cross-field checks the schema cannot express; indices are 1-based."""
    out = []
    n = len(data["users"])

    def bad_user(idx, loc):
        if not 1 <= idx <= n:
            out.append(_fmt(find, loc, f"user {idx} does not exist (there are {n} users)"))

    cap = data.get("link_capacity_mb_per_s")
    if isinstance(cap, list):
        arr_ok = len(cap) == n and all(len(row) == n for row in cap)
        if not arr_ok:
            out.append(_fmt(find, ["link_capacity_mb_per_s"], f"matrix must be {n}x{n}"))
        else:
            for i in range(n):
                for j in range(n):
                    if i != j and not cap[i][j] > 0:
                        out.append(_fmt(find, ["link_capacity_mb_per_s", i, j],
                                        f"link {i + 1}->{j + 1} must have capacity > 0"))
    alpha = data.get("bargaining_power")
    if alpha is not None:
        if len(alpha) != n:
            out.append(_fmt(find, ["bargaining_power"], f"expected {n} entries, got {len(alpha)}"))
        else:
            try:
                total = math.fsum(parse_power(a) for a in alpha)
            except (ValueError, ZeroDivisionError) as exc:
                out.append(_fmt(find, ["bargaining_power"], f"bad fraction ({exc})"))
            else:
                if abs(total - 1.0) > 1e-9:
                    out.append(_fmt(find, ["bargaining_power"], f"must sum to 1, sums to {total:.12g}"))
    sizes = data.get("data_size_mb")
    if isinstance(sizes, list) and len(sizes) != n:
        out.append(_fmt(find, ["data_size_mb"], f"expected {n} entries, got {len(sizes)}"))
    names = set()
    if "items" in data:
        for m, it in enumerate(data["items"]):
            bad_user(it["owner"], ["items", m, "owner"])
            for k, j in enumerate(it.get("interested", [])):
                bad_user(j, ["items", m, "interested", k])
                if j == it["owner"]:
                    out.append(_fmt(find, ["items", m, "interested", k],
                                    f"owner {j} cannot be interested in its own item"))
            names.add(it.get("name") or f"item{m + 1}")
    else:
        for i, u in enumerate(data["users"]):
            if "data_size_mb" not in u and sizes is None:
                out.append(_fmt(find, ["users", i], "no data_size_mb here or at top level, and no items list"))
        names = {f"A{i + 1}" for i in range(n)}
    exp = data.get("experiment", {})
    sweep = exp.get("sweep")
    if sweep:
        if "user" in sweep:
            bad_user(sweep["user"], ["experiment", "sweep", "user"])
        if sweep["variable"] in ("budget", "bargaining_power", "data_load") and "user" not in sweep:
            out.append(_fmt(find, ["experiment", "sweep"], f"sweeping {sweep['variable']} needs a 'user'"))
        if sweep["variable"] == "preference_case":
            labels = [str(c["label"]) for c in exp.get("cases", [])]
            if not labels:
                out.append(_fmt(find, ["experiment"], "preference_case sweep needs a 'cases' list"))
            for k, v in enumerate(sweep.get("values", [])):
                if str(v) not in labels:
                    out.append(_fmt(find, ["experiment", "sweep", "values", k], f"no case labelled {v!r}"))
        elif "values" not in sweep:
            out.append(_fmt(find, ["experiment", "sweep"], "missing 'values'"))
        else:
            for k, v in enumerate(sweep["values"]):
                try:
                    parse_power(v)
                except (ValueError, ZeroDivisionError):
                    out.append(_fmt(find, ["experiment", "sweep", "values", k], f"not a number: {v!r}"))
    for c_i, case in enumerate(exp.get("cases", [])):
        for item_name, users in case.get("uninterested", {}).items():
            if item_name not in names:
                out.append(_fmt(find, ["experiment", "cases", c_i, "uninterested", item_name],
                                f"no item named {item_name!r}"))
            for k, j in enumerate(users):
                bad_user(j, ["experiment", "cases", c_i, "uninterested", item_name, k])
    return out


def _build_scenario(data) -> Scenario:
    n = len(data["users"])
    users = tuple(UserProfile(float(u["energy_budget_joules"]), float(u.get("sensitivity", 1.0)))
                  for u in data["users"])
    if "items" in data:
        items = []
        for m, it in enumerate(data["items"]):
            owner = it["owner"] - 1
            interested = ([j - 1 for j in it["interested"]] if "interested" in it
                          else [j for j in range(n) if j != owner])
            items.append(DataItem(owner, float(it["size_mb"]), frozenset(interested), it.get("name", f"item{m + 1}")))
    else:
        top = data.get("data_size_mb")
        items = []
        for i, u in enumerate(data["users"]):
            z = u.get("data_size_mb", top[i] if isinstance(top, list) else top)
            items.append(DataItem(i, float(z), frozenset(j for j in range(n) if j != i), f"A{i + 1}"))
    alpha = data.get("bargaining_power")
    params = UtilityParams(normalized_cost=data.get("normalized_cost", True), scale=float(data.get("utility_scale", 1.0)))
    return Scenario(users, tuple(items), data.get("link_capacity_mb_per_s", 4.0),
                    airtime_horizon=data.get("airtime_horizon_seconds", 20.0),
                    unit_reward=data.get("unit_reward_per_mb", 0.01),
                    bargaining_power=None if alpha is None else tuple(parse_power(a) for a in alpha),
                    unit_energy_send=data.get("energy_per_mb_send_joules", 2.85),
                    unit_energy_recv=data.get("energy_per_mb_recv_joules", 2.85),
                    utility_params=params)


def _build_experiment(data, scenario) -> ExperimentSpec:
    exp = data.get("experiment")
    if not exp:
        return ExperimentSpec()
    sweep = exp.get("sweep", {})
    cases = {str(c["label"]): {k: tuple(j - 1 for j in v) for k, v in c.get("uninterested", {}).items()}
             for c in exp.get("cases", [])}
    variable = sweep.get("variable")
    if variable == "preference_case":
        values = tuple(str(v) for v in sweep.get("values", list(cases)))
    else:
        values = tuple(sweep.get("values", ()))
    channel = RayleighChannel(float(exp["channel"]["snr"])) if "channel" in exp else None
    user = sweep["user"] - 1 if "user" in sweep else None
    return ExperimentSpec(variable, user, values, cases, exp.get("seeds", 1), exp.get("seed_base", 0),
                          channel, exp.get("output_dir"))


# -- writing --------------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical file form: explicit items, scalar capacity when uniform."""
    n = scenario.n_users
    cap = scenario.capacity
    off = cap[~np.eye(n, dtype=bool)]
    cap_out = float(off[0]) if np.all(off == off[0]) else [[float(c) for c in row] for row in cap]
    return {
        "airtime_horizon_seconds": scenario.airtime_horizon,
        "unit_reward_per_mb": scenario.unit_reward,
        "energy_per_mb_send_joules": scenario.unit_energy_send,
        "energy_per_mb_recv_joules": scenario.unit_energy_recv,
        "normalized_cost": scenario.utility_params.normalized_cost,
        "utility_scale": scenario.utility_params.scale,
        "link_capacity_mb_per_s": cap_out,
        "bargaining_power": [float(a) for a in scenario.bargaining_power],
        "users": [{"energy_budget_joules": u.energy_budget, "sensitivity": u.sensitivity} for u in scenario.users],
        "items": [{"owner": it.owner + 1, "size_mb": it.size, "interested": sorted(j + 1 for j in it.interested),
                   "name": it.name} for it in scenario.items],
    }


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)
