"""Bargaining-game instances and the dissemination geometry of a star group.

Users are indexed ``0..N-1`` internally. Files, CSV output and the CLI use
1-based indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import ScenarioError, UndefinedDisseminationError
from .utility import UtilityParams

ALPHA_SUM_TOL = 1e-12
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class UserProfile:
    """Energy budget ``E_i`` (Joules) and battery sensitivity ``delta_i`` in [0, 1]."""

    energy_budget: float
    sensitivity: float = 1.0

    def problems(self, where: str = "user") -> list[str]:
        out = []
        if not (self.energy_budget > 0 and math.isfinite(self.energy_budget)):
            out.append(f"{where}: energy_budget must be > 0, got {self.energy_budget!r}")
        if not 0.0 <= self.sensitivity <= 1.0:
            out.append(f"{where}: sensitivity must lie in [0, 1], got {self.sensitivity!r}")
        return out


@dataclass(frozen=True)
class DataItem:
    """One piece of data: its owner, size in MB and the users interested in it."""

    owner: int
    size: float
    interested: frozenset = frozenset()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "interested", frozenset(int(j) for j in self.interested))


def _as_capacity_matrix(value, n: int) -> tuple:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n, n), float(arr))
    if arr.shape != (n, n):
        raise ScenarioError(f"link_capacity: expected a scalar or a {n}x{n} matrix, got shape {arr.shape}")
    arr = arr.copy()
    np.fill_diagonal(arr, 0.0)
    return tuple(tuple(float(c) for c in row) for row in arr)


def _as_power(value) -> float:
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


@dataclass(frozen=True)
class Scenario:
    """A complete bargaining-game instance.

    ``link_capacity`` may be given as a scalar (uniform rate on every link) or
    an N x N matrix in MB/s; the diagonal is ignored and stored as 0.
    ``bargaining_power`` defaults to equal weights.
    """

    users: tuple
    items: tuple
    link_capacity: tuple
    airtime_horizon: float = 20.0
    unit_reward: float = 0.01
    bargaining_power: Optional[tuple] = None
    unit_energy_send: float = 2.85
    unit_energy_recv: float = 2.85
    utility_params: UtilityParams = field(default_factory=UtilityParams)

    def __post_init__(self):
        users = tuple(self.users)
        items = tuple(self.items)
        n = len(users)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "link_capacity", _as_capacity_matrix(self.link_capacity, n))
        if self.bargaining_power is None:
            power = tuple(1.0 / n for _ in range(n)) if n else ()
        else:
            power = tuple(_as_power(a) for a in self.bargaining_power)
        object.__setattr__(self, "bargaining_power", power)
        for name in ("airtime_horizon", "unit_reward", "unit_energy_send", "unit_energy_recv"):
            object.__setattr__(self, name, float(getattr(self, name)))
        problems = self.problems()
        if problems:
            raise ScenarioError(problems)

    def problems(self) -> list[str]:
        """Every invariant violation, as human-readable strings."""
        n = len(self.users)
        out = []
        if n < 2:
            out.append(f"users: need at least 2 users, got {n}")
        for i, user in enumerate(self.users):
            out.extend(user.problems(f"users[{i}]"))
        cap = np.asarray(self.link_capacity)
        off = ~np.eye(n, dtype=bool)
        if n and not (np.all(np.isfinite(cap[off])) and np.all(cap[off] > 0)):
            out.append("link_capacity: every off-diagonal rate must be finite and > 0")
        if not self.airtime_horizon >= 0:
            out.append(f"airtime_horizon: must be >= 0, got {self.airtime_horizon}")
        if not self.unit_reward >= 0:
            out.append(f"unit_reward: must be >= 0, got {self.unit_reward}")
        for name in ("unit_energy_send", "unit_energy_recv"):
            if not getattr(self, name) >= 0:
                out.append(f"{name}: must be >= 0")
        alpha = self.bargaining_power
        if len(alpha) != n:
            out.append(f"bargaining_power: expected {n} entries, got {len(alpha)}")
        elif any(a < 0 for a in alpha):
            out.append("bargaining_power: entries must be >= 0")
        elif abs(math.fsum(alpha) - 1.0) > ALPHA_SUM_TOL:
            out.append(f"bargaining_power: must sum to 1, sums to {math.fsum(alpha)!r}")
        for m, item in enumerate(self.items):
            where = f"items[{m}]" + (f" ({item.name})" if item.name else "")
            if not 0 <= item.owner < n:
                out.append(f"{where}: owner {item.owner} is not a user index")
            if not (item.size > 0 and math.isfinite(item.size)):
                out.append(f"{where}: size must be > 0, got {item.size!r}")
            if item.owner in item.interested:
                out.append(f"{where}: owner {item.owner} cannot be interested in its own item")
            bad = sorted(j for j in item.interested if not 0 <= j < n)
            if bad:
                out.append(f"{where}: interested users {bad} are not user indices")
        return out

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def capacity(self) -> np.ndarray:
        return np.array(self.link_capacity, dtype=float)

    @property
    def energy_budget(self) -> np.ndarray:
        return np.array([u.energy_budget for u in self.users], dtype=float)

    @property
    def sensitivity(self) -> np.ndarray:
        return np.array([u.sensitivity for u in self.users], dtype=float)

    @property
    def powers(self) -> np.ndarray:
        return np.array(self.bargaining_power, dtype=float)

    def with_capacity(self, capacity) -> "Scenario":
        return replace(self, link_capacity=capacity)

    def plan(self, head: int, stored_flags=None) -> "DisseminationPlan":
        return build_dissemination_plan(self, head, stored_flags)

    def flow_maps(self, head: int, stored_flags=None) -> "FlowMaps":
        return build_dissemination_plan(self, head, stored_flags).flow_maps()


def all_interested(n_users: int, owner: int) -> frozenset:
    return frozenset(j for j in range(n_users) if j != owner)


@dataclass(frozen=True)
class ItemPlan:
    """How one item is disseminated for a given head."""

    item: int
    owner: int
    size: float
    interested: frozenset
    links: tuple
    transmission_count: int
    store_flag: int
    time_weight: float  # seconds per MB: sum of 1/c over the links

    @property
    def max_airtime(self) -> float:
        return self.size * self.time_weight


@dataclass(frozen=True)
class DisseminationPlan:
    scenario: Scenario
    head: int
    items: tuple

    @property
    def variables(self) -> tuple:
        """Indices of items that carry an airtime variable (N > 0)."""
        return tuple(p.item for p in self.items if p.transmission_count > 0)

    def flow_maps(self) -> "FlowMaps":
        return _plan_flow_maps(self)


def build_dissemination_plan(scenario: Scenario, head: int, stored_flags=None) -> DisseminationPlan:
    """Link sets, transmission counts, store flags and time weights for ``head``.

    ``stored_flags[m]`` says whether the head already holds item ``m``. By
    default it holds only its own items, so every peripheral item has
    ``store_flag = 1`` and must first be sent to the head.
    """
    n = scenario.n_users
    if not 0 <= head < n:
        raise ScenarioError(f"head index {head} out of range for {n} users")
    if stored_flags is None:
        stored_flags = [False] * len(scenario.items)
    if len(stored_flags) != len(scenario.items):
        raise ScenarioError(f"stored_flags: expected {len(scenario.items)} entries, got {len(stored_flags)}")
    cap = scenario.link_capacity
    plans = []
    for m, item in enumerate(scenario.items):
        recipients = sorted(j for j in item.interested if j != head)
        if not item.interested:
            beta, links = 0, ()
        elif item.owner == head:
            beta, links = 0, tuple((head, r) for r in recipients)
        else:
            beta = 0 if stored_flags[m] else 1
            links = (((item.owner, head),) if beta else ()) + tuple((head, r) for r in recipients)
        weight = math.fsum(1.0 / cap[k][j] for k, j in links)
        plans.append(ItemPlan(m, item.owner, item.size, item.interested, links, len(links), beta, weight))
    return DisseminationPlan(scenario, head, tuple(plans))


def transmitted_amount(plan: DisseminationPlan, item: int, x_item: float) -> float:
    """MB carried by every link of ``item`` after ``x_item`` seconds of airtime."""
    if x_item < 0:
        raise ValueError(f"airtime must be >= 0, got {x_item}")
    ip = plan.items[item]
    if ip.transmission_count == 0 or ip.time_weight <= 0:
        raise UndefinedDisseminationError(f"item {item} has no links for head {plan.head}")
    return x_item / ip.time_weight


def adr(plan: DisseminationPlan, item: int) -> float:
    """Average dissemination rate: interested-user MB delivered per second of airtime.

    The numerator counts interested users, so a head that only relays the
    item does not raise its rate.
    """
    ip = plan.items[item]
    if not ip.interested or ip.time_weight <= 0:
        return 0.0
    return len(ip.interested) / ip.time_weight


@dataclass(frozen=True)
class Allocation:
    """Airtime in seconds per item (zero for items that carry no variable)."""

    plan: DisseminationPlan
    airtime: tuple

    def __post_init__(self):
        object.__setattr__(self, "airtime", tuple(float(x) for x in self.airtime))
        problems = self.problems()
        if problems:
            raise ScenarioError(problems)

    def problems(self, tol: float = FEASIBILITY_TOL) -> list[str]:
        out = []
        if len(self.airtime) != len(self.plan.items):
            return [f"allocation has {len(self.airtime)} entries, plan has {len(self.plan.items)} items"]
        for ip, x in zip(self.plan.items, self.airtime):
            if x < -tol:
                out.append(f"item {ip.item}: airtime {x} < 0")
            if ip.transmission_count == 0 and x != 0.0:
                out.append(f"item {ip.item}: has no dissemination but airtime {x}")
            elif x > ip.max_airtime * (1 + tol) + tol:
                out.append(f"item {ip.item}: airtime {x} exceeds size*weight {ip.max_airtime}")
        total = math.fsum(self.airtime)
        horizon = self.plan.scenario.airtime_horizon
        if total > horizon + tol * max(1.0, horizon):
            out.append(f"total airtime {total} exceeds horizon {horizon}")
        return out

    @classmethod
    def from_variables(cls, plan: DisseminationPlan, x) -> "Allocation":
        full = [0.0] * len(plan.items)
        for k, m in enumerate(plan.variables):
            full[m] = max(float(x[k]), 0.0)
        return cls(plan, tuple(full))

    @classmethod
    def zeros(cls, plan: DisseminationPlan) -> "Allocation":
        return cls(plan, (0.0,) * len(plan.items))

    @property
    def variables(self) -> np.ndarray:
        return np.array([self.airtime[m] for m in self.plan.variables], dtype=float)

    def per_user(self) -> np.ndarray:
        out = np.zeros(self.plan.scenario.n_users)
        for ip, x in zip(self.plan.items, self.airtime):
            out[ip.owner] += x
        return out

    @property
    def total(self) -> float:
        return math.fsum(self.airtime)


@dataclass(frozen=True)
class FlowSummary:
    """Per-user flows in MB (``d, b, f, s, r``) and energy ``e`` in Joules."""

    disseminated: float = 0.0
    received_interest: float = 0.0
    forwarded: float = 0.0
    sent: float = 0.0
    received: float = 0.0
    energy: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.disseminated, self.received_interest, self.forwarded,
                self.sent, self.received, self.energy)


def aggregate_flows(plan: DisseminationPlan, allocation: Allocation) -> list:
    """Per-user flow totals for ``allocation`` under ``plan``."""
    if allocation.plan is not plan and allocation.plan != plan:
        raise ScenarioError("allocation was built for a different plan")
    sc = plan.scenario
    n, head = sc.n_users, plan.head
    d, b, f, s_, r = (np.zeros(n) for _ in range(5))
    for ip, x in zip(plan.items, allocation.airtime):
        if ip.transmission_count == 0:
            continue
        theta = transmitted_amount(plan, ip.item, x)
        d[ip.owner] += ip.transmission_count * theta
        for j in ip.interested:
            if j != head or ip.store_flag:
                b[j] += theta
        if ip.owner != head:
            f[head] += (ip.transmission_count - ip.store_flag) * theta
            r[head] += ip.store_flag * theta
            s_[ip.owner] += ip.store_flag * theta
    s_[head] += d[head] + f[head]
    for j in range(n):
        if j != head:
            r[j] = b[j]
    e = sc.unit_energy_send * s_ + sc.unit_energy_recv * r
    return [FlowSummary(d[i], b[i], f[i], s_[i], r[i], e[i]) for i in range(n)]


@dataclass(frozen=True)
class FlowMaps:
    """Linear maps from the airtime vector to per-user flows.

    Each matrix is ``(n_users, n_vars)`` in MB per second of airtime;
    ``upper`` holds the per-variable airtime cap ``size * weight``.
    """

    head: int
    disseminated: np.ndarray
    received_interest: np.ndarray
    forwarded: np.ndarray
    sent: np.ndarray
    received: np.ndarray
    upper: np.ndarray
    variables: tuple = ()

    @property
    def n_vars(self) -> int:
        return self.upper.shape[0]

    def energy(self, e_send: float, e_recv: float) -> np.ndarray:
        return e_send * self.sent + e_recv * self.received


def _plan_flow_maps(plan: DisseminationPlan) -> FlowMaps:
    n, head = plan.scenario.n_users, plan.head
    active = [ip for ip in plan.items if ip.transmission_count > 0]
    k = len(active)
    d, b, f, s_, r = (np.zeros((n, k)) for _ in range(5))
    for col, ip in enumerate(active):
        rate = 1.0 / ip.time_weight
        d[ip.owner, col] = ip.transmission_count * rate
        for j in ip.interested:
            # a head that already stores the item gains nothing new from it
            if j != head:
                b[j, col] = rate
                r[j, col] = rate
            elif ip.store_flag:
                b[j, col] = rate
        if ip.owner == head:
            s_[head, col] += ip.transmission_count * rate
        else:
            relayed = (ip.transmission_count - ip.store_flag) * rate
            f[head, col] = relayed
            s_[head, col] += relayed
            s_[ip.owner, col] += ip.store_flag * rate
            r[head, col] = ip.store_flag * rate
    upper = np.array([ip.max_airtime for ip in active], dtype=float)
    return FlowMaps(head, d, b, f, s_, r, upper, tuple(ip.item for ip in active))


def flows_from_maps(maps: FlowMaps, x, e_send: float, e_recv: float) -> np.ndarray:
    """``(n_users, 6)`` array of ``d, b, f, s, r, e`` for variable vector ``x``."""
    x = np.asarray(x, dtype=float)
    cols = [maps.disseminated @ x, maps.received_interest @ x, maps.forwarded @ x,
            maps.sent @ x, maps.received @ x]
    cols.append(e_send * cols[3] + e_recv * cols[4])
    return np.column_stack(cols)


@dataclass(frozen=True)
class HomogeneousScenario:
    """Every user shares one block of ``data_size[i]`` MB that all others want."""

    users: tuple
    data_size: tuple
    link_capacity: tuple
    airtime_horizon: float = 20.0
    unit_reward: float = 0.01
    bargaining_power: Optional[tuple] = None
    unit_energy_send: float = 2.85
    unit_energy_recv: float = 2.85
    utility_params: UtilityParams = field(default_factory=UtilityParams)

    def __post_init__(self):
        object.__setattr__(self, "data_size", tuple(float(z) for z in self.data_size))
        # Validation and normalisation are shared with the heterogeneous encoding.
        sc = self.to_scenario()
        for name in ("users", "link_capacity", "bargaining_power", "airtime_horizon",
                     "unit_reward", "unit_energy_send", "unit_energy_recv"):
            object.__setattr__(self, name, getattr(sc, name))

    @property
    def n_users(self) -> int:
        return len(self.users)

    def to_scenario(self) -> Scenario:
        n = len(self.users)
        if len(self.data_size) != n:
            raise ScenarioError(f"data_size: expected {n} entries, got {len(self.data_size)}")
        items = tuple(DataItem(i, z, all_interested(n, i), f"A{i + 1}") for i, z in enumerate(self.data_size))
        return Scenario(self.users, items, self.link_capacity, self.airtime_horizon, self.unit_reward,
                        self.bargaining_power, self.unit_energy_send, self.unit_energy_recv,
                        self.utility_params)

    def plan(self, head: int, stored_flags=None) -> DisseminationPlan:
        return build_dissemination_plan(self.to_scenario(), head, stored_flags)

    def flow_maps(self, head: int, stored_flags=None) -> FlowMaps:
        # Flows are linear in x; probe the direct formulas with unit vectors.
        n = len(self.users)
        cols = [homogeneous_flows(self, head, np.eye(n)[k], stored_flags) for k in range(n)]
        stack = np.stack(cols, axis=2)  # (n_users, 6, n_vars)
        cap = np.asarray(self.link_capacity)
        upper = np.array([self.data_size[i] * math.fsum(1.0 / cap[k][j] for k, j in _homogeneous_links(n, head, i, stored_flags))
                          for i in range(n)])
        return FlowMaps(head, stack[:, 0], stack[:, 1], stack[:, 2], stack[:, 3], stack[:, 4],
                        upper, tuple(range(n)))


def _homogeneous_links(n: int, head: int, i: int, stored_flags) -> list:
    others = [j for j in range(n) if j not in (i, head)]
    if i == head:
        return [(head, j) for j in range(n) if j != head]
    stored = bool(stored_flags[i]) if stored_flags is not None else False
    return ([] if stored else [(i, head)]) + [(head, j) for j in others]


def homogeneous_flows(hs: HomogeneousScenario, head: int, x, stored_flags=None) -> np.ndarray:
    """Direct per-user flows for the all-interested, one-block-per-user case.

    Returns an ``(n_users, 6)`` array of ``d, b, f, s, r, e``. As in that
    model, every user's received amount equals its received data of interest.
    """
    n = len(hs.users)
    x = np.asarray(x, dtype=float)
    cap = np.asarray(hs.link_capacity)
    beta = np.array([0 if (i == head or (stored_flags is not None and stored_flags[i])) else 1 for i in range(n)])
    count = np.array([n - 1 if (i == head or beta[i]) else n - 2 for i in range(n)])
    weight = np.array([math.fsum(1.0 / cap[k][j] for k, j in _homogeneous_links(n, head, i, stored_flags))
                       for i in range(n)])
    theta = x / weight
    d = count * theta
    b = theta.sum() - theta
    b[head] = float(np.dot(beta, theta))
    f = np.zeros(n)
    f[head] = sum((count[h] - beta[h]) * theta[h] for h in range(n) if h != head)
    a = np.zeros(n)
    a[head] = 1.0
    s_ = a * (d + f) + (1 - a) * beta * theta
    r = b
    e = hs.unit_energy_send * s_ + hs.unit_energy_recv * r
    return np.column_stack([d, b, f, s_, r, e])
