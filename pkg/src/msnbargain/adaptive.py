"""Slot-wise head selection and airtime allocation under fading links.

Time is cut into slots of length ``pi``. At the start of each slot the
link capacities are redrawn, and the group re-runs head selection on a
utility that carries everything accrued in earlier slots (amounts,
energy, rewards). Airtime caps use the bytes still left to send.
The non-adaptive baseline decides once, from the first slot's capacities,
and then just plays that airtime split out across the slots.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .exceptions import NoAgreementError
from .model import FlowSummary, Scenario, flows_from_maps
from .solver import INFEASIBLE, SolverOptions, _best_index, solve_objective
from .utility import NashObjective, nash_products

log = logging.getLogger(__name__)

_DONE_TOL = 1e-9


# -- channels -------------------------------------------------------------

@dataclass(frozen=True)
class RayleighChannel:
    """I.i.d. Rayleigh-faded capacity on every link, redrawn each slot.

    Links are symmetric: one draw per unordered pair.
    """

    snr: float = 10.0

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be > 0, got {self.snr}")

    def sample(self, n_users: int, rng) -> np.ndarray:
        iu = np.triu_indices(n_users, 1)
        c = np.zeros((n_users, n_users))
        c[iu] = sample_capacity(self, rng, size=len(iu[0]))
        return c + c.T

    def pdf(self, c):
        c = np.asarray(c, dtype=float)
        rho = self.snr
        # log-space, so huge c underflows to 0 instead of overflowing
        p2 = np.exp2(np.minimum(c, 1000.0))
        logp = math.log(math.log(2) / rho) + np.minimum(c, 1000.0) * math.log(2) - (p2 - 1) / rho
        return np.where(c >= 0, np.exp(logp), 0.0)

    def mean(self) -> float:
        """Mean capacity by numerical integration of ``c * p(c)``."""
        # the tail beyond 2^c - 1 = 800 rho carries exp(-800) of the mass
        top = math.log2(1.0 + 800.0 * self.snr)
        val, _ = integrate.quad(lambda c: c * float(self.pdf(c)), 0.0, top, limit=200)
        return val


@dataclass(frozen=True)
class ConstantChannel:
    """Variance-free stub: every slot sees the same capacities.

    ``capacity=None`` keeps the scenario's own link capacities.
    """

    capacity: object = None

    def sample(self, n_users: int, rng) -> Optional[np.ndarray]:
        if self.capacity is None:
            return None
        arr = np.asarray(self.capacity, dtype=float)
        if arr.ndim == 0:
            arr = np.full((n_users, n_users), float(arr))
        return arr


def sample_capacity(channel: RayleighChannel, rng, size=None):
    """Draw capacity in MB/s by inverse CDF, ``c = log2(1 - rho * ln(1 - u))``."""
    u = rng.random(size)
    # keep u off 0 and use log1p so no link gets exactly zero capacity
    u = np.maximum(u, np.finfo(float).tiny)
    c = np.log1p(-channel.snr * np.log1p(-u)) / math.log(2)
    return float(c) if size is None else c


# -- state ----------------------------------------------------------------

@dataclass
class SlotState:
    """Cumulative per-user totals and per-item progress across slots."""

    disseminated: np.ndarray
    received_interest: np.ndarray
    forwarded: np.ndarray
    sent: np.ndarray
    received: np.ndarray
    energy: np.ndarray
    reward: np.ndarray
    remaining: np.ndarray        # MB left per item
    holdings: np.ndarray         # (n_users, n_items) MB of each item held

    @classmethod
    def initial(cls, scenario: Scenario) -> "SlotState":
        n, k = scenario.n_users, len(scenario.items)
        hold = np.zeros((n, k))
        sizes = np.array([it.size for it in scenario.items], dtype=float)
        for m, it in enumerate(scenario.items):
            hold[it.owner, m] = it.size
        z = np.zeros(n)
        return cls(z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy(),
                   sizes.copy(), hold)

    def copy(self) -> "SlotState":
        return SlotState(*(getattr(self, f).copy() for f in self.__dataclass_fields__))

    def stored_flags(self, scenario: Scenario, head: int) -> list:
        """Whether ``head`` already holds each item in full."""
        return [bool(self.holdings[head, m] >= it.size - _DONE_TOL) for m, it in enumerate(scenario.items)]

    def residual_budget(self, scenario: Scenario) -> np.ndarray:
        return scenario.energy_budget - self.energy

    def flows(self) -> list:
        return [FlowSummary(*vals) for vals in zip(self.disseminated, self.received_interest, self.forwarded,
                                                    self.sent, self.received, self.energy)]

    def objective(self, scenario: Scenario, maps) -> NashObjective:
        return NashObjective(maps, scenario.energy_budget, scenario.sensitivity, scenario.powers,
                             scenario.unit_reward, scenario.unit_energy_send, scenario.unit_energy_recv,
                             scenario.utility_params, base_amount=self.disseminated + self.received_interest,
                             base_energy=self.energy, base_reward=self.reward)

    def utilities(self, scenario: Scenario) -> np.ndarray:
        """Cumulative utilities with no further airtime."""
        obj = self.objective(scenario, scenario.flow_maps(0))
        return obj.utilities(np.zeros(obj.n_vars))

    def apply(self, scenario: Scenario, plan, maps, x) -> None:
        """Accrue one slot's flows for variable vector ``x`` under ``plan``."""
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return
        fl = flows_from_maps(maps, x, scenario.unit_energy_send, scenario.unit_energy_recv)
        self.disseminated += fl[:, 0]
        self.received_interest += fl[:, 1]
        self.forwarded += fl[:, 2]
        self.sent += fl[:, 3]
        self.received += fl[:, 4]
        self.energy += fl[:, 5]
        self.reward[plan.head] += scenario.unit_reward * fl[plan.head, 2]
        for col, m in enumerate(maps.variables):
            ip = plan.items[m]
            theta = x[col] / ip.time_weight
            self.remaining[m] = max(0.0, self.remaining[m] - theta)
            for _, j in ip.links:
                self.holdings[j, m] = min(ip.size, self.holdings[j, m] + theta)


# -- results --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SlotRecord:
    index: int
    start: float
    length: float
    capacity: np.ndarray
    head: Optional[int]
    airtime: np.ndarray          # per item, zeros for items without a variable
    utilities: np.ndarray        # cumulative, after the slot
    status: str = "optimal"


@dataclass(frozen=True, eq=False)
class TimelineResult:
    slot_size: float
    horizon: float
    slots: tuple
    final: list = field(repr=False)
    utilities: np.ndarray = None
    weighted_product: float = 0.0
    plain_product: float = 0.0
    state: Optional[SlotState] = field(default=None, repr=False)

    @property
    def heads(self) -> list:
        return [s.head for s in self.slots]

    def head_counts(self, n_users: Optional[int] = None) -> np.ndarray:
        n = n_users or len(self.final)
        counts = np.zeros(n, dtype=int)
        for h in self.heads:
            if h is not None:
                counts[h] += 1
        return counts

    @property
    def energy(self) -> np.ndarray:
        return np.array([f.energy for f in self.final])

    @property
    def disseminated(self) -> np.ndarray:
        return np.array([f.disseminated for f in self.final])

    @property
    def total_aod(self) -> float:
        return float(self.disseminated.sum())

    @property
    def reward(self) -> np.ndarray:
        return self.state.reward.copy()

    @property
    def total_airtime(self) -> float:
        return float(sum(s.airtime.sum() for s in self.slots))


def slot_lengths(horizon: float, slot_size: float) -> list:
    """``ceil(T / pi)`` slot lengths; the last one takes what is left."""
    if not slot_size > 0:
        raise ValueError(f"slot size must be > 0, got {slot_size}")
    if horizon <= 0:
        return []
    n = max(1, math.ceil(horizon / slot_size - 1e-9))
    lengths = [slot_size] * (n - 1)
    lengths.append(horizon - slot_size * (n - 1))
    return lengths


def _finish(scenario, slot_size, records, state) -> TimelineResult:
    u = state.utilities(scenario)
    if np.any(u < 0):
        weighted, plain = 0.0, float(np.prod(u))
    else:
        prods = nash_products(u, scenario.powers)
        weighted, plain = prods.weighted, prods.plain
    return TimelineResult(slot_size, scenario.airtime_horizon, tuple(records), state.flows(), u,
                          weighted, plain, state)


def _slot_scenario(scenario, channel, rng):
    cap = channel.sample(scenario.n_users, rng)
    return scenario if cap is None else scenario.with_capacity(cap)


def _solve_slot(sc: Scenario, state: SlotState, length: float, options: SolverOptions, head: int):
    plan = sc.plan(head, state.stored_flags(sc, head))
    maps = plan.flow_maps()
    obj = state.objective(sc, maps)
    upper = np.array([state.remaining[m] * plan.items[m].time_weight for m in maps.variables])
    sub = solve_objective(obj, length, options, plan=plan, upper=upper)
    return sub, plan, maps


def run_adaptive(scenario: Scenario, slot_size: float, channel=None, seed=None,
                 options: Optional[SolverOptions] = None) -> TimelineResult:
    """Re-select the head and re-allocate airtime at the start of every slot.

    Ties in the weighted product go to the user with the most energy budget
    left, then to the lowest index.
    """
    options = options or SolverOptions()
    channel = channel or ConstantChannel()
    rng = np.random.default_rng(seed)
    state = SlotState.initial(scenario)
    records, start = [], 0.0
    for t, length in enumerate(slot_lengths(scenario.airtime_horizon, slot_size)):
        sc = _slot_scenario(scenario, channel, rng)
        results = [_solve_slot(sc, state, length, options, h) for h in range(sc.n_users)]
        values = [r[0].weighted_product if r[0].status != INFEASIBLE else None for r in results]
        left = state.residual_budget(sc)
        airtime = np.zeros(len(sc.items))
        try:
            head = _best_index(values, tie_key=lambda i: (-left[i],))
        except NoAgreementError:
            log.warning("slot %d: no feasible head, skipping", t)
            records.append(SlotRecord(t, start, length, sc.capacity, None, airtime,
                                      state.utilities(scenario), INFEASIBLE))
            start += length
            continue
        sub, plan, maps = results[head]
        state.apply(sc, plan, maps, sub.x)
        airtime[list(maps.variables)] = sub.x
        records.append(SlotRecord(t, start, length, sc.capacity, head, airtime,
                                  state.utilities(scenario), sub.status))
        start += length
    return _finish(scenario, slot_size, records, state)


def run_non_adaptive(scenario: Scenario, channel=None, seed=None, slot_size: Optional[float] = None,
                     options: Optional[SolverOptions] = None) -> TimelineResult:
    """Decide head and per-item airtime once, then play it out over the slots.

    Capacities are still redrawn every slot (same random stream as the
    adaptive run), so each slot's delivered amount uses that slot's links.
    A slot's airtime share is cut back when an item runs out of bytes or a
    user would hit its energy budget.
    """
    options = options or SolverOptions()
    channel = channel or ConstantChannel()
    slot_size = scenario.airtime_horizon if slot_size is None else slot_size
    rng = np.random.default_rng(seed)
    state = SlotState.initial(scenario)
    horizon = scenario.airtime_horizon
    records, start = [], 0.0
    head, share = None, None
    for t, length in enumerate(slot_lengths(horizon, slot_size)):
        sc = _slot_scenario(scenario, channel, rng)
        airtime = np.zeros(len(sc.items))
        if t == 0:
            results = [_solve_slot(sc, state, horizon, options, h) for h in range(sc.n_users)]
            values = [r[0].weighted_product if r[0].status != INFEASIBLE else None for r in results]
            try:
                head = _best_index(values)
            except NoAgreementError:
                log.warning("no feasible head at the start; nothing is disseminated")
                head = None
            if head is not None:
                sub, plan, maps = results[head]
                share = np.zeros(len(sc.items))
                share[list(maps.variables)] = sub.x / horizon
        if head is None:
            records.append(SlotRecord(t, start, length, sc.capacity, None, airtime,
                                      state.utilities(scenario), INFEASIBLE))
            start += length
            continue
        plan = sc.plan(head, state.stored_flags(sc, head))
        maps = plan.flow_maps()
        x = np.array([min(share[m] * length, state.remaining[m] * plan.items[m].time_weight)
                      for m in maps.variables])
        x = _energy_capped(sc, state, maps, x)
        state.apply(sc, plan, maps, x)
        airtime[list(maps.variables)] = x
        records.append(SlotRecord(t, start, length, sc.capacity, head, airtime,
                                  state.utilities(scenario)))
        start += length
    return _finish(scenario, slot_size, records, state)


def _energy_capped(sc, state, maps, x, margin: float = 1e-6):
    """Scale ``x`` down so nobody's cumulative energy reaches its budget."""
    if x.size == 0:
        return x
    e_slot = maps.energy(sc.unit_energy_send, sc.unit_energy_recv) @ x
    room = sc.energy_budget * (1 - margin) - state.energy
    over = e_slot > room
    if not np.any(over):
        return x
    factor = max(0.0, float(np.min(np.where(e_slot > 0, room / np.maximum(e_slot, 1e-300), np.inf))))
    return x * min(1.0, factor)
