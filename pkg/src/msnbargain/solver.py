"""Per-head Nash bargaining sub-problems, head selection, and the distributed run.

Each sub-problem maximizes ``sum(alpha_i * log u_i(x))`` over the airtime
vector subject to the airtime horizon, per-item caps, energy budgets and
``u_i >= floor``. It is solved with a log-barrier interior-point method
(damped Newton centering), followed by an equality-constrained Newton polish
on the detected active set so that the returned point satisfies the KKT
conditions to near machine precision.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import NoAgreementError
from .model import Allocation, DisseminationPlan
from .utility import NashObjective, nash_products

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
BUDGET_BOUNDARY = "budget_boundary"
MAX_ITER = "max_iter"

TIE_RTOL = 1e-9
POLISH_GAP = math.inf
_TINY_CAP = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 200
    t0: float = 10.0
    mu: float = 100.0
    utility_floor: float = 1e-9
    polish: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.mu > 1:
            raise ValueError("mu must be > 1")
        if not self.t0 > 0:
            raise ValueError("t0 must be > 0")


@dataclass(frozen=True, eq=False)
class SubSolution:
    """Optimum of the sub-problem for one candidate head."""

    head: int
    status: str
    x: np.ndarray
    utilities: np.ndarray
    energy: np.ndarray
    weighted_product: float
    plain_product: float
    log_objective: float
    iterations: int
    residual: float
    plan: Optional[DisseminationPlan] = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE

    @property
    def allocation(self) -> Optional[Allocation]:
        if self.plan is None:
            return None
        return Allocation.from_variables(self.plan, self.x)


@dataclass(frozen=True)
class Message:
    """One broadcast of the distributed run: a node's local optimum."""

    sender: int
    weighted_product: Optional[float]
    plain_product: Optional[float]
    airtime: tuple


@dataclass(frozen=True, eq=False)
class JointSolution:
    head: int
    status: str
    allocation: Optional[Allocation]
    x: np.ndarray
    utilities: np.ndarray
    energy: np.ndarray
    candidates: tuple
    messages: tuple = ()

    @property
    def products(self) -> np.ndarray:
        return np.array([c.weighted_product for c in self.candidates])

    @property
    def plain_products(self) -> np.ndarray:
        return np.array([c.plain_product for c in self.candidates])

    @property
    def selected(self) -> SubSolution:
        return self.candidates[self.head]

    @property
    def head_indicator(self) -> np.ndarray:
        a = np.zeros(len(self.candidates), dtype=int)
        a[self.head] = 1
        return a


def build_objective(scenario, head: int, stored_flags=None, maps=None) -> NashObjective:
    maps = scenario.flow_maps(head, stored_flags) if maps is None else maps
    budget = [u.energy_budget for u in scenario.users]
    sensitivity = [u.sensitivity for u in scenario.users]
    return NashObjective(maps, budget, sensitivity, scenario.bargaining_power, scenario.unit_reward,
                         scenario.unit_energy_send, scenario.unit_energy_recv, scenario.utility_params)


def solve_subproblem(scenario, head: int, options: Optional[SolverOptions] = None,
                     stored_flags=None) -> SubSolution:
    """Optimal airtime when ``head`` is the group head."""
    options = options or SolverOptions()
    plan = scenario.plan(head, stored_flags)
    objective = build_objective(scenario, head, stored_flags)
    return solve_objective(objective, scenario.airtime_horizon, options, plan=plan)


def solve_objective(objective: NashObjective, horizon: float, options: SolverOptions,
                    plan: Optional[DisseminationPlan] = None, upper=None) -> SubSolution:
    """Maximize the log Nash objective under an airtime ``horizon``.

    ``upper`` overrides the per-variable caps carried by the flow maps.
    """
    upper = np.asarray(objective.maps.upper if upper is None else upper, dtype=float)
    k = upper.shape[0]
    x = np.zeros(k)
    free = np.flatnonzero(upper > _TINY_CAP)
    if horizon <= 0 or free.size == 0:
        return _finish(objective, x, BUDGET_BOUNDARY, 0, 0.0, plan, boundary=True)
    sub = objective.restrict(free) if free.size < k else objective
    xs, status, iters, residual = _barrier(sub, horizon, upper[free], options)
    x[free] = xs
    return _finish(objective, x, status, iters, residual, plan)


def _finish(objective, x, status, iters, residual, plan, boundary=False) -> SubSolution:
    u = objective.utilities(x)
    energy = objective.energy(x)
    if status == INFEASIBLE or np.any(u < 0):
        return SubSolution(objective.head, INFEASIBLE, x, u, energy, 0.0, 0.0, -math.inf,
                           iters, math.inf, plan)
    prods = nash_products(u, objective.alpha)
    return SubSolution(objective.head, status, x, u, energy, prods.weighted, prods.plain,
                       prods.log_objective, iters, residual, plan)


class _Problem:
    """Linear constraints ``G x <= h`` plus ``u_i(x) >= floor``."""

    def __init__(self, objective, horizon, upper, floor):
        k = upper.shape[0]
        self.obj = objective
        self.floor = floor
        self.G = np.vstack([np.ones((1, k)), -np.eye(k), np.eye(k), objective.energy_map])
        self.h = np.concatenate([[horizon], np.zeros(k), upper, objective.budget - objective.base_energy])
        self.m = self.G.shape[0] + objective.alpha.shape[0]

    def slack(self, x):
        return self.h - self.G @ x

    def strictly_feasible(self, x) -> bool:
        if np.any(self.slack(x) <= 0):
            return False
        return bool(np.all(self.obj.utilities(x) > self.floor))

    def barrier_value(self, x, t) -> float:
        s = self.slack(x)
        if np.any(s <= 0):
            return -math.inf
        u = self.obj.utilities(x)
        gap = u - self.floor
        if np.any(gap <= 0):
            return -math.inf
        w = self.obj._weighted
        return float(t * np.dot(self.obj.alpha[w], np.log(u[w])) + np.log(s).sum() + np.log(gap).sum())

    def newton_step(self, x, t):
        obj = self.obj
        u = obj.utilities(x)
        jac = obj.jacobian(x)
        uh = obj.utility_hessians(x)
        s = self.slack(x)
        gap = u - self.floor
        grad = (t * obj.gradient(x, u, jac) - self.G.T @ (1.0 / s) + jac.T @ (1.0 / gap))
        hess = (t * obj.hessian(x, u, jac, uh)
                - self.G.T @ (self.G / (s ** 2)[:, None])
                + np.einsum("i,ikl->kl", 1.0 / gap, uh)
                - jac.T @ (jac / (gap ** 2)[:, None]))
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        return step, float(grad @ step)


def _phase_one(problem: _Problem, horizon: float, upper: np.ndarray):
    k = upper.shape[0]
    share = min(horizon, float(upper.sum())) / k
    base = np.minimum(upper, share)
    scale = 0.9
    while scale >= 1e-12:
        x = scale * base
        if problem.strictly_feasible(x):
            return x
        scale *= 0.5
    return None


def _barrier(objective, horizon, upper, options: SolverOptions):
    problem = _Problem(objective, horizon, upper, options.utility_floor)
    x = _phase_one(problem, horizon, upper)
    if x is None:
        log.debug("head %d: no strictly feasible start", objective.head)
        return np.zeros(upper.shape[0]), INFEASIBLE, 0, math.inf
    t = options.t0
    iters = 0
    while True:
        iters += _center(problem, x_ref := [x], t, options.max_iter - iters)
        x = x_ref[0]
        gap = problem.m / t
        if options.polish and gap <= POLISH_GAP:
            polished = _polish(problem, x, math.sqrt(1.0 / t))
            if polished is not None and polished[1] <= 1e-2 * options.tolerance:
                return polished[0], OPTIMAL, iters, polished[1]
        if gap <= options.tolerance:
            return x, OPTIMAL, iters, gap
        if iters >= options.max_iter:
            log.warning("head %d: barrier stopped after %d Newton steps (gap %.3g)",
                        objective.head, iters, gap)
            return x, MAX_ITER, iters, gap
        t *= options.mu


def _center(problem: _Problem, x_ref: list, t: float, budget: int) -> int:
    """Damped Newton on the barrier function at fixed ``t``; updates ``x_ref[0]``."""
    x = x_ref[0]
    G = problem.G
    used = 0
    while used < budget:
        step, dec2 = problem.newton_step(x, t)
        used += 1
        if dec2 / 2 <= 1e-10:
            break
        # Largest step keeping the linear constraints strictly satisfied.
        rate = G @ step
        s = problem.slack(x)
        grow = rate > 0
        alpha = min(1.0, 0.99 * float(np.min(s[grow] / rate[grow]))) if np.any(grow) else 1.0
        phi = problem.barrier_value(x, t)
        slop = 1e-13 * (1.0 + abs(phi))
        while alpha > 1e-12:
            cand = x + alpha * step
            if problem.barrier_value(cand, t) >= phi + 0.25 * alpha * dec2 - slop:
                break
            alpha *= 0.5
        else:
            break
        x = cand
    x_ref[0] = x
    return used


def _polish(problem: _Problem, x0, active_tol: float = 1e-6):
    """Newton on a guessed active set; returns ``(x, stationarity residual)`` or None.

    Constraints that end up violated join the active set; ones with negative
    multipliers leave it. Gives up (None) if that does not settle.
    """
    obj = problem.obj
    G, h = problem.G, problem.h
    scale = 1.0 + np.abs(h)
    active = set(np.flatnonzero(problem.slack(x0) < max(active_tol, 1e-6) * scale).tolist())
    base_val = obj.value(x0)
    for _ in range(G.shape[0] + 2):
        idx = sorted(active)
        A = G[idx]
        x = _equality_newton(obj, x0, A, h[idx], problem.floor)
        if x is None:
            return None
        slack = h - G @ x
        violated = set(np.flatnonzero(slack < -1e-12 * scale).tolist())
        if violated - active:
            active |= violated
            continue
        if violated:
            return None
        u = obj.utilities(x)
        if np.any(u <= problem.floor):
            return None
        g = obj.gradient(x, u)
        lam = np.linalg.lstsq(A.T, g, rcond=None)[0] if idx else np.zeros(0)
        if lam.size and lam.min() < -1e-10:
            active.discard(idx[int(np.argmin(lam))])
            continue
        if obj.value(x) < base_val - 1e-12 * (1.0 + abs(base_val)):
            return None
        residual = float(np.linalg.norm(g - A.T @ lam)) if idx else float(np.linalg.norm(g))
        return np.clip(x, 0.0, None), residual
    return None


def _equality_newton(obj, x0, A, b, floor, iters: int = 30):
    """Maximize the objective on ``{A x = b}`` starting near ``x0``."""
    k = x0.shape[0]
    n_eq = A.shape[0]
    x = x0 - np.linalg.lstsq(A, A @ x0 - b, rcond=None)[0] if n_eq else x0.copy()
    for _ in range(iters):
        u = obj.utilities(x)
        if np.any(u <= floor) or not np.all(np.isfinite(u)) or np.any(obj.energy_slack(x) <= 0):
            return None
        jac = obj.jacobian(x)
        g = obj.gradient(x, u, jac)
        H = obj.hessian(x, u, jac)
        if n_eq:
            kkt = np.block([[H, -A.T], [A, np.zeros((n_eq, n_eq))]])
            rhs = np.concatenate([-g, np.zeros(n_eq)])
        else:
            kkt, rhs = H, -g
        try:
            step = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        x = x + step
        if np.max(np.abs(step)) <= 1e-14 * (1.0 + np.max(np.abs(x))):
            break
    return x


def _best_index(values, rel_tol: float = TIE_RTOL, tie_key: Optional[Callable[[int], tuple]] = None) -> int:
    candidates = [i for i, v in enumerate(values) if v is not None and not math.isnan(v)]
    if not candidates:
        raise NoAgreementError("every candidate head yields an infeasible sub-problem")
    best = max(values[i] for i in candidates)
    tied = [i for i in candidates if values[i] >= best - rel_tol * abs(best)]
    if tie_key is None:
        return min(tied)
    return min(tied, key=lambda i: (tie_key(i), i))


def select_head(subsolutions, rel_tol: float = TIE_RTOL, tie_key=None) -> JointSolution:
    """Candidate with the largest weighted Nash product; ties go to the lowest index."""
    subs = tuple(subsolutions)
    values = [s.weighted_product if s.feasible else None for s in subs]
    head = _best_index(values, rel_tol, tie_key)
    chosen = subs[head]
    return JointSolution(head, chosen.status, chosen.allocation, chosen.x, chosen.utilities,
                         chosen.energy, subs)


def solve(scenario, options: Optional[SolverOptions] = None, stored_flags=None) -> JointSolution:
    """Centralized joint head selection and airtime allocation."""
    options = options or SolverOptions()
    subs = [solve_subproblem(scenario, h, options, stored_flags) for h in range(scenario.n_users)]
    return select_head(subs)


class HeadAgent:
    """A node in the distributed run: solves its own sub-problem, then votes."""

    def __init__(self, index: int, scenario, options: SolverOptions):
        self.index = index
        self.scenario = scenario
        self.options = options
        self.solution: Optional[SubSolution] = None
        self.inbox: dict = {}
        self.is_head = False

    def solve(self) -> Message:
        self.solution = solve_subproblem(self.scenario, self.index, self.options)
        sol = self.solution
        product = sol.weighted_product if sol.feasible else None
        plain = sol.plain_product if sol.feasible else None
        msg = Message(self.index, product, plain, tuple(sol.x.tolist()))
        self.inbox[self.index] = msg
        return msg

    def receive(self, msg: Message) -> None:
        self.inbox[msg.sender] = msg

    def decide(self) -> bool:
        n = self.scenario.n_users
        if len(self.inbox) < n:
            raise RuntimeError(f"node {self.index} heard from {len(self.inbox)} of {n} nodes")
        values = [self.inbox[k].weighted_product for k in range(n)]
        self.is_head = _best_index(values) == self.index
        return self.is_head


def run_algorithm1(scenario, options: Optional[SolverOptions] = None) -> JointSolution:
    """Simulate the distributed protocol: solve locally, broadcast, pick the max."""
    options = options or SolverOptions()
    agents = [HeadAgent(i, scenario, options) for i in range(scenario.n_users)]
    messages = []
    for agent in agents:
        msg = agent.solve()
        messages.append(msg)
        for other in agents:
            if other is not agent:
                other.receive(msg)
    heads = [a.index for a in agents if a.decide()]
    if len(heads) != 1:
        raise RuntimeError(f"nodes disagree on the head: {heads}")
    head = heads[0]
    sol = agents[head].solution
    subs = tuple(a.solution for a in agents)
    return JointSolution(head, sol.status, sol.allocation, sol.x, sol.utilities, sol.energy,
                         subs, tuple(messages))
