"""Brute-force and certificate checks for the bargaining solver.

None of this is used by the solver itself. Grid search enumerates every
feasible grid point of a small sub-problem; the KKT residual, fairness
probe and Pareto probe look at a candidate optimum from the outside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls

from .exceptions import DimensionError, InfeasibleUtilityError, ScenarioError
from .solver import build_objective

ACTIVE_TOL = 1e-7


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 0.05
    max_dims: int = 4

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.max_dims < 1:
            raise ValueError("max_dims must be >= 1")


class GridResult(NamedTuple):
    x: np.ndarray
    objective: float


def batch_utilities(objective, X) -> np.ndarray:
    """Utilities for each row of ``X`` (shape ``(m, n_vars)``); rows are allocations."""
    X = np.atleast_2d(X)
    y = 1.0 + objective.base_amount + X @ objective.value_map.T
    slack = objective.budget - objective.base_energy - X @ objective.energy_map.T
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = np.where(slack > 0, objective.sensitivity / slack, np.inf)
        cost[:, objective.sensitivity == 0] = 0.0
        val = np.where(y > 0, np.log(np.maximum(y, 1e-300)), -np.inf)
    u = val - cost + objective._shift + X @ objective.reward_map.T + objective.base_reward
    return objective.params.scale * u


def batch_log_objective(objective, U) -> np.ndarray:
    w = objective._weighted
    Uw = U[:, w]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.all(Uw > 0, axis=1),
                       np.log(np.where(Uw > 0, Uw, 1.0)) @ objective.alpha[w], -np.inf)
    return out


def _feasible_rows(objective, X, horizon, upper, floor=0.0):
    tol = 1e-12
    ok = np.all(X >= -tol, axis=1) & np.all(X <= upper + tol, axis=1)
    ok &= X.sum(axis=1) <= horizon + 1e-9
    slack = objective.budget - objective.base_energy - X @ objective.energy_map.T
    ok &= np.all(slack > 0, axis=1)
    U = batch_utilities(objective, X)
    ok &= np.all(U >= floor, axis=1)
    return ok, U


def grid_search(scenario, head: int, grid: GridSpec = GridSpec(), stored_flags=None) -> GridResult:
    """Best feasible grid point of the ``head`` sub-problem and its log objective.

    The objective is ``sum(alpha * log u)``; an empty budget (T=0) returns
    the zero allocation with objective ``-inf`` (product 0).
    """
    objective = build_objective(scenario, head, stored_flags)
    upper = np.asarray(objective.maps.upper, dtype=float)
    k = upper.shape[0]
    if k > grid.max_dims:
        raise DimensionError(f"{k} allocation variables exceeds the grid limit of {grid.max_dims}")
    horizon = scenario.airtime_horizon
    if horizon <= 0 or k == 0:
        return GridResult(np.zeros(k), -math.inf)
    axes = [np.arange(0.0, min(ub, horizon) + 1e-12, grid.resolution) for ub in upper]

    best_x, best_val = np.zeros(k), -math.inf
    # chunk over the first axis to keep memory bounded
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, k - 1) if k > 1 else np.zeros((1, 0))
    for x0 in axes[0]:
        X = np.hstack([np.full((rest.shape[0], 1), x0), rest])
        X = X[X.sum(axis=1) <= horizon + 1e-9]
        if X.shape[0] == 0:
            continue
        ok, U = _feasible_rows(objective, X, horizon, upper)
        if not ok.any():
            continue
        vals = batch_log_objective(objective, U[ok])
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_x = float(vals[i]), X[ok][i].copy()
    return GridResult(best_x, best_val)


def _constraints(objective, horizon, upper):
    """Rows ``G x <= h`` for the linear constraints of a sub-problem."""
    k = upper.shape[0]
    eye = np.eye(k)
    G = np.vstack([np.ones((1, k)), -eye, eye, objective.energy_map])
    h = np.concatenate([[horizon], np.zeros(k), upper, objective.budget - objective.base_energy])
    return G, h


def kkt_residual(scenario, head: int, x, stored_flags=None) -> float:
    """Stationarity plus complementarity norm of ``x`` for the ``head`` sub-problem.

    Multipliers come from non-negative least squares on the gradients of the
    constraints whose slack is at most ``1e-7``.
    """
    objective = build_objective(scenario, head, stored_flags)
    upper = np.asarray(objective.maps.upper, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape != upper.shape:
        raise ValueError(f"x has {x.shape[0]} entries, expected {upper.shape[0]}")
    G, h = _constraints(objective, scenario.airtime_horizon, upper)
    slack = h - G @ x
    problems = []
    if np.any(slack < -1e-9):
        problems.append(f"constraint violated by {-slack.min():.3g}")
    u = objective.utilities(x)
    if np.any(u[objective._weighted] <= 0):
        problems.append("non-positive utility for a user with bargaining power")
    if problems:
        raise ScenarioError(problems)
    grad = objective.gradient(x, u)
    active = slack <= ACTIVE_TOL
    if not active.any():
        return float(np.linalg.norm(grad))
    A = G[active].T
    lam, stat = nnls(A, grad)
    comp = float(np.linalg.norm(lam * slack[active]))
    return float(stat) + comp


def lipschitz_bound(objective, lo, hi) -> float:
    """Upper bound on the 1-norm of the log objective's gradient over ``[lo, hi]``.

    A step of at most ``h`` in every coordinate then changes the objective
    by at most ``L * h``. Each utility is concave, so its minimum over the
    box sits at a vertex; the gradient terms are bounded by their worst corner.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    k = lo.shape[0]
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(k, -1).T
    U = batch_utilities(objective, corners)
    w = objective._weighted
    umin = U.min(axis=0)
    if np.any(umin[w] <= 0):
        return math.inf
    y_lo = 1.0 + objective.base_amount + objective.value_map @ lo
    slack_hi = objective.budget - objective.base_energy - objective.energy_map @ hi
    if np.any(slack_hi[objective.sensitivity > 0] <= 0):
        return math.inf
    l1 = lambda a: np.abs(a).sum(axis=1)
    g = (l1(objective.value_map) / y_lo
         + objective.sensitivity * l1(objective.energy_map) / slack_hi ** 2
         + l1(objective.reward_map))
    g = objective.params.scale * g
    return float(np.sum(objective.alpha[w] * g[w] / umin[w]))


def _solution_parts(solution):
    return solution.head, np.asarray(solution.x, dtype=float), np.asarray(solution.utilities, dtype=float)


def sample_feasible(scenario, head: int, center, count: int, seed=None, stored_flags=None,
                    local_scale: float = 0.5):
    """Draw ``count`` feasible allocations (rows) and their utilities.

    Half come uniformly from the capped box, half from a neighborhood of
    ``center``; infeasible draws are rejected.
    """
    rng = np.random.default_rng(seed)
    objective = build_objective(scenario, head, stored_flags)
    upper = np.minimum(np.asarray(objective.maps.upper, dtype=float), scenario.airtime_horizon)
    center = np.asarray(center, dtype=float)
    k = upper.shape[0]
    kept_x, kept_u, n = [], [], 0
    for _ in range(50):
        if n >= count:
            break
        m = max(2 * (count - n), 16)
        far = rng.uniform(0.0, 1.0, (m // 2, k)) * upper
        r = local_scale * rng.uniform(0.0, 1.0, (m - m // 2, 1)) ** 2
        near = center + r * rng.standard_normal((m - m // 2, k))
        X = np.clip(np.vstack([far, near]), 0.0, upper)
        ok, U = _feasible_rows(objective, X, scenario.airtime_horizon, upper, floor=1e-300)
        kept_x.append(X[ok])
        kept_u.append(U[ok])
        n += int(ok.sum())
    X = np.vstack(kept_x)[:count] if kept_x else np.zeros((0, k))
    U = np.vstack(kept_u)[:count] if kept_u else np.zeros((0, scenario.n_users))
    return X, U


def fairness_probe(scenario, solution, sample_count: int = 1000, seed=None, stored_flags=None) -> float:
    """Largest ``sum(alpha_i * (u_i' - u_i*) / u_i*)`` over sampled feasible points.

    At the bargaining optimum this is at most zero (proportional fairness).
    Returns ``-inf`` when ``sample_count`` is 0.
    """
    head, x, u_star = _solution_parts(solution)
    if np.any(u_star <= 0):
        raise InfeasibleUtilityError("fairness probe needs strictly positive utilities")
    if sample_count <= 0:
        return -math.inf
    _, U = sample_feasible(scenario, head, x, sample_count, seed, stored_flags)
    if U.shape[0] == 0:
        return -math.inf
    alpha = np.asarray(scenario.bargaining_power, dtype=float)
    agg = ((U - u_star) / u_star) @ alpha
    return float(agg.max())


def pareto_probe(scenario, solution, sample_count: int = 1000, seed=None, stored_flags=None,
                 tol: float = 1e-9) -> int:
    """Number of sampled feasible points that improve every user's utility by more than ``tol``."""
    head, x, u_star = _solution_parts(solution)
    if sample_count <= 0:
        return 0
    _, U = sample_feasible(scenario, head, x, sample_count, seed, stored_flags)
    return int(np.sum(np.all(U > u_star + tol, axis=1)))
