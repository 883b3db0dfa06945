"""User utility, its pieces, and Nash-product objectives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import BudgetExhaustedError, InfeasibleUtilityError


@dataclass(frozen=True)
class UtilityParams:
    """Fixed functional forms: ``v(y) = log(1 + y)`` and the energy cost.

    normalized_cost
        ``True`` uses ``g(e) = delta * (1/(E - e) - 1/E)`` so that ``g(0) = 0``.
        ``False`` drops the ``-1/E`` term, i.e. ``g(e) = delta / (E - e)``,
        which is the form that reproduces the reference budget-sweep utilities.
    scale
        Positive factor applied to the whole utility. The bargaining outcome
        is invariant to it.
    """

    normalized_cost: bool = True
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def valuation(amount: float) -> float:
    """Value of ``amount`` MB of disseminated plus received data."""
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    return math.log1p(amount)


def energy_cost(energy: float, budget: float, sensitivity: float, params: UtilityParams = UtilityParams()) -> float:
    if energy < 0:
        raise ValueError(f"energy must be >= 0, got {energy}")
    if energy >= budget:
        raise BudgetExhaustedError(f"energy {energy} J reaches budget {budget} J")
    if sensitivity == 0:
        return 0.0
    cost = 1.0 / (budget - energy)
    if params.normalized_cost:
        cost -= 1.0 / budget
    return sensitivity * cost


def utility(flow, is_head: bool, unit_reward: float, energy_budget: float, sensitivity: float,
            params: UtilityParams = UtilityParams()) -> float:
    """``v(d + b) - g(e) + [head] * gamma * f`` for one user's FlowSummary."""
    value = valuation(flow.disseminated + flow.received_interest)
    cost = energy_cost(flow.energy, energy_budget, sensitivity, params)
    reward = unit_reward * flow.forwarded if is_head else 0.0
    return params.scale * (value - cost + reward)


class NashProducts(NamedTuple):
    weighted: float
    plain: float
    log_objective: float


def nash_products(utilities, powers) -> NashProducts:
    """Weighted product, plain product and ``sum(alpha * log u)``.

    Users with zero bargaining power contribute a factor of 1 to the
    weighted product and 0 to the log objective.
    """
    u = np.asarray(utilities, dtype=float)
    alpha = np.asarray(powers, dtype=float)
    if u.shape != alpha.shape:
        raise ValueError(f"{u.shape[0]} utilities but {alpha.shape[0]} powers")
    if np.any(u < 0):
        raise InfeasibleUtilityError(f"negative utility in {u.tolist()}")
    plain = float(np.prod(u))
    weighted_users = alpha > 0
    if np.any(u[weighted_users] == 0):
        return NashProducts(0.0, plain, -math.inf)
    log_obj = math.fsum(alpha[weighted_users] * np.log(u[weighted_users]))
    return NashProducts(math.exp(log_obj), plain, log_obj)


class NashObjective:
    """``sum(alpha_i * log u_i(x))`` for one candidate head, with derivatives.

    All users' utilities are affine-plus-concave in the airtime vector ``x``
    through the linear flow maps. The ``base_*`` arrays add carried-over
    amounts, energy and reward (used by the slot-wise scheme).
    """

    def __init__(self, maps, energy_budget, sensitivity, powers, unit_reward, e_send, e_recv,
                 params: UtilityParams = UtilityParams(), base_amount=None, base_energy=None,
                 base_reward=None):
        n = maps.disseminated.shape[0]
        self.maps = maps
        self.head = maps.head
        self.value_map = maps.disseminated + maps.received_interest
        self.energy_map = maps.energy(e_send, e_recv)
        self.reward_map = unit_reward * maps.forwarded
        self.budget = np.asarray(energy_budget, dtype=float)
        self.sensitivity = np.asarray(sensitivity, dtype=float)
        self.alpha = np.asarray(powers, dtype=float)
        self.params = params
        self.base_amount = np.zeros(n) if base_amount is None else np.asarray(base_amount, dtype=float)
        self.base_energy = np.zeros(n) if base_energy is None else np.asarray(base_energy, dtype=float)
        self.base_reward = np.zeros(n) if base_reward is None else np.asarray(base_reward, dtype=float)
        self._shift = self.sensitivity / self.budget if params.normalized_cost else np.zeros(n)
        self._weighted = self.alpha > 0

    @property
    def n_vars(self) -> int:
        return self.value_map.shape[1]

    def restrict(self, columns) -> "NashObjective":
        """Copy of the objective over a subset of the variables."""
        sub = object.__new__(NashObjective)
        sub.__dict__.update(self.__dict__)
        sub.value_map = self.value_map[:, columns]
        sub.energy_map = self.energy_map[:, columns]
        sub.reward_map = self.reward_map[:, columns]
        return sub

    def energy(self, x) -> np.ndarray:
        return self.base_energy + self.energy_map @ x

    def energy_slack(self, x) -> np.ndarray:
        return self.budget - self.energy(x)

    def utilities(self, x) -> np.ndarray:
        y = 1.0 + self.base_amount + self.value_map @ x
        slack = self.budget - self.base_energy - self.energy_map @ x
        if np.all(slack > 0) and np.all(y > 0):
            cost = self.sensitivity / slack
            u = np.log(y) - cost + self._shift + self.reward_map @ x + self.base_reward
            return self.params.scale * u
        with np.errstate(divide="ignore", invalid="ignore"):
            cost = np.where(slack > 0, self.sensitivity / slack, np.inf)
            cost[self.sensitivity == 0] = 0.0
            val = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), -np.inf)
        u = val - cost + self._shift + self.reward_map @ x + self.base_reward
        return self.params.scale * u

    def value(self, x) -> float:
        u = self.utilities(x)
        w = self._weighted
        if np.any(u[w] <= 0):
            return -math.inf
        return float(np.dot(self.alpha[w], np.log(u[w])))

    def jacobian(self, x) -> np.ndarray:
        """``(n_users, n_vars)`` gradient of every utility."""
        y = 1.0 + self.base_amount + self.value_map @ x
        slack = self.energy_slack(x)
        jac = (self.value_map / y[:, None]
               - self._cost_curvature(slack, 2)[:, None] * self.energy_map
               + self.reward_map)
        return self.params.scale * jac

    def _cost_curvature(self, slack, power):
        # delta / slack**power, exactly 0 for insensitive users
        out = np.zeros_like(slack)
        on = self.sensitivity != 0
        out[on] = self.sensitivity[on] / slack[on] ** power
        return out

    def utility_hessians(self, x) -> np.ndarray:
        """``(n_users, n_vars, n_vars)`` Hessian of every utility."""
        y = 1.0 + self.base_amount + self.value_map @ x
        slack = self.energy_slack(x)
        hv = np.einsum("ik,il->ikl", self.value_map, self.value_map) / (y ** 2)[:, None, None]
        he = np.einsum("ik,il->ikl", self.energy_map, self.energy_map) * (2 * self._cost_curvature(slack, 3))[:, None, None]
        return -self.params.scale * (hv + he)

    def gradient(self, x, u=None, jac=None) -> np.ndarray:
        u = self.utilities(x) if u is None else u
        jac = self.jacobian(x) if jac is None else jac
        w = self._weighted
        return jac[w].T @ (self.alpha[w] / u[w])

    def hessian(self, x, u=None, jac=None, uhess=None) -> np.ndarray:
        u = self.utilities(x) if u is None else u
        jac = self.jacobian(x) if jac is None else jac
        uhess = self.utility_hessians(x) if uhess is None else uhess
        w = self._weighted
        coef = self.alpha[w] / u[w]
        hess = np.einsum("i,ikl->kl", coef, uhess[w])
        jw = jac[w]
        return hess - jw.T @ (jw * (coef / u[w])[:, None])
