"""scikit-learn style wrappers around the solver and the slot-wise runner.

The "data" an estimator is fitted on is a single Scenario, not a feature
matrix, so only the parameter handling (get_params / set_params / clone)
and the fitted-attribute conventions carry over.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .adaptive import ConstantChannel, RayleighChannel, run_adaptive, run_non_adaptive
from .model import HomogeneousScenario, Scenario
from .solver import SolverOptions, run_algorithm1, solve


def _as_scenario(scenario) -> Scenario:
    if isinstance(scenario, HomogeneousScenario):
        return scenario.to_scenario()
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scenario).__name__}")
    return scenario


class BargainingAllocator(BaseEstimator):
    """Pick the group head and split the airtime for one scenario.

    Fitted attributes: ``head_``, ``airtime_`` (per item), ``utilities_``,
    ``energy_``, ``products_`` (weighted, per candidate head),
    ``plain_products_``, ``solution_``.
    """

    def __init__(self, tolerance=1e-8, max_iter=200, t0=10.0, mu=100.0, distributed=False):
        self.tolerance = tolerance
        self.max_iter = max_iter
        self.t0 = t0
        self.mu = mu
        self.distributed = distributed

    def _options(self):
        return SolverOptions(tolerance=self.tolerance, max_iter=self.max_iter, t0=self.t0, mu=self.mu)

    def fit(self, scenario, y=None):
        sc = _as_scenario(scenario)
        sol = run_algorithm1(sc, self._options()) if self.distributed else solve(sc, self._options())
        self.solution_ = sol
        self.n_users_ = sc.n_users
        self.head_ = sol.head
        per_item = np.zeros(len(sc.items))
        per_item[list(sol.selected.plan.variables)] = sol.x
        self.airtime_ = per_item
        self.utilities_ = np.asarray(sol.utilities)
        self.energy_ = np.asarray(sol.energy)
        self.products_ = sol.products
        self.plain_products_ = sol.plain_products
        return self

    def predict(self, scenario=None):
        """Selected head (0-based); with a scenario, fits on it first."""
        if scenario is not None:
            self.fit(scenario)
        check_is_fitted(self, "head_")
        return self.head_

    def score(self, scenario=None, y=None):
        """Weighted Nash product of the selected head."""
        if scenario is not None:
            self.fit(scenario)
        check_is_fitted(self, "head_")
        return float(self.products_[self.head_])


class AdaptiveAllocator(BaseEstimator):
    """Slot-wise allocation; ``snr=None`` keeps the scenario's links fixed.

    Fitted attributes: ``timeline_``, ``heads_``, ``head_counts_``,
    ``energy_``, ``utilities_``, and ``baseline_`` (the fixed-plan run) when
    ``baseline=True``.
    """

    def __init__(self, slot_size=1.0, snr=None, seed=None, baseline=False, tolerance=1e-8):
        self.slot_size = slot_size
        self.snr = snr
        self.seed = seed
        self.baseline = baseline
        self.tolerance = tolerance

    def fit(self, scenario, y=None):
        sc = _as_scenario(scenario)
        channel = ConstantChannel() if self.snr is None else RayleighChannel(self.snr)
        opts = SolverOptions(tolerance=self.tolerance)
        res = run_adaptive(sc, self.slot_size, channel, self.seed, opts)
        self.timeline_ = res
        self.heads_ = res.heads
        self.head_counts_ = res.head_counts(sc.n_users)
        self.energy_ = res.energy
        self.utilities_ = res.utilities
        if self.baseline:
            self.baseline_ = run_non_adaptive(sc, channel, self.seed, self.slot_size, opts)
        return self

    def score(self, scenario=None, y=None):
        """Final plain Nash product of the adaptive run."""
        if scenario is not None:
            self.fit(scenario)
        check_is_fitted(self, "timeline_")
        return float(self.timeline_.plain_product)
