"""Joint group-head selection and airtime allocation by Nash bargaining."""
from .adaptive import (ConstantChannel, RayleighChannel, SlotState, TimelineResult, run_adaptive,
                       run_non_adaptive, sample_capacity)
from .config import ExperimentSpec, ScenarioFile, dump_scenario, load_scenario, parse_scenario
from .estimator import AdaptiveAllocator, BargainingAllocator
from .exceptions import (BudgetExhaustedError, DimensionError, InfeasibleUtilityError,
                         NoAgreementError, ScenarioError, ScenarioFileError,
                         UndefinedDisseminationError)
from .experiment import emit_plotdata, run_experiment
from .model import (Allocation, DataItem, DisseminationPlan, FlowMaps, FlowSummary,
                    HomogeneousScenario, Scenario, UserProfile, adr, aggregate_flows,
                    build_dissemination_plan, homogeneous_flows, transmitted_amount)
from .oracle import GridSpec, fairness_probe, grid_search, kkt_residual, pareto_probe
from .solver import (JointSolution, SolverOptions, SubSolution, run_algorithm1, select_head,
                     solve, solve_subproblem)
from .utility import UtilityParams, energy_cost, nash_products, utility, valuation

__version__ = "0.1.0"
