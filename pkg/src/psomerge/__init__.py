"""Prioritized system-optimal lane-change planning for CAVs leaving a dedicated lane."""

from .core import DzConfig, Lane, Role, SortedOrdering, TrajectoryPlan, VehicleState, sort_and_classify
from .estimators import GapAcceptanceMerger, PSOMergePlanner
from .gap_acceptance import GaParams, ga_min_headway, ga_step
from .kinematics import MlcProfile, NewellParams, SpringDamperParams, mlc_position, mlc_speed
from .planner import CostParams, cost, optimize_trajectory, plan_all
from .scenario_file import load_scenario_file, parse_scenario
from .simulation import GenerationTemplate, PlannerKind, Scenario, generate_scenario, run

__version__ = "0.1.0"
