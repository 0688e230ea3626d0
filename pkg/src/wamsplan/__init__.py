"""Multi-objective WAMS construction planning: PMU, DULR and PDC placement."""
from .network import (Case, CaseError, CaseParameters, DistanceMatrix, PowerNetwork, group_substations,
                      hop_distances, load_case, neighbors)
from .plan import PlacementPlan, PlanningOptions, notation, plan_from_notation
from .contingency import ContingencyConfig, ContingencySet, enumerate_states, observability, unreliability
from .objectives import ObjectiveVector, construction_cost, data_traffic, evaluate
from .checker import check_plan

__version__ = "0.1.0"
