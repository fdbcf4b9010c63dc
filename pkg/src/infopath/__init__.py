"""Informative path planning with Gaussian-process mutual information."""

from .domain import (InfeasibleQueryError, Location, Path, PlanQuery, PlanResult, SensingDomain,
                     UnknownLocationError, feasible, path_cost)
from .reward import GPModel, ModularReward, MutualInformation, SEKernel, residual

__all__ = [
    "InfeasibleQueryError", "Location", "Path", "PlanQuery", "PlanResult", "SensingDomain",
    "UnknownLocationError", "feasible", "path_cost",
    "GPModel", "ModularReward", "MutualInformation", "SEKernel", "residual",
]
