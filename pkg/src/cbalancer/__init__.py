"""Deterministic container-cluster rebalancing: a contention simulator,
a genetic placement optimizer, migration cost accounting and a
manager/worker control loop."""

from .contention import Strategy
from .core import ClusterSnapshot, ContainerSpec, NodeSpec, Placement, ResourceVector, build_snapshot
from .errors import CBalancerError
from .experiments import RunReport, alpha_sweep, compare, run
from .ga import GaConfig, PlacementOptimizer, optimize
from .objective import AlphaConvention, ObjectiveWeights, fitness, migration_distance, stability
from .scenario import Scenario, load_scenario

__all__ = [
    "AlphaConvention",
    "CBalancerError",
    "ClusterSnapshot",
    "ContainerSpec",
    "GaConfig",
    "NodeSpec",
    "ObjectiveWeights",
    "Placement",
    "PlacementOptimizer",
    "ResourceVector",
    "RunReport",
    "Scenario",
    "Strategy",
    "alpha_sweep",
    "build_snapshot",
    "compare",
    "fitness",
    "load_scenario",
    "migration_distance",
    "optimize",
    "run",
    "stability",
]
