"""Co-location contention model and the baseline placement strategies.

A node hands out each resource in proportion to demand once demand exceeds
capacity. On top of the share lost to oversubscription, every overcommitted
resource adds a multiplicative interference penalty ``1 / (1 + gamma_r *
overcommit_r)``; the gammas encode how badly each resource degrades when
contended (cache and memory hurt far more than CPU).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .core import ContainerSpec, ResourceVector
from .errors import NoFeasibleNode

DEFAULT_GAMMA = ResourceVector(cpu=0.1, memory=0.8, cache=0.6, blkio=0.3, network=0.5)


@dataclass(frozen=True)
class ContentionParams:
    interference_gamma: ResourceVector = DEFAULT_GAMMA


class Strategy(str, Enum):
    SPREAD = "spread"
    BINPACK = "binpack"
    RANDOM = "random"
    CBALANCER = "cbalancer"


BASELINES = (Strategy.SPREAD, Strategy.BINPACK, Strategy.RANDOM)


def delivered_share(demands: Sequence[float], capacity: float) -> np.ndarray:
    """Proportional share of ``capacity`` once total demand exceeds it."""
    demands = np.asarray(demands, dtype=float)
    total = demands.sum()
    if total <= capacity:
        return demands.copy()
    return capacity * demands / total


def overcommit(total_demand: ResourceVector, capacity: ResourceVector) -> ResourceVector:
    return ResourceVector(*(max(0.0, d - c) for d, c in zip(total_demand, capacity)))


def container_throughput(
    spec: ContainerSpec,
    delivered: ResourceVector,
    colocated_overcommit: ResourceVector,
    params: ContentionParams = ContentionParams(),
) -> float:
    share = 1.0
    for want, got in zip(spec.demand, delivered):
        if want > 0:
            share = min(share, got / want)
    penalty = 1.0
    for gamma, over in zip(params.interference_gamma, colocated_overcommit):
        penalty /= 1.0 + gamma * over
    return spec.base_throughput * share * penalty


def dropped_fraction(network_overcommit: float) -> float:
    return network_overcommit / (1.0 + network_overcommit)


@dataclass
class NodeLoad:
    """What a baseline scheduler sees of one node."""

    node_id: int
    capacity: ResourceVector
    active: int = 0
    load: ResourceVector = field(default_factory=ResourceVector)

    @property
    def total(self) -> float:
        return sum(self.load)


def schedule_baseline(
    strategy: Strategy | str,
    arriving: ContainerSpec,
    nodes: Sequence[NodeLoad],
    rng: np.random.Generator,
    fallback: bool = True,
) -> int:
    """Pick a node for ``arriving`` and return its ID.

    spread: fewest active containers, ties broken uniformly at random.
    binpack: the most loaded node that still fits the demand; when nothing
    fits, the least loaded node (or :class:`NoFeasibleNode` with
    ``fallback=False``).
    random: uniform over all nodes.
    """
    strategy = Strategy(strategy)
    if not nodes:
        raise NoFeasibleNode("no nodes to schedule on")
    if strategy is Strategy.SPREAD:
        fewest = min(n.active for n in nodes)
        ties = [n.node_id for n in nodes if n.active == fewest]
        return ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
    if strategy is Strategy.BINPACK:
        feasible = [n for n in nodes if (n.load + arriving.demand).fits_within(n.capacity)]
        if feasible:
            return max(feasible, key=lambda n: (n.total, -n.node_id)).node_id
        if not fallback:
            raise NoFeasibleNode(f"{arriving.container_id} fits on no node")
        return min(nodes, key=lambda n: (n.total, n.node_id)).node_id
    if strategy is Strategy.RANDOM:
        return nodes[int(rng.integers(len(nodes)))].node_id
    raise ValueError(f"{strategy.value} is not a baseline strategy")

