"""Domain types shared across the package: resources, containers, nodes,
placements and cluster snapshots.

Resource values are normalized to one node-capacity unit (1.0 = a full
node). Time is measured in integer ticks of one simulated second.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EmptyCluster, InvalidConfig, NoSample, UnknownNode


class ResourceKind(str, Enum):
    CPU = "cpu"
    MEMORY = "memory"
    CACHE = "cache"
    BLKIO = "blkio"
    NETWORK = "network"


RESOURCES: tuple[ResourceKind, ...] = tuple(ResourceKind)
N_RESOURCES = len(RESOURCES)


@dataclass(frozen=True)
class ResourceVector:
    """One non-negative value per :class:`ResourceKind`, in fixed order."""

    cpu: float = 0.0
    memory: float = 0.0
    cache: float = 0.0
    blkio: float = 0.0
    network: float = 0.0

    def __post_init__(self):
        for kind in RESOURCES:
            v = getattr(self, kind.value)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"resource {kind.value} must be finite and >= 0, got {v!r}")

    @classmethod
    def from_mapping(cls, values: Mapping[str | ResourceKind, float]) -> ResourceVector:
        kwargs = {}
        for key, v in values.items():
            kind = ResourceKind(key)
            kwargs[kind.value] = float(v)
        return cls(**kwargs)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> ResourceVector:
        if len(values) != N_RESOURCES:
            raise ValueError(f"expected {N_RESOURCES} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def filled(cls, value: float) -> ResourceVector:
        return cls(*([float(value)] * N_RESOURCES))

    def __getitem__(self, kind: ResourceKind | str) -> float:
        return getattr(self, ResourceKind(kind).value)

    def __iter__(self) -> Iterator[float]:
        return (getattr(self, k.value) for k in RESOURCES)

    def as_array(self) -> np.ndarray:
        return np.fromiter(self, dtype=float, count=N_RESOURCES)

    def as_dict(self) -> dict[str, float]:
        return {k.value: getattr(self, k.value) for k in RESOURCES}

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(*(a + b for a, b in zip(self, other)))

    def fits_within(self, capacity: ResourceVector, tol: float = 1e-12) -> bool:
        return all(a <= b + tol for a, b in zip(self, capacity))


UNIT_CAPACITY = ResourceVector.filled(1.0)


@dataclass(frozen=True)
class ContainerSpec:
    """Static description of one container.

    ``fs_write_bytes_per_tick`` grows the writable init layer while the
    container runs; ``workload_class`` names the preset it came from.
    """

    container_id: str
    image_ref: str
    demand: ResourceVector
    memory_footprint_bytes: int
    base_throughput: float
    duration_ticks: int
    arrival_tick: int = 0
    thread_count: int = 1
    fs_write_bytes_per_tick: int = 0
    workload_class: str = ""

    def __post_init__(self):
        if not self.container_id:
            raise InvalidConfig("container_id must be non-empty")
        if not self.base_throughput > 0:
            raise InvalidConfig(f"{self.container_id}: base_throughput must be > 0")
        if self.duration_ticks < 1:
            raise InvalidConfig(f"{self.container_id}: duration_ticks must be >= 1")
        if self.arrival_tick < 0 or self.memory_footprint_bytes < 0:
            raise InvalidConfig(f"{self.container_id}: negative arrival tick or footprint")
        if self.thread_count < 1 or self.fs_write_bytes_per_tick < 0:
            raise InvalidConfig(f"{self.container_id}: bad thread count or write rate")


@dataclass(frozen=True)
class ContainerProfile:
    container_id: str
    samples: tuple[tuple[int, ResourceVector], ...]
    host_node: int

    def __post_init__(self):
        ticks = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ValueError(f"{self.container_id}: sample ticks must be strictly increasing")


def latest_utilization(profile: ContainerProfile, tick: int) -> ResourceVector:
    """Return the most recent sample taken at or before ``tick``."""
    ticks = [t for t, _ in profile.samples]
    pos = bisect.bisect_right(ticks, tick)
    if pos == 0:
        raise NoSample(f"{profile.container_id}: no sample at or before tick {tick}")
    return profile.samples[pos - 1][1]


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    capacity: ResourceVector = UNIT_CAPACITY

    def __post_init__(self):
        if self.node_id < 0:
            raise InvalidConfig(f"node_id must be >= 0, got {self.node_id}")


@dataclass(frozen=True)
class Placement:
    """Chromosome: ``assignment[i]`` is the node hosting container ``i``."""

    assignment: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))

    def __len__(self) -> int:
        return len(self.assignment)

    def __iter__(self) -> Iterator[int]:
        return iter(self.assignment)

    def __getitem__(self, i: int) -> int:
        return self.assignment[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.int64)

    def validate(self, node_ids: Iterable[int]) -> None:
        known = set(node_ids)
        for i, a in enumerate(self.assignment):
            if a not in known:
                raise UnknownNode(f"gene {i} references unknown node {a}")


@dataclass(frozen=True)
class ClusterSnapshot:
    tick: int
    nodes: tuple[NodeSpec, ...]
    containers: tuple[ContainerProfile, ...]
    placement: Placement = field(default_factory=Placement)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(n.node_id for n in self.nodes)

    @cached_property
    def utilization(self) -> np.ndarray:
        """(k, R) matrix of each container's latest utilization."""
        rows = [latest_utilization(p, self.tick).as_array() for p in self.containers]
        if not rows:
            return np.zeros((0, N_RESOURCES))
        return np.vstack(rows)

    def node_positions(self, placement: Placement | None = None) -> np.ndarray:
        """Map node IDs in ``placement`` to positions 0..N-1 in ``nodes``."""
        placement = self.placement if placement is None else placement
        index = {nid: pos for pos, nid in enumerate(self.node_ids)}
        try:
            return np.fromiter((index[a] for a in placement), dtype=np.int64, count=len(placement))
        except KeyError as exc:
            raise UnknownNode(f"placement references unknown node {exc.args[0]}") from None


def build_snapshot(
    profiles: Sequence[ContainerProfile], nodes: Sequence[NodeSpec], tick: int
) -> ClusterSnapshot:
    """Assemble a snapshot; containers are ordered by ``container_id``."""
    if not nodes:
        raise EmptyCluster("snapshot needs at least one node")
    ordered_nodes = tuple(sorted(nodes, key=lambda n: n.node_id))
    ids = [n.node_id for n in ordered_nodes]
    if len(set(ids)) != len(ids):
        raise InvalidConfig("duplicate node ids")
    known = set(ids)
    seen = set()
    for p in profiles:
        if p.host_node not in known:
            raise UnknownNode(f"{p.container_id} references missing node {p.host_node}")
        if p.container_id in seen:
            raise InvalidConfig(f"duplicate container id {p.container_id}")
        seen.add(p.container_id)
        latest_utilization(p, tick)
    ordered = tuple(sorted(profiles, key=lambda p: p.container_id))
    placement = Placement(tuple(p.host_node for p in ordered))
    return ClusterSnapshot(tick=tick, nodes=ordered_nodes, containers=ordered, placement=placement)
