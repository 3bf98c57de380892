"""Tick-driven cluster simulator.

Each tick has two halves. :meth:`World.begin_tick` restores containers whose
migration downtime has elapsed and admits arrivals through the baseline
scheduler. :meth:`World.advance` then shares every node's capacity among
its running containers, credits their work, samples profiles on the
profiling cadence and retires finished containers. Migrations requested
between the two halves take effect in the same tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .contention import (
    ContentionParams,
    NodeLoad,
    Strategy,
    container_throughput,
    delivered_share,
    dropped_fraction,
    overcommit,
    schedule_baseline,
)
from .core import (
    N_RESOURCES,
    RESOURCES,
    ContainerProfile,
    ContainerSpec,
    NodeSpec,
    ResourceKind,
    ResourceVector,
)
from .errors import ContainerVanished, InvalidConfig, SameNode, UnknownContainer, UnknownImage, UnknownNode
from .migration import (
    GIGABIT_PER_SECOND,
    CheckpointModel,
    FsSyncModel,
    MigrationRecord,
    execute_migration,
    plan_migration,
)
from .objective import node_means, stability_of_means
from .registry import ImageManifest, ImageSpec, RegistryState, commit

ZERO = ResourceVector()
NETWORK = RESOURCES.index(ResourceKind.NETWORK)


class Phase(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    MIGRATING = "migrating"
    DONE = "done"


@dataclass
class ContainerState:
    spec: ContainerSpec
    phase: Phase = Phase.PENDING
    host: int | None = None
    work: float = 0.0
    ran_ticks: int = 0
    samples: list[tuple[int, ResourceVector]] = field(default_factory=list)
    delivered: ResourceVector = ZERO
    throughput: float = 0.0
    dropped: float = 0.0
    target: int | None = None
    resume_tick: int | None = None
    migrations: int = 0
    finished_tick: int | None = None

    @property
    def bytes_written(self) -> int:
        return self.spec.fs_write_bytes_per_tick * self.ran_ticks

    def profile(self) -> ContainerProfile:
        return ContainerProfile(self.spec.container_id, tuple(self.samples), self.host)


@dataclass(frozen=True)
class ContainerTick:
    container_id: str
    node: int
    delivered: ResourceVector
    throughput: float
    dropped: float


@dataclass(frozen=True)
class TickReport:
    tick: int
    containers: tuple[ContainerTick, ...]
    node_utilization: tuple[ResourceVector, ...]
    stability: float
    migrating: tuple[str, ...] = ()

    @property
    def total_throughput(self) -> float:
        return sum(c.throughput for c in self.containers)


class World:
    """Mutable cluster state owned by one simulation run."""

    def __init__(
        self,
        nodes: Sequence[NodeSpec],
        specs: Sequence[ContainerSpec],
        *,
        images: Mapping[str, ImageSpec] | None = None,
        params: ContentionParams = ContentionParams(),
        profiling_interval: int = 5,
        strategy: Strategy | str = Strategy.SPREAD,
        seed: int = 0,
        registry: RegistryState | None = None,
        node_layers: Mapping[int, set[str]] | None = None,
        approach: int = 2,
        link_bandwidth: float = GIGABIT_PER_SECOND,
        checkpoint: CheckpointModel = CheckpointModel(),
        fs: FsSyncModel = FsSyncModel(),
        cost_tables: Mapping[str, Mapping[str, float]] | None = None,
    ):
        if profiling_interval < 1:
            raise InvalidConfig("profiling_interval must be >= 1")
        self.nodes = tuple(sorted(nodes, key=lambda n: n.node_id))
        if [n.node_id for n in self.nodes] != list(range(len(self.nodes))):
            raise InvalidConfig("node ids must be dense: 0..N-1")
        strategy = Strategy(strategy)
        if strategy is Strategy.CBALANCER:
            raise InvalidConfig("initial placement needs a baseline strategy")
        self.strategy = strategy
        self.params = params
        self.profiling_interval = profiling_interval
        self.rng = np.random.default_rng(seed)
        self.images = dict(images or {})
        self._manifests: dict[str, ImageManifest] = {}
        self.registry = registry if registry is not None else RegistryState()
        self.node_layers = {n.node_id: set() for n in self.nodes}
        for node_id, layers in (node_layers or {}).items():
            self.node_layers[node_id].update(layers)
        self.approach = approach
        self.link_bandwidth = link_bandwidth
        self.checkpoint = checkpoint
        self.fs = fs
        self.cost_tables = dict(cost_tables or {})

        self.containers: dict[str, ContainerState] = {}
        for spec in specs:
            if spec.container_id in self.containers:
                raise InvalidConfig(f"duplicate container id {spec.container_id}")
            self.containers[spec.container_id] = ContainerState(spec)
        # Launch order: arrival tick, then declaration order.
        self._pending = sorted(self.containers.values(), key=lambda c: c.spec.arrival_tick)
        self.migration_log: list[tuple[int, MigrationRecord]] = []
        self.tick = -1

    # -- queries ---------------------------------------------------------

    def running_on(self, node_id: int) -> list[ContainerState]:
        return [c for c in self.containers.values() if c.phase is Phase.RUNNING and c.host == node_id]

    def node_loads(self) -> list[NodeLoad]:
        loads = {n.node_id: NodeLoad(n.node_id, n.capacity) for n in self.nodes}
        for c in self.containers.values():
            if c.phase is Phase.RUNNING:
                entry = loads[c.host]
                entry.active += 1
                entry.load = entry.load + c.spec.demand
        return [loads[n.node_id] for n in self.nodes]

    def placement(self) -> dict[str, int]:
        return {cid: c.host for cid, c in self.containers.items() if c.phase is Phase.RUNNING}

    def finished(self) -> bool:
        return all(c.phase is Phase.DONE for c in self.containers.values())

    def manifest(self, image_ref: str) -> ImageManifest:
        if image_ref not in self._manifests:
            try:
                self._manifests[image_ref] = self.images[image_ref].manifest()
            except KeyError:
                raise UnknownImage(f"image {image_ref!r} is not defined") from None
        return self._manifests[image_ref]

    # -- tick halves -----------------------------------------------------

    def begin_tick(self, tick: int) -> None:
        self.tick = tick
        for c in self.containers.values():
            if c.phase is Phase.MIGRATING and c.resume_tick <= tick:
                c.phase, c.host = Phase.RUNNING, c.target
                c.target = c.resume_tick = None
        while self._pending and self._pending[0].spec.arrival_tick <= tick:
            c = self._pending.pop(0)
            node = schedule_baseline(self.strategy, c.spec, self.node_loads(), self.rng)
            c.phase, c.host = Phase.RUNNING, node
            if c.spec.image_ref in self.images:
                self.node_layers[node].update(self.manifest(c.spec.image_ref).digests)

    def advance(self, tick: int) -> TickReport:
        running = [c for c in self.containers.values() if c.phase is Phase.RUNNING]
        by_node: dict[int, list[ContainerState]] = {n.node_id: [] for n in self.nodes}
        for c in running:
            by_node[c.host].append(c)

        node_util = []
        for node in self.nodes:
            group = by_node[node.node_id]
            if not group:
                node_util.append(ZERO)
                continue
            demand = np.array([c.spec.demand.as_array() for c in group])
            capacity = node.capacity.as_array()
            delivered = np.empty_like(demand)
            for r in range(N_RESOURCES):
                delivered[:, r] = delivered_share(demand[:, r], capacity[r])
            over = overcommit(ResourceVector.from_array(demand.sum(axis=0)), node.capacity)
            for c, row in zip(group, delivered):
                c.delivered = ResourceVector.from_array(row)
                c.throughput = container_throughput(c.spec, c.delivered, over, self.params)
                c.dropped = dropped_fraction(over.network) if c.spec.demand.network > 0 else 0.0
            node_util.append(ResourceVector.from_array(delivered.sum(axis=0)))

        if running:
            util = np.array([c.delivered.as_array() for c in running])
            hosts = np.array([c.host for c in running], dtype=np.int64)
            s = float(stability_of_means(node_means(util, hosts, len(self.nodes))))
        else:
            s = 0.0

        sample = tick % self.profiling_interval == 0
        entries = []
        for c in running:
            c.work += c.throughput
            c.ran_ticks += 1
            if sample:
                c.samples.append((tick, c.delivered))
            entries.append(ContainerTick(c.spec.container_id, c.host, c.delivered, c.throughput, c.dropped))

        report = TickReport(
            tick=tick,
            containers=tuple(entries),
            node_utilization=tuple(node_util),
            stability=s,
            migrating=tuple(cid for cid, c in self.containers.items() if c.phase is Phase.MIGRATING),
        )
        for c in running:
            if c.ran_ticks >= c.spec.duration_ticks:
                c.phase, c.host, c.finished_tick = Phase.DONE, None, tick
                c.delivered, c.throughput, c.dropped = ZERO, 0.0, 0.0
        return report

    def step(self, tick: int) -> TickReport:
        self.begin_tick(tick)
        return self.advance(tick)

    # -- migration -------------------------------------------------------

    def plan(self, container_id: str, target: int) -> MigrationRecord:
        try:
            c = self.containers[container_id]
        except KeyError:
            raise UnknownContainer(f"no container {container_id!r}") from None
        if c.phase is not Phase.RUNNING:
            raise ContainerVanished(f"{container_id} is {c.phase.value}, not running")
        if target not in self.node_layers:
            raise UnknownNode(f"no node {target}")
        if target == c.host:
            raise SameNode(f"{container_id} already runs on node {target}")
        # Checkpointing stops the container before its file system is committed.
        manifest = commit(self.manifest(c.spec.image_ref), container_id, c.bytes_written, running=False)
        return plan_migration(
            c.spec,
            c.host,
            target,
            self.approach,
            manifest=manifest,
            registry=self.registry,
            target_layers=self.node_layers[target],
            link_bandwidth=self.link_bandwidth,
            checkpoint=self.checkpoint,
            fs=self.fs,
            cost_table=self.cost_tables.get(c.spec.image_ref),
        )

    def migrate(self, container_id: str, target: int, tick: int | None = None) -> MigrationRecord:
        """Plan and start a migration; the container stops immediately."""
        record = self.plan(container_id, target)
        execute_migration(record, self, self.tick if tick is None else tick)
        return record

    def apply_migration(self, record: MigrationRecord, tick: int) -> None:
        c = self.containers.get(record.container_id)
        if c is None or c.phase is not Phase.RUNNING or c.host != record.source:
            raise ContainerVanished(f"{record.container_id} is no longer running on node {record.source}")
        c.phase, c.host = Phase.MIGRATING, None
        c.target, c.resume_tick = record.target, tick + record.downtime_ticks
        c.delivered, c.throughput, c.dropped = ZERO, 0.0, 0.0
        c.migrations += 1
        if record.approach == 2 and record.manifest is not None:
            self.registry.push(record.manifest)
            self.node_layers[record.target].update(layer.digest for layer in record.manifest.all_layers())
        self.migration_log.append((tick, record))
