"""Experiment orchestration: single runs, alpha sweeps and strategy
comparisons, plus their report serializations.

Run reports are JSON lines (one record per line, keys sorted) so that two
runs with the same scenario and seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .contention import Strategy
from .control import Bus, Manager, Worker, min_invoke_ticks
from .errors import InvalidConfig
from .migration import MigrationRecord
from .objective import DEFAULT_ALPHA
from .registry import RegistryState, preload
from .scenario import Scenario
from .simulator import TickReport, World


@dataclass(frozen=True)
class TickRow:
    tick: int
    stability: float
    throughput: float
    running: int
    migrating: int
    dropped: float


@dataclass(frozen=True)
class ContainerRow:
    container_id: str
    workload_class: str
    bogo_ops: float
    ran_ticks: int
    finished_tick: int | None
    migrations: int


@dataclass(frozen=True)
class Summary:
    mean_stability: float
    total_bogo_ops: float
    migrations: int
    bytes_checkpoint: int
    bytes_fs: int
    mean_dropped: float
    ticks: int
    window: int

    @property
    def bytes_moved(self) -> int:
        return self.bytes_checkpoint + self.bytes_fs


@dataclass(frozen=True)
class RunReport:
    scenario: str
    strategy: str
    seed: int
    alpha: float
    alpha_convention: str
    ticks: tuple[TickRow, ...]
    containers: tuple[ContainerRow, ...]
    migrations: tuple[tuple[int, MigrationRecord], ...]
    summary: Summary
    optimizer_rounds: int = 0
    skipped_rounds: int = 0
    ignored_commands: int = 0

    def to_jsonl(self) -> str:
        lines = [
            {
                "record": "run",
                "scenario": self.scenario,
                "strategy": self.strategy,
                "seed": self.seed,
                "alpha": self.alpha,
                "alpha_convention": self.alpha_convention,
                "window": self.summary.window,
            }
        ]
        lines += [{"record": "tick", **vars(row)} for row in self.ticks]
        lines += [{"record": "container", **vars(row)} for row in self.containers]
        lines += [{"record": "migration", "tick": tick, **m.as_dict()} for tick, m in self.migrations]
        lines.append(
            {
                "record": "summary",
                **vars(self.summary),
                "bytes_moved": self.summary.bytes_moved,
                "optimizer_rounds": self.optimizer_rounds,
                "skipped_rounds": self.skipped_rounds,
                "ignored_commands": self.ignored_commands,
            }
        )
        return "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines)


def summarize(ticks: Sequence[TickRow], containers: Sequence[ContainerRow], migrations, window: int) -> Summary:
    """Summary statistics, computed only from the per-tick and per-record streams.

    Mean stability covers the nominal window (ticks before the last
    scheduled completion) so runs of different lengths stay comparable.
    """
    in_window = [t.stability for t in ticks if t.tick < window] or [0.0]
    dropped = [t.dropped for t in ticks if t.tick < window] or [0.0]
    return Summary(
        mean_stability=math.fsum(in_window) / len(in_window),
        total_bogo_ops=math.fsum(c.bogo_ops for c in containers),
        migrations=len(migrations),
        bytes_checkpoint=sum(m.bytes_checkpoint_compressed for _, m in migrations),
        bytes_fs=sum(m.bytes_fs_transferred for _, m in migrations),
        mean_dropped=math.fsum(dropped) / len(dropped),
        ticks=len(ticks),
        window=window,
    )


def _tick_row(report: TickReport, network_ids: set[str]) -> TickRow:
    drops = [c.dropped for c in report.containers if c.container_id in network_ids]
    return TickRow(
        tick=report.tick,
        stability=report.stability,
        throughput=math.fsum(c.throughput for c in report.containers),
        running=len(report.containers),
        migrating=len(report.migrating),
        dropped=math.fsum(drops) / len(drops) if drops else 0.0,
    )


def round_seed(seed: int, round_index: int) -> int:
    return int(np.random.SeedSequence([seed, round_index]).generate_state(1)[0])


def build_world(scenario: Scenario) -> World:
    registry = RegistryState()
    preload(registry, [scenario.images[ref] for ref in scenario.registry_preload])
    node_layers = {}
    if scenario.node_preload:
        digests = set()
        for ref in scenario.node_preload:
            digests.update(scenario.images[ref].manifest().digests)
        node_layers = {n.node_id: set(digests) for n in scenario.nodes}
    initial = scenario.strategy if scenario.strategy is not Strategy.CBALANCER else scenario.initial_strategy
    return World(
        scenario.nodes,
        scenario.containers(),
        images=scenario.images,
        params=scenario.contention,
        profiling_interval=scenario.profiling_interval,
        strategy=initial,
        seed=scenario.seed,
        registry=registry,
        node_layers=node_layers,
        approach=scenario.approach,
        link_bandwidth=scenario.link_bandwidth,
        checkpoint=scenario.checkpoint,
        fs=scenario.fs_sync,
        cost_tables=scenario.cost_tables,
    )


def run(scenario: Scenario) -> RunReport:
    world = build_world(scenario)
    rebalance = scenario.strategy is Strategy.CBALANCER
    workers: list[Worker] = []
    manager = None
    if rebalance:
        bus = Bus()
        workers = [Worker(n.node_id, bus, world, scenario.profiling_interval) for n in scenario.nodes]
        manager = Manager(
            bus,
            list(scenario.nodes),
            replace(scenario.ga, weights=scenario.weights),
            scenario.invoke_every,
            profiling_interval=scenario.profiling_interval,
            start_tick=scenario.start_tick,
            min_invoke_ticks=min_invoke_ticks(world),
            seed_for_round=lambda j: round_seed(scenario.seed, j),
        )

    network_ids = {cid for cid, c in world.containers.items() if c.spec.demand.network > 0}
    rows: list[TickRow] = []
    for tick in range(scenario.horizon):
        world.begin_tick(tick)
        if manager is not None:
            manager.on_tick(tick)
            for worker in workers:
                worker.handle_commands(tick)
        report = world.advance(tick)
        for worker in workers:
            worker.publish_stats(tick)
        rows.append(_tick_row(report, network_ids))
        if world.finished():
            break

    containers = tuple(
        ContainerRow(
            container_id=cid,
            workload_class=c.spec.workload_class,
            bogo_ops=c.work,
            ran_ticks=c.ran_ticks,
            finished_tick=c.finished_tick,
            migrations=c.migrations,
        )
        for cid, c in sorted(world.containers.items())
    )
    migrations = tuple(world.migration_log)
    return RunReport(
        scenario=scenario.name,
        strategy=scenario.strategy.value,
        seed=scenario.seed,
        alpha=scenario.alpha,
        alpha_convention=scenario.alpha_convention.value,
        ticks=tuple(rows),
        containers=containers,
        migrations=migrations,
        summary=summarize(rows, containers, migrations, scenario.window),
        optimizer_rounds=len(manager.rounds) if manager else 0,
        skipped_rounds=manager.skipped_rounds if manager else 0,
        ignored_commands=sum(len(w.ignored) for w in workers),
    )


# -- sweeps and comparisons ----------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    mean_stability: float
    migrations: int
    migrations_normalized: float
    is_default: bool


def alpha_sweep(scenario: Scenario, alphas: Sequence[float]) -> list[SweepRow]:
    """One rebalanced run per alpha, same seed; rows sorted by alpha.

    Migration counts are normalized by the largest count in the sweep.
    """
    alphas = sorted({float(a) for a in alphas})
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise InvalidConfig("alphas must lie in [0, 1]")
    base = replace(scenario, strategy=Strategy.CBALANCER)
    results = [(a, run(replace(base, alpha=a)).summary) for a in alphas]
    peak = max((s.migrations for _, s in results), default=0)
    return [
        SweepRow(
            alpha=a,
            mean_stability=s.mean_stability,
            migrations=s.migrations,
            migrations_normalized=s.migrations / peak if peak else 0.0,
            is_default=math.isclose(a, DEFAULT_ALPHA),
        )
        for a, s in results
    ]


COMPARE_METRICS = ("total_bogo_ops", "mean_stability", "migrations", "bytes_moved", "mean_dropped")


@dataclass(frozen=True)
class CompareRow:
    strategy: str
    values: dict
    deltas: dict


def _pct_delta(value: float, reference: float) -> float | None:
    if reference == 0:
        return 0.0 if value == 0 else None
    return 100.0 * (value - reference) / reference


def compare(scenario: Scenario, strategies: Sequence[str]) -> list[CompareRow]:
    """Run each strategy on the same scenario and seed; deltas are percent
    changes against the first strategy."""
    if len(strategies) < 2:
        raise InvalidConfig("compare needs at least two strategies")
    summaries = []
    for name in strategies:
        s = run(replace(scenario, strategy=Strategy(name))).summary
        summaries.append((Strategy(name).value, {m: getattr(s, m) for m in COMPARE_METRICS}))
    reference = summaries[0][1]
    return [
        CompareRow(name, values, {m: _pct_delta(values[m], reference[m]) for m in COMPARE_METRICS})
        for name, values in summaries
    ]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["alpha", "mean_stability", "migrations", "migrations_normalized", "default"])
    for r in rows:
        writer.writerow([_fmt(r.alpha), _fmt(r.mean_stability), r.migrations, _fmt(r.migrations_normalized), _fmt(r.is_default)])
    return out.getvalue()


def compare_csv(rows: Sequence[CompareRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["strategy", *COMPARE_METRICS, *(f"{m}_delta_pct" for m in COMPARE_METRICS)])
    for r in rows:
        writer.writerow([r.strategy, *(_fmt(r.values[m]) for m in COMPARE_METRICS), *(_fmt(r.deltas[m]) for m in COMPARE_METRICS)])
    return out.getvalue()
