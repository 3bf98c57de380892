"""Scenario files: TOML documents describing a cluster, its workload and
every tunable. See ``docs/formats.md`` for the full schema.

Workload entries refer to *classes* defined in the bundled
``presets.toml``; any preset field may be overridden per entry. Images come
from the bundled ``images.toml`` catalog plus any ``[[images]]`` tables in
the scenario itself.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .contention import BASELINES, DEFAULT_GAMMA, ContentionParams, Strategy
from .core import RESOURCES, ContainerSpec, NodeSpec, ResourceVector
from .errors import CBalancerError, ParseError, ValidationError
from .ga import GaConfig
from .migration import GIGABIT_PER_SECOND, CheckpointModel, FsSyncModel, load_cost_table
from .objective import AlphaConvention, ObjectiveWeights
from .registry import DEFAULT_INIT_BYTES, ImageSpec

TOP_KEYS = {
    "name", "seed", "strategy", "initial_strategy", "alpha", "alpha_convention", "max_ticks",
    "cluster", "control", "migration", "contention", "ga", "registry", "images", "workload",
}


@dataclass(frozen=True)
class WorkloadClass:
    name: str
    category: str
    image: str
    demand: ResourceVector
    base_throughput: float
    footprint_static: int = 0
    footprint_per_thread: int = 0
    fs_write_bytes_per_tick: int = 0


@dataclass(frozen=True)
class WorkloadEntry:
    workload_class: str
    image: str
    replicas: int
    arrival_tick: int
    duration: int
    demand: ResourceVector
    memory_footprint: int
    threads: int
    base_throughput: float
    fs_write_bytes_per_tick: int


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[NodeSpec, ...]
    workload: tuple[WorkloadEntry, ...]
    images: Mapping[str, ImageSpec]
    seed: int = 0
    strategy: Strategy = Strategy.SPREAD
    initial_strategy: Strategy = Strategy.SPREAD
    alpha: float = 0.85
    alpha_convention: AlphaConvention = AlphaConvention.FORMULA
    max_ticks: int | None = None
    profiling_interval: int = 5
    invoke_every: int = 60
    start_tick: int | None = None
    approach: int = 2
    link_bandwidth: float = GIGABIT_PER_SECOND
    checkpoint: CheckpointModel = CheckpointModel()
    fs_sync: FsSyncModel = FsSyncModel()
    cost_tables: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    contention: ContentionParams = ContentionParams()
    ga: GaConfig = GaConfig()
    registry_preload: tuple[str, ...] = ()
    node_preload: tuple[str, ...] = ()

    @property
    def weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(self.alpha, self.alpha_convention)

    @property
    def window(self) -> int:
        """Nominal experiment length: last arrival plus its duration."""
        return max((w.arrival_tick + w.duration for w in self.workload), default=0)

    @property
    def horizon(self) -> int:
        if self.max_ticks is not None:
            return self.max_ticks
        return self.window + max(self.window, 60)

    def containers(self) -> list[ContainerSpec]:
        specs = []
        for i, entry in enumerate(self.workload):
            for r in range(entry.replicas):
                specs.append(
                    ContainerSpec(
                        container_id=f"w{i:02d}-{entry.workload_class}-{r:02d}",
                        image_ref=entry.image,
                        demand=entry.demand,
                        memory_footprint_bytes=entry.memory_footprint,
                        base_throughput=entry.base_throughput,
                        duration_ticks=entry.duration,
                        arrival_tick=entry.arrival_tick,
                        thread_count=entry.threads,
                        fs_write_bytes_per_tick=entry.fs_write_bytes_per_tick,
                        workload_class=entry.workload_class,
                    )
                )
        return specs

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        alpha: float | None = None,
        strategy: str | None = None,
        alpha_convention: str | None = None,
    ) -> Scenario:
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if alpha is not None:
            ObjectiveWeights(alpha)
            changes["alpha"] = float(alpha)
        if strategy is not None:
            changes["strategy"] = Strategy(strategy)
        if alpha_convention is not None:
            changes["alpha_convention"] = AlphaConvention(alpha_convention)
        return replace(self, **changes)


# -- bundled calibration data --------------------------------------------


def _read_bundled(name: str) -> dict:
    text = resources.files("cbalancer.data").joinpath(name).read_text()
    return tomllib.loads(text)


def load_presets() -> dict[str, WorkloadClass]:
    doc = _read_bundled("presets.toml")
    out = {}
    for name, raw in doc["classes"].items():
        out[name] = WorkloadClass(
            name=name,
            category=raw["category"],
            image=raw["image"],
            demand=ResourceVector.from_mapping(raw.get("demand", {})),
            base_throughput=float(raw["base_throughput"]),
            footprint_static=int(raw.get("footprint_static", 0)),
            footprint_per_thread=int(raw.get("footprint_per_thread", 0)),
            fs_write_bytes_per_tick=int(raw.get("fs_write_bytes_per_tick", 0)),
        )
    return out


def _image_spec(raw: Mapping, where: str) -> ImageSpec:
    _only(raw, {"ref", "layers", "init_bytes"}, where)
    ref = _req(raw, "ref", str, where)
    layers = _req(raw, "layers", list, where)
    if not layers:
        raise ValidationError(f"{where}.layers: an image needs at least one layer")
    parsed = []
    for j, layer in enumerate(layers):
        lw = f"{where}.layers[{j}]"
        if not isinstance(layer, Mapping):
            raise ValidationError(f"{lw}: expected a table with content and size")
        _only(layer, {"content", "size"}, lw)
        size = _req(layer, "size", int, lw)
        if size <= 0:
            raise ValidationError(f"{lw}.size: must be positive")
        parsed.append((_req(layer, "content", str, lw), size))
    init = _opt(raw, "init_bytes", int, where, DEFAULT_INIT_BYTES)
    if init <= 0:
        raise ValidationError(f"{where}.init_bytes: must be positive")
    return ImageSpec(ref, tuple(parsed), init)


def load_image_catalog() -> dict[str, ImageSpec]:
    doc = _read_bundled("images.toml")
    return {raw["ref"]: _image_spec(raw, f"images[{i}]") for i, raw in enumerate(doc["images"])}


def bundled_scenarios() -> list[str]:
    root = resources.files("cbalancer.data").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_scenario_path(name: str) -> Path:
    return Path(str(resources.files("cbalancer.data").joinpath("scenarios", f"{name}.toml")))


# -- field helpers -------------------------------------------------------


def _type_name(kind) -> str:
    return {int: "an integer", float: "a number", str: "a string", list: "an array", dict: "a table"}.get(
        kind, kind.__name__
    )


def _coerce(value, kind, where):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        if not math.isfinite(value):
            raise ValidationError(f"{where}: must be finite")
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (str, list, dict) and isinstance(value, kind):
        return value
    raise ValidationError(f"{where}: expected {_type_name(kind)}, got {value!r}")


def _req(raw: Mapping, key: str, kind, where: str):
    if key not in raw:
        raise ValidationError(f"{where}.{key}: required field missing")
    return _coerce(raw[key], kind, f"{where}.{key}")


def _opt(raw: Mapping, key: str, kind, where: str, default):
    if key not in raw:
        return default
    return _coerce(raw[key], kind, f"{where}.{key}")


def _only(raw: Mapping, allowed: set[str], where: str) -> None:
    extra = sorted(set(raw) - allowed)
    if extra:
        raise ValidationError(f"{where}: unknown field(s) {', '.join(extra)}")


def _table(raw: Mapping, key: str, where: str) -> dict:
    return _opt(raw, key, dict, where, {})


def _resource_vector(raw, where: str, base: ResourceVector | None = None) -> ResourceVector:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"{where}: expected a table of resource values")
    _only(raw, {k.value for k in RESOURCES}, where)
    values = base.as_dict() if base is not None else {}
    for key, value in raw.items():
        values[key] = _coerce(value, float, f"{where}.{key}")
        if values[key] < 0:
            raise ValidationError(f"{where}.{key}: must be >= 0")
    return ResourceVector.from_mapping(values)


def _enum(enum_cls, value, where):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ValidationError(f"{where}: {value!r} is not one of {choices}") from None


def _dataclass_from(cls, raw: Mapping, where: str, kinds: Mapping[str, type], extra=None):
    _only(raw, set(kinds), where)
    kwargs = {key: _coerce(value, kinds[key], f"{where}.{key}") for key, value in raw.items()}
    kwargs.update(extra or {})
    try:
        return cls(**kwargs)
    except CBalancerError as exc:
        raise ValidationError(f"{where}: {exc}") from None


# -- scenario parsing ----------------------------------------------------


def parse_scenario(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None
    return scenario_from_dict(doc, source, base_dir)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read scenario ({exc.strerror})") from None
    return parse_scenario(text, str(path), path.parent)


def scenario_from_dict(doc: Mapping, source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    w = source
    _only(doc, TOP_KEYS, w)
    presets = load_presets()
    images = load_image_catalog()
    for i, raw in enumerate(_opt(doc, "images", list, w, [])):
        if not isinstance(raw, Mapping):
            raise ValidationError(f"{w}.images[{i}]: expected a table")
        spec = _image_spec(raw, f"{w}.images[{i}]")
        images[spec.ref] = spec

    cluster = _table(doc, "cluster", w)
    _only(cluster, {"nodes", "capacity"}, f"{w}.cluster")
    n_nodes = _req(cluster, "nodes", int, f"{w}.cluster")
    if n_nodes < 1:
        raise ValidationError(f"{w}.cluster.nodes: need at least one node")
    capacity = _resource_vector(cluster.get("capacity", {}), f"{w}.cluster.capacity", ResourceVector.filled(1.0))
    if any(v <= 0 for v in capacity):
        raise ValidationError(f"{w}.cluster.capacity: every resource needs positive capacity")
    nodes = tuple(NodeSpec(i, capacity) for i in range(n_nodes))

    workload = []
    raw_workload = _opt(doc, "workload", list, w, [])
    if not raw_workload:
        raise ValidationError(f"{w}.workload: at least one workload entry is required")
    for i, raw in enumerate(raw_workload):
        workload.append(_workload_entry(raw, f"{w}.workload[{i}]", presets, images))

    control = _table(doc, "control", w)
    _only(control, {"profiling_interval", "invoke_every", "start_tick"}, f"{w}.control")
    profiling_interval = _opt(control, "profiling_interval", int, f"{w}.control", 5)
    invoke_every = _opt(control, "invoke_every", int, f"{w}.control", 60)
    start_tick = _opt(control, "start_tick", int, f"{w}.control", None)
    if profiling_interval < 1 or invoke_every < 1 or (start_tick is not None and start_tick < 0):
        raise ValidationError(f"{w}.control: intervals must be >= 1 and start_tick >= 0")

    migration = _table(doc, "migration", w)
    mw = f"{w}.migration"
    _only(migration, {"approach", "link_bandwidth", "cost_table", "checkpoint", "fs"}, mw)
    approach = _opt(migration, "approach", int, mw, 2)
    if approach not in (1, 2):
        raise ValidationError(f"{mw}.approach: must be 1 or 2")
    link_bandwidth = _opt(migration, "link_bandwidth", float, mw, float(GIGABIT_PER_SECOND))
    if link_bandwidth <= 0:
        raise ValidationError(f"{mw}.link_bandwidth: must be positive")
    checkpoint = _dataclass_from(
        CheckpointModel, _table(migration, "checkpoint", mw), f"{mw}.checkpoint",
        {"base_bytes": int, "bytes_per_memory_byte": float, "compression_ratio": float,
         "dump_bandwidth": float, "restore_bandwidth": float, "compress_bandwidth": float,
         "extract_bandwidth": float},
    )
    fs_sync = _dataclass_from(
        FsSyncModel, _table(migration, "fs", mw), f"{mw}.fs",
        {"archive_bandwidth": float, "commit_overhead": float, "layer_overhead": float,
         "create_container_seconds": float, "request_latency": float, "metadata_bytes": int},
    )
    cost_tables = {}
    if "cost_table" in migration:
        ref = _coerce(migration["cost_table"], str, f"{mw}.cost_table")
        path = None if ref == "bundled" else Path(ref)
        if path is not None and not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            cost_tables = load_cost_table(path)
        except OSError as exc:
            raise ValidationError(f"{mw}.cost_table: cannot read {path} ({exc.strerror})") from None

    contention = _table(doc, "contention", w)
    _only(contention, {"gamma"}, f"{w}.contention")
    gamma = _resource_vector(contention.get("gamma", {}), f"{w}.contention.gamma", DEFAULT_GAMMA)

    alpha = _opt(doc, "alpha", float, w, 0.85)
    convention = _enum(AlphaConvention, _opt(doc, "alpha_convention", str, w, "formula"), f"{w}.alpha_convention")
    try:
        weights = ObjectiveWeights(alpha, convention)
    except CBalancerError as exc:
        raise ValidationError(f"{w}.alpha: {exc}") from None
    ga = _dataclass_from(
        GaConfig, _table(doc, "ga", w), f"{w}.ga",
        {"population_size": int, "generations": int, "crossover_prob": float, "mutation_prob": float,
         "elitism_count": int, "tournament_size": int, "seed": int},
        extra={"weights": weights},
    )

    registry = _table(doc, "registry", w)
    _only(registry, {"preload", "node_preload"}, f"{w}.registry")
    preload = tuple(_opt(registry, "preload", list, f"{w}.registry", []))
    node_preload = tuple(_opt(registry, "node_preload", list, f"{w}.registry", []))
    for ref in preload + node_preload:
        if ref not in images:
            raise ValidationError(f"{w}.registry: undefined image {ref!r}")

    strategy = _enum(Strategy, _opt(doc, "strategy", str, w, "spread"), f"{w}.strategy")
    initial = _enum(Strategy, _opt(doc, "initial_strategy", str, w, "spread"), f"{w}.initial_strategy")
    if initial not in BASELINES:
        raise ValidationError(f"{w}.initial_strategy: must be a baseline (spread, binpack, random)")
    seed = _opt(doc, "seed", int, w, 0)
    if seed < 0:
        raise ValidationError(f"{w}.seed: must be >= 0")
    max_ticks = _opt(doc, "max_ticks", int, w, None)
    if max_ticks is not None and max_ticks < 1:
        raise ValidationError(f"{w}.max_ticks: must be >= 1")

    return Scenario(
        name=_opt(doc, "name", str, w, Path(source).stem),
        nodes=nodes,
        workload=tuple(workload),
        images=images,
        seed=seed,
        strategy=strategy,
        initial_strategy=initial,
        alpha=alpha,
        alpha_convention=convention,
        max_ticks=max_ticks,
        profiling_interval=profiling_interval,
        invoke_every=invoke_every,
        start_tick=start_tick,
        approach=approach,
        link_bandwidth=link_bandwidth,
        checkpoint=checkpoint,
        fs_sync=fs_sync,
        cost_tables=cost_tables,
        contention=ContentionParams(gamma),
        ga=ga,
        registry_preload=preload,
        node_preload=node_preload,
    )


WORKLOAD_KEYS = {
    "class", "image", "replicas", "arrival_tick", "duration", "demand", "threads",
    "memory_footprint", "base_throughput", "fs_write_bytes_per_tick", "volumes",
}


def _workload_entry(raw, where: str, presets: Mapping[str, WorkloadClass], images) -> WorkloadEntry:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"{where}: expected a table")
    _only(raw, WORKLOAD_KEYS, where)
    if raw.get("volumes"):
        raise ValidationError(f"{where}.volumes: mounted volumes cannot be migrated")
    name = _req(raw, "class", str, where)
    if name not in presets:
        raise ValidationError(f"{where}.class: unknown workload class {name!r}")
    preset = presets[name]
    image = _opt(raw, "image", str, where, preset.image)
    if image not in images:
        raise ValidationError(f"{where}.image: undefined image_ref {image!r}")
    replicas = _opt(raw, "replicas", int, where, 1)
    if replicas < 1:
        raise ValidationError(f"{where}.replicas: must be >= 1")
    threads = _opt(raw, "threads", int, where, 1)
    duration = _opt(raw, "duration", int, where, 120)
    arrival = _opt(raw, "arrival_tick", int, where, 0)
    if threads < 1 or duration < 1 or arrival < 0:
        raise ValidationError(f"{where}: threads and duration must be >= 1, arrival_tick >= 0")
    demand = _resource_vector(raw.get("demand", {}), f"{where}.demand", preset.demand)
    footprint = _opt(
        raw, "memory_footprint", int, where, preset.footprint_static + threads * preset.footprint_per_thread
    )
    throughput = _opt(raw, "base_throughput", float, where, preset.base_throughput)
    writes = _opt(raw, "fs_write_bytes_per_tick", int, where, preset.fs_write_bytes_per_tick)
    if footprint < 0 or throughput <= 0 or writes < 0:
        raise ValidationError(f"{where}: footprint and writes must be >= 0, base_throughput > 0")
    return WorkloadEntry(
        workload_class=name,
        image=image,
        replicas=replicas,
        arrival_tick=arrival,
        duration=duration,
        demand=demand,
        memory_footprint=footprint,
        threads=threads,
        base_throughput=throughput,
        fs_write_bytes_per_tick=writes,
    )
