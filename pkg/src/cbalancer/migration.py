"""Container migration: checkpoint sizing, per-phase cost accounting for
both file-system synchronization approaches, and calibration cost tables.

Approach 1 exports the whole container file system as one archive and
imports it on the target. Approach 2 commits the container, pushes the
layers the registry lacks, and pulls the layers the target lacks.

Durations are in seconds and byte counts are exact integers. Downtime runs
from the start of checkpointing to the end of restore.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping

from .core import ContainerSpec
from .errors import InvalidConfig, ParseError, SameNode
from .registry import MiB, ImageManifest, RegistryState

if TYPE_CHECKING:
    from .simulator import World

GIGABIT_PER_SECOND = 125_000_000


class MigrationStep(Enum):
    INITIATE_REQUEST = "InitiateRequest"
    CREATE_CHECKPOINT = "CreateCheckpoint"
    COMPRESS_CHECKPOINT = "CompressCheckpoint"
    TRANSFER_CHECKPOINT = "TransferCheckpoint"
    SYNC_FILE_SYSTEM = "SyncFileSystem"
    TRANSFER_MODIFIED_FS = "TransferModifiedFs"
    CREATE_CONTAINER = "CreateContainer"
    RESTORE_CONTAINER = "RestoreContainer"


# Fine-grained phases, in execution order, and the step each belongs to.
PHASE_STEP = {
    "initiate_request": MigrationStep.INITIATE_REQUEST,
    "create_checkpoint": MigrationStep.CREATE_CHECKPOINT,
    "compress_checkpoint": MigrationStep.COMPRESS_CHECKPOINT,
    "transfer_checkpoint": MigrationStep.TRANSFER_CHECKPOINT,
    "extract_checkpoint": MigrationStep.TRANSFER_CHECKPOINT,
    "export": MigrationStep.SYNC_FILE_SYSTEM,
    "commit": MigrationStep.SYNC_FILE_SYSTEM,
    "push": MigrationStep.SYNC_FILE_SYSTEM,
    "transfer_archive": MigrationStep.TRANSFER_MODIFIED_FS,
    "import": MigrationStep.TRANSFER_MODIFIED_FS,
    "pull": MigrationStep.TRANSFER_MODIFIED_FS,
    "create_container": MigrationStep.CREATE_CONTAINER,
    "restore_container": MigrationStep.RESTORE_CONTAINER,
}
CHECKPOINT_PHASES = ("create_checkpoint", "compress_checkpoint", "transfer_checkpoint", "extract_checkpoint")
FS_PHASES = {1: ("export", "transfer_archive", "import"), 2: ("commit", "push", "pull")}
COST_TABLE_COLUMNS = (
    "create_checkpoint",
    "compress_checkpoint",
    "commit",
    "push",
    "transfer_checkpoint",
    "extract_checkpoint",
    "pull",
    "create_container",
    "restore_container",
)


@dataclass(frozen=True)
class CheckpointModel:
    base_bytes: int = 2 * MiB
    bytes_per_memory_byte: float = 1.0
    compression_ratio: float = 0.35
    dump_bandwidth: float = 200 * MiB
    restore_bandwidth: float = 200 * MiB
    compress_bandwidth: float = 400 * MiB
    extract_bandwidth: float = 800 * MiB

    def __post_init__(self):
        if self.base_bytes <= 0 or self.bytes_per_memory_byte <= 0:
            raise InvalidConfig("checkpoint sizes must be positive")
        if not 0 < self.compression_ratio <= 1:
            raise InvalidConfig("compression_ratio must lie in (0, 1]")
        for name in ("dump_bandwidth", "restore_bandwidth", "compress_bandwidth", "extract_bandwidth"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")


@dataclass(frozen=True)
class FsSyncModel:
    """Costs of the file-system side and fixed per-migration overheads."""

    archive_bandwidth: float = 50 * MiB
    commit_overhead: float = 1.5
    layer_overhead: float = 0.02
    create_container_seconds: float = 0.15
    request_latency: float = 0.005
    metadata_bytes: int = 16 * 1024

    def __post_init__(self):
        if self.archive_bandwidth <= 0:
            raise InvalidConfig("archive_bandwidth must be positive")
        if min(self.commit_overhead, self.layer_overhead, self.create_container_seconds, self.request_latency) < 0:
            raise InvalidConfig("overheads must be non-negative")


@dataclass(frozen=True)
class MigrationRecord:
    container_id: str
    source: int
    target: int
    approach: int
    phases: tuple[tuple[str, float], ...]
    bytes_checkpoint_raw: int
    bytes_checkpoint_compressed: int
    bytes_fs_transferred: int
    downtime: float
    total_time: float
    manifest: ImageManifest | None = field(default=None, compare=False, repr=False)

    @property
    def step_durations(self) -> dict[MigrationStep, float]:
        out = {step: 0.0 for step in MigrationStep}
        for name, seconds in self.phases:
            out[PHASE_STEP[name]] += seconds
        return out

    @property
    def phase_durations(self) -> dict[str, float]:
        return dict(self.phases)

    @property
    def downtime_ticks(self) -> int:
        return max(1, math.ceil(self.downtime - 1e-9))

    def as_dict(self) -> dict:
        return {
            "container_id": self.container_id,
            "source": self.source,
            "target": self.target,
            "approach": self.approach,
            "phases": dict(self.phases),
            "bytes_checkpoint_raw": self.bytes_checkpoint_raw,
            "bytes_checkpoint_compressed": self.bytes_checkpoint_compressed,
            "bytes_fs_transferred": self.bytes_fs_transferred,
            "downtime": self.downtime,
            "downtime_ticks": self.downtime_ticks,
            "total_time": self.total_time,
        }


def checkpoint_size(spec: ContainerSpec, model: CheckpointModel = CheckpointModel()) -> tuple[int, int]:
    """Uncompressed and compressed checkpoint size in bytes."""
    raw = model.base_bytes + math.ceil(model.bytes_per_memory_byte * spec.memory_footprint_bytes)
    return raw, math.ceil(raw * model.compression_ratio)


def fs_transfer_bytes(
    approach: int, manifest: ImageManifest, registry: RegistryState, target_layers: Iterable[str]
) -> tuple[int, int]:
    """Bytes moved by the sync phases: (first hop, second hop).

    Approach 1 sends the archive once. Approach 2 pushes the missing base
    layers plus the init layer, then pulls what the target lacks plus the
    init layer; the writable layer always travels.
    """
    if approach == 1:
        return manifest.image_bytes + manifest.init.size_bytes, 0
    have = set(target_layers)
    init = manifest.init.size_bytes
    push = init + sum(layer.size_bytes for layer in registry.missing(manifest.layers))
    pull = init + sum(layer.size_bytes for layer in manifest.layers if layer.digest not in have)
    return push, pull


def plan_migration(
    spec: ContainerSpec,
    source: int,
    target: int,
    approach: int,
    *,
    manifest: ImageManifest,
    registry: RegistryState,
    target_layers: Iterable[str] = (),
    link_bandwidth: float = GIGABIT_PER_SECOND,
    checkpoint: CheckpointModel = CheckpointModel(),
    fs: FsSyncModel = FsSyncModel(),
    cost_table: Mapping[str, float] | None = None,
) -> MigrationRecord:
    """Cost every phase of moving ``spec`` from ``source`` to ``target``.

    Pure: neither the registry nor the layer set is modified. With
    ``cost_table`` the listed phases take the tabulated seconds verbatim;
    phases it does not list are still modeled.
    """
    if source == target:
        raise SameNode(f"{spec.container_id}: source and target are both node {source}")
    if approach not in (1, 2):
        raise InvalidConfig(f"approach must be 1 or 2, got {approach}")
    if link_bandwidth <= 0:
        raise InvalidConfig("link_bandwidth must be positive")
    layers = set(target_layers)

    raw, compressed = checkpoint_size(spec, checkpoint)
    first, second = fs_transfer_bytes(approach, manifest, registry, layers)
    modeled = {
        "initiate_request": fs.request_latency + fs.metadata_bytes / link_bandwidth,
        "create_checkpoint": raw / checkpoint.dump_bandwidth,
        "compress_checkpoint": raw / checkpoint.compress_bandwidth,
        "transfer_checkpoint": compressed / link_bandwidth,
        "extract_checkpoint": raw / checkpoint.extract_bandwidth,
        "create_container": fs.create_container_seconds,
        "restore_container": raw / checkpoint.restore_bandwidth,
    }
    if approach == 1:
        modeled["export"] = first / fs.archive_bandwidth
        modeled["transfer_archive"] = first / link_bandwidth
        modeled["import"] = first / fs.archive_bandwidth
    else:
        pushed_layers = 1 + len(registry.missing(manifest.layers))
        pulled_layers = 1 + sum(1 for layer in manifest.layers if layer.digest not in layers)
        modeled["commit"] = fs.commit_overhead + manifest.init.size_bytes / fs.archive_bandwidth
        modeled["push"] = pushed_layers * fs.layer_overhead + first / link_bandwidth
        modeled["pull"] = pulled_layers * fs.layer_overhead + second / link_bandwidth

    order = ("initiate_request",) + CHECKPOINT_PHASES + FS_PHASES[approach] + ("create_container", "restore_container")
    table = cost_table or {}
    phases = tuple((name, float(table.get(name, modeled[name]))) for name in order)
    total = math.fsum(seconds for _, seconds in phases)
    downtime = math.fsum(seconds for name, seconds in phases if name != "initiate_request")
    return MigrationRecord(
        container_id=spec.container_id,
        source=source,
        target=target,
        approach=approach,
        phases=phases,
        bytes_checkpoint_raw=raw,
        bytes_checkpoint_compressed=compressed,
        bytes_fs_transferred=first + second,
        downtime=downtime,
        total_time=total,
        manifest=manifest,
    )


def execute_migration(record: MigrationRecord, world: World, tick: int) -> None:
    """Apply a planned migration to the simulated world.

    The container leaves its source immediately, keeps its accumulated work
    and remaining duration, and resumes on the target after
    ``record.downtime_ticks``. Raises :class:`ContainerVanished` without
    touching any state if the container is no longer running on the source.
    """
    world.apply_migration(record, tick)


def parse_cost_table(text: str, source: str = "<cost table>") -> dict[str, dict[str, float]]:
    """Parse a CSV cost table: an ``image`` column plus one column per phase."""
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames or "image" not in reader.fieldnames:
        raise ParseError(f"{source}: header must include an 'image' column")
    unknown = set(reader.fieldnames) - {"image"} - set(PHASE_STEP)
    if unknown:
        raise ParseError(f"{source}: unknown phase columns {sorted(unknown)}")
    table = {}
    for row in reader:
        line = reader.line_num
        image = (row.pop("image") or "").strip()
        if not image:
            raise ParseError(f"{source}:{line}: missing image name")
        entry = {}
        for name, value in row.items():
            if value is None or value.strip() == "":
                continue
            try:
                entry[name] = float(value)
            except ValueError:
                raise ParseError(f"{source}:{line}: field {name!r} is not a number: {value!r}") from None
            if entry[name] < 0:
                raise ParseError(f"{source}:{line}: field {name!r} is negative")
        table[image] = entry
    return table


def load_cost_table(path: str | Path | None = None) -> dict[str, dict[str, float]]:
    """Read a cost table file; ``None`` loads the bundled measurements."""
    if path is None:
        text = resources.files("cbalancer.data").joinpath("step_costs.csv").read_text()
        return parse_cost_table(text, "step_costs.csv")
    path = Path(path)
    return parse_cost_table(path.read_text(), str(path))
