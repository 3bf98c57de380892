"""Content-addressed image layer store.

Layers are identified by the SHA-256 of a synthetic content identifier,
so two images built from the same base content share digests. Push and
pull move exactly the layers the other side is missing; only sizes are
tracked, never bytes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContainerRunning, ParseError, UnknownImage, ValidationError

MiB = 1 << 20
DEFAULT_INIT_BYTES = 1 * MiB


def layer_digest(content_id: str) -> str:
    return hashlib.sha256(content_id.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Layer:
    digest: str
    size_bytes: int
    parent_digest: str | None = None

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValidationError(f"layer {self.digest[:12]} must have positive size")


@dataclass(frozen=True)
class ImageManifest:
    image_ref: str
    layers: tuple[Layer, ...]
    init: Layer

    def __post_init__(self):
        if not self.layers:
            raise ValidationError(f"{self.image_ref}: manifest needs at least one base layer")
        parent = None
        for layer in self.layers:
            if layer.parent_digest != parent:
                raise ValidationError(f"{self.image_ref}: broken parent chain at {layer.digest[:12]}")
            parent = layer.digest
        if len(set(self.digests)) != len(self.layers):
            raise ValidationError(f"{self.image_ref}: repeated base layer")
        if self.init.digest in self.digests:
            raise ValidationError(f"{self.image_ref}: init layer duplicates a base layer")
        if self.init.parent_digest != parent:
            raise ValidationError(f"{self.image_ref}: init layer must sit on the top base layer")

    @property
    def digests(self) -> tuple[str, ...]:
        return tuple(layer.digest for layer in self.layers)

    @property
    def image_bytes(self) -> int:
        return sum(layer.size_bytes for layer in self.layers)

    @property
    def init_digest(self) -> str:
        return self.init.digest

    def all_layers(self) -> tuple[Layer, ...]:
        return self.layers + (self.init,)


@dataclass(frozen=True)
class ImageSpec:
    """Declarative image: ordered ``(content_id, size)`` base layers."""

    ref: str
    layers: tuple[tuple[str, int], ...]
    init_bytes: int = DEFAULT_INIT_BYTES

    def manifest(self) -> ImageManifest:
        built = []
        parent = None
        for content_id, size in self.layers:
            layer = Layer(layer_digest(content_id), int(size), parent)
            built.append(layer)
            parent = layer.digest
        init = Layer(layer_digest(f"{self.ref}#init"), self.init_bytes, parent)
        return ImageManifest(self.ref, tuple(built), init)


def commit(
    base: ImageManifest, container_id: str, bytes_written: int, *, running: bool
) -> ImageManifest:
    """Snapshot a stopped container's writable layer on top of its image.

    An untouched container keeps the image's pristine init layer, so its
    digest is stable across commits; any write yields a fresh digest.
    """
    if running:
        raise ContainerRunning(f"{container_id} must be stopped before commit")
    if bytes_written <= 0:
        return base
    content = f"{base.image_ref}:{container_id}:{bytes_written}"
    init = Layer(layer_digest(content), base.init.size_bytes + bytes_written, base.init.parent_digest)
    return ImageManifest(base.image_ref, base.layers, init)


@dataclass
class RegistryState:
    stored: dict[str, int] = field(default_factory=dict)
    manifests: dict[str, ImageManifest] = field(default_factory=dict)
    _owners: dict[str, str] = field(default_factory=dict, repr=False)

    @property
    def total_bytes(self) -> int:
        return sum(self.stored.values())

    def missing(self, layers: Iterable[Layer]) -> list[Layer]:
        return [layer for layer in layers if layer.digest not in self.stored]

    def push(self, manifest: ImageManifest) -> int:
        """Upload the manifest's missing layers; returns bytes transferred."""
        sent = 0
        for layer in self.missing(manifest.all_layers()):
            self.stored[layer.digest] = layer.size_bytes
            self._owners.setdefault(layer.digest, manifest.image_ref)
            sent += layer.size_bytes
        self.manifests[manifest.image_ref] = manifest
        return sent

    def pull(self, image_ref: str, node_layers: Iterable[str]) -> tuple[int, frozenset[str]]:
        """Bytes a node holding ``node_layers`` must fetch, and its new layer set."""
        try:
            manifest = self.manifests[image_ref]
        except KeyError:
            raise UnknownImage(f"no manifest for {image_ref!r}") from None
        have = set(node_layers)
        fetched = sum(layer.size_bytes for layer in manifest.all_layers() if layer.digest not in have)
        return fetched, frozenset(have | {layer.digest for layer in manifest.all_layers()})

    def dump(self) -> str:
        """One ``digest size image_ref`` line per stored layer, sorted by digest."""
        return "".join(
            f"{digest} {self.stored[digest]} {self._owners.get(digest, '-')}\n"
            for digest in sorted(self.stored)
        )

    @classmethod
    def load(cls, text: str) -> RegistryState:
        state = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3 or not parts[1].isdigit():
                raise ParseError(f"registry dump line {lineno}: expected 'digest size image_ref'")
            digest, size, owner = parts
            state.stored[digest] = int(size)
            state._owners[digest] = owner
        return state


def preload(registry: RegistryState, images: Sequence[ImageSpec]) -> None:
    for image in images:
        registry.push(image.manifest())
