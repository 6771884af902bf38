"""Activation dataset storage.

A dataset directory holds ``manifest.json`` plus one ``act_<layer>.bin``
file per layer. Activation files start with the magic ``NCA1``, four
little-endian u32 header fields (num_images, channels, height, width), and
then float32 values in [image][channel][row][col] order. Layer files are
memory-mapped, so a handle never needs all layers resident at once, and a
loaded handle is read-only and safe for concurrent readers.
"""

from __future__ import annotations

import json
import math
import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATION_MAGIC = b"NCA1"
ACTIVATION_HEADER_SIZE = 20  # magic + 4 u32 fields

MANIFEST_NAME = "manifest.json"


class NCAFError(Exception):
    """A dataset directory or binary file is missing or malformed."""


@dataclass(frozen=True)
class LayerSpec:
    layer_id: str
    channels: int
    height: int
    width: int
    order_index: int


@dataclass(frozen=True, order=True)
class NeuronRef:
    """Identity of one channel: (layer id, channel index)."""

    layer_id: str
    channel: int

    def __str__(self) -> str:
        return f"{self.layer_id}:{self.channel}"

    @classmethod
    def parse(cls, text: str) -> "NeuronRef":
        layer_id, sep, channel = text.rpartition(":")
        if not sep or not layer_id:
            raise ValueError(f"expected 'layer:channel', got {text!r}")
        try:
            return cls(layer_id=layer_id, channel=int(channel))
        except ValueError:
            raise ValueError(f"expected 'layer:channel', got {text!r}") from None


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    class_label: str
    pixel_height: int
    pixel_width: int
    source_path: str | None = None


@dataclass
class TopKImages:
    """Per-neuron ranked list of maximally-activating images."""

    neuron: NeuronRef
    k: int
    image_ids: list[int]
    max_activations: list[float]


@dataclass(frozen=True)
class Patch:
    """Bounding box of an activated region, in image pixel coordinates."""

    image_id: int
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), half-open


def quantize(values: np.ndarray) -> np.ndarray:
    """Boolean mask of highly activated positions: strictly ``> 0``."""
    return np.asarray(values) > 0


def _largest_true_region(mask: np.ndarray) -> list[tuple[int, int]] | None:
    """Cells of the largest 4-connected true region, or None if mask is empty.

    Ties are broken toward the region containing the smallest flattened
    index, which makes the result independent of scan details.
    """
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    best_key: tuple[int, int] | None = None
    best_cells: list[tuple[int, int]] | None = None
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            cells = []
            queue = deque([(r0, c0)])
            seen[r0, c0] = True
            while queue:
                r, c = queue.popleft()
                cells.append((r, c))
                for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = True
                        queue.append((nr, nc))
            key = (len(cells), -min(r * w + c for r, c in cells))
            if best_key is None or key > best_key:
                best_key, best_cells = key, cells
    return best_cells


class DatasetHandle:
    """Read-only access to a dataset directory.

    All methods are pure given the handle; per-layer maximum-activation
    tables are computed lazily and cached.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise NCAFError(f"manifest not found: {manifest_path}")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise NCAFError(f"unreadable manifest {manifest_path}: {exc}") from exc

        self.layers: dict[str, LayerSpec] = {}
        self.images: list[ImageRecord] = []
        self.connections: list[tuple[str, str]] = []
        self._parse_manifest(manifest)

        self._maps: dict[str, np.ndarray] = {}
        self._layer_max: dict[str, np.ndarray] = {}
        for spec in self.layer_list:
            self._maps[spec.layer_id] = self._open_layer(spec)

    # -- manifest ---------------------------------------------------------

    def _parse_manifest(self, manifest: dict) -> None:
        for key in ("layers", "images"):
            if key not in manifest:
                raise NCAFError(f"manifest missing required key {key!r}")
        order_seen: set[int] = set()
        for entry in manifest["layers"]:
            spec = LayerSpec(
                layer_id=str(entry["id"]),
                channels=int(entry["channels"]),
                height=int(entry["height"]),
                width=int(entry["width"]),
                order_index=int(entry["order_index"]),
            )
            if not spec.layer_id or ":" in spec.layer_id:
                raise NCAFError(f"invalid layer id {spec.layer_id!r}")
            if spec.layer_id in self.layers:
                raise NCAFError(f"duplicate layer id {spec.layer_id!r}")
            if spec.channels < 1 or spec.height < 1 or spec.width < 1:
                raise NCAFError(f"layer {spec.layer_id}: non-positive dimensions")
            if spec.order_index in order_seen:
                raise NCAFError(f"layer {spec.layer_id}: duplicate order_index")
            order_seen.add(spec.order_index)
            self.layers[spec.layer_id] = spec
        if not self.layers:
            raise NCAFError("manifest declares no layers")

        records = []
        for entry in manifest["images"]:
            rec = ImageRecord(
                image_id=int(entry["image_id"]),
                class_label=str(entry["class_label"]),
                pixel_height=int(entry["pixel_height"]),
                pixel_width=int(entry["pixel_width"]),
                source_path=entry.get("source_path"),
            )
            if not rec.class_label:
                raise NCAFError(f"image {rec.image_id}: empty class label")
            records.append(rec)
        records.sort(key=lambda r: r.image_id)
        if [r.image_id for r in records] != list(range(len(records))):
            raise NCAFError("image ids must be unique and dense in [0, N)")
        if not records:
            raise NCAFError("manifest declares no images")
        self.images = records

        for entry in manifest.get("connections", []):
            src, dst = str(entry["src_layer"]), str(entry["dst_layer"])
            for lid in (src, dst):
                if lid not in self.layers:
                    raise NCAFError(f"connection references unknown layer {lid!r}")
            if self.layers[src].order_index >= self.layers[dst].order_index:
                raise NCAFError(
                    f"connection {src}->{dst}: order_index must strictly increase"
                )
            self.connections.append((src, dst))

    @property
    def layer_list(self) -> list[LayerSpec]:
        return sorted(self.layers.values(), key=lambda s: s.order_index)

    @property
    def num_images(self) -> int:
        return len(self.images)

    def classes(self) -> list[str]:
        return sorted({rec.class_label for rec in self.images})

    def class_images(self, class_label: str) -> list[int]:
        ids = [r.image_id for r in self.images if r.class_label == class_label]
        if not ids:
            raise KeyError(f"unknown class {class_label!r}")
        return ids

    def neurons(self) -> list[NeuronRef]:
        """All neurons ordered by (layer order_index, channel)."""
        return [
            NeuronRef(spec.layer_id, ch)
            for spec in self.layer_list
            for ch in range(spec.channels)
        ]

    # -- binary files -----------------------------------------------------

    def _open_layer(self, spec: LayerSpec) -> np.ndarray:
        path = self.root / f"act_{spec.layer_id}.bin"
        if not path.is_file():
            raise NCAFError(f"missing activation file: {path}")
        with open(path, "rb") as fh:
            header = fh.read(ACTIVATION_HEADER_SIZE)
        if len(header) < ACTIVATION_HEADER_SIZE or header[:4] != ACTIVATION_MAGIC:
            raise NCAFError(f"layer {spec.layer_id}: bad magic in {path.name}")
        num_images, channels, height, width = struct.unpack("<IIII", header[4:])
        expected = (self.num_images, spec.channels, spec.height, spec.width)
        if (num_images, channels, height, width) != expected:
            raise NCAFError(
                f"layer {spec.layer_id}: header {(num_images, channels, height, width)} "
                f"does not match manifest {expected}"
            )
        want = ACTIVATION_HEADER_SIZE + 4 * num_images * channels * height * width
        if path.stat().st_size != want:
            raise NCAFError(f"layer {spec.layer_id}: truncated file {path.name}")
        arr = np.memmap(
            path,
            dtype="<f4",
            mode="r",
            offset=ACTIVATION_HEADER_SIZE,
            shape=(num_images, channels, height, width),
        )
        for start in range(0, num_images, 64):
            if not np.isfinite(arr[start : start + 64]).all():
                raise NCAFError(f"layer {spec.layer_id}: non-finite activation values")
        return arr

    def activations(self, layer_id: str) -> np.ndarray:
        """The full (num_images, channels, H, W) memory-mapped tensor."""
        if layer_id not in self._maps:
            raise KeyError(f"unknown layer {layer_id!r}")
        return self._maps[layer_id]

    def _check_neuron(self, neuron: NeuronRef) -> LayerSpec:
        spec = self.layers.get(neuron.layer_id)
        if spec is None:
            raise KeyError(f"unknown layer {neuron.layer_id!r}")
        if not 0 <= neuron.channel < spec.channels:
            raise IndexError(f"channel {neuron.channel} out of range for {neuron.layer_id}")
        return spec

    def _check_image(self, image_id: int) -> ImageRecord:
        if not 0 <= image_id < self.num_images:
            raise IndexError(f"image id {image_id} out of range")
        return self.images[image_id]

    # -- queries ----------------------------------------------------------

    def activation_map(self, neuron: NeuronRef, image_id: int) -> np.ndarray:
        self._check_neuron(neuron)
        self._check_image(image_id)
        return self._maps[neuron.layer_id][image_id, neuron.channel]

    def quantized_map(self, neuron: NeuronRef, image_id: int) -> np.ndarray:
        return quantize(self.activation_map(neuron, image_id))

    def max_activation(self, neuron: NeuronRef, image_id: int) -> float:
        return float(self.activation_map(neuron, image_id).max())

    def layer_max(self, layer_id: str) -> np.ndarray:
        """(num_images, channels) matrix of per-map maxima, cached."""
        cached = self._layer_max.get(layer_id)
        if cached is not None:
            return cached
        acts = self.activations(layer_id)
        out = np.empty(acts.shape[:2], dtype=np.float32)
        for start in range(0, acts.shape[0], 64):
            stop = min(start + 64, acts.shape[0])
            out[start:stop] = acts[start:stop].max(axis=(2, 3))
        self._layer_max[layer_id] = out
        return out

    def top_k_images(self, neuron: NeuronRef, k: int) -> TopKImages:
        """Images sorted by max activation descending, ties by ascending id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        self._check_neuron(neuron)
        maxima = self.layer_max(neuron.layer_id)[:, neuron.channel].astype(np.float64)
        order = np.lexsort((np.arange(self.num_images), -maxima))
        take = order[: min(k, self.num_images)]
        return TopKImages(
            neuron=neuron,
            k=k,
            image_ids=[int(i) for i in take],
            max_activations=[float(maxima[i]) for i in take],
        )

    def extract_patch(self, neuron: NeuronRef, image_id: int) -> Patch:
        """Bounding box of the largest activated region, in pixel coordinates."""
        spec = self._check_neuron(neuron)
        rec = self._check_image(image_id)
        mask = self.quantized_map(neuron, image_id)
        cells = _largest_true_region(mask)
        if cells is None:
            raise ValueError(f"no activated region for {neuron} on image {image_id}")
        rows = [r for r, _ in cells]
        cols = [c for _, c in cells]
        scale_r = rec.pixel_height / spec.height
        scale_c = rec.pixel_width / spec.width
        row0 = max(0, int(math.floor(min(rows) * scale_r)))
        col0 = max(0, int(math.floor(min(cols) * scale_c)))
        row1 = min(rec.pixel_height, int(math.ceil((max(rows) + 1) * scale_r)))
        col1 = min(rec.pixel_width, int(math.ceil((max(cols) + 1) * scale_c)))
        return Patch(image_id=image_id, bbox=(row0, col0, row1, col1))


# -- writers ---------------------------------------------------------------


def write_activation_file(path: str | Path, values: np.ndarray) -> None:
    """Write one layer's activations as an ``NCA1`` binary file."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 4:
        raise ValueError("activations must have shape (images, channels, H, W)")
    with open(path, "wb") as fh:
        fh.write(ACTIVATION_MAGIC)
        fh.write(struct.pack("<IIII", *arr.shape))
        fh.write(arr.tobytes())


def write_dataset(
    root: str | Path,
    layers: list[LayerSpec],
    images: list[ImageRecord],
    connections: list[tuple[str, str]],
    activations: dict[str, np.ndarray],
) -> None:
    """Write a complete dataset directory (manifest + activation files)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "layers": [
            {
                "id": s.layer_id,
                "channels": s.channels,
                "height": s.height,
                "width": s.width,
                "order_index": s.order_index,
            }
            for s in layers
        ],
        "images": [
            {
                "image_id": r.image_id,
                "class_label": r.class_label,
                "pixel_height": r.pixel_height,
                "pixel_width": r.pixel_width,
                **({"source_path": r.source_path} if r.source_path else {}),
            }
            for r in images
        ],
        "connections": [{"src_layer": s, "dst_layer": d} for s, d in connections],
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for spec in layers:
        write_activation_file(root / f"act_{spec.layer_id}.bin", activations[spec.layer_id])
