"""Per-class summaries: neuron importance, influence edges, and class graphs.

Importance counts how many class images rank a neuron among its layer's
five most activated. Influence counts, per class image and per downstream
neuron, which upstream neuron delivers the strongest peak when the source
activation map is convolved with the kernel slice connecting the two — the
"major path". Group-level nodes and edges average these per-neuron values.

Kernel banks live in ``kern_<src>__<dst>.bin`` files: magic ``NCK1``, five
little-endian u32 fields (dst_channels, src_channels, kh, kw, stride) and
float32 weights in [dst][src][kh][kw] order. Convolutions use same-padding
cross-correlation, the CNN convention.
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .clustering import NeuronCluster
from .store import DatasetHandle, NCAFError, NeuronRef

KERNEL_MAGIC = b"NCK1"
KERNEL_HEADER_SIZE = 24  # magic + 5 u32 fields

LAYER_TOP_NEURONS = 5  # votes per (image, layer) for importance
GROUP_DISPLAY_LIMIT = 10  # members shown / averaged per group node


@dataclass
class KernelBank:
    """Per connected layer pair: 4-D weights plus stride, same-padding."""

    kernels: dict[tuple[str, str], np.ndarray]
    strides: dict[tuple[str, str], int]

    def slice_for(self, src_layer: str, dst_layer: str) -> tuple[np.ndarray, int]:
        key = (src_layer, dst_layer)
        if key not in self.kernels:
            raise KeyError(f"no kernel bank for connection {src_layer}->{dst_layer}")
        return self.kernels[key], self.strides[key]


def kernel_file_name(src_layer: str, dst_layer: str) -> str:
    return f"kern_{src_layer}__{dst_layer}.bin"


def write_kernel_file(path: str | Path, weights: np.ndarray, stride: int) -> None:
    arr = np.ascontiguousarray(weights, dtype="<f4")
    if arr.ndim != 4:
        raise ValueError("kernel weights must have shape (dst, src, kh, kw)")
    with open(path, "wb") as fh:
        fh.write(KERNEL_MAGIC)
        fh.write(struct.pack("<IIIII", *arr.shape, stride))
        fh.write(arr.tobytes())


def read_kernel_bank(handle: DatasetHandle) -> KernelBank:
    """Load and validate one kernel file per declared layer connection."""
    kernels: dict[tuple[str, str], np.ndarray] = {}
    strides: dict[tuple[str, str], int] = {}
    for src, dst in handle.connections:
        path = handle.root / kernel_file_name(src, dst)
        if not path.is_file():
            raise NCAFError(f"missing kernel file: {path}")
        with open(path, "rb") as fh:
            header = fh.read(KERNEL_HEADER_SIZE)
        if len(header) < KERNEL_HEADER_SIZE or header[:4] != KERNEL_MAGIC:
            raise NCAFError(f"bad magic in {path.name}")
        dst_c, src_c, kh, kw, stride = struct.unpack("<IIIII", header[4:])
        src_spec, dst_spec = handle.layers[src], handle.layers[dst]
        if (dst_c, src_c) != (dst_spec.channels, src_spec.channels):
            raise NCAFError(
                f"{path.name}: channel counts {(dst_c, src_c)} do not match "
                f"layers {(dst_spec.channels, src_spec.channels)}"
            )
        if stride < 1 or stride != max(1, round(src_spec.height / dst_spec.height)):
            raise NCAFError(f"{path.name}: stride {stride} inconsistent with layer dims")
        if -(-src_spec.height // stride) != dst_spec.height or -(
            -src_spec.width // stride
        ) != dst_spec.width:
            raise NCAFError(f"{path.name}: stride {stride} does not reproduce dst dims")
        arr = np.fromfile(path, dtype="<f4", offset=KERNEL_HEADER_SIZE)
        if arr.size != dst_c * src_c * kh * kw:
            raise NCAFError(f"{path.name}: truncated kernel data")
        kernels[(src, dst)] = arr.reshape(dst_c, src_c, kh, kw)
        strides[(src, dst)] = stride
    return KernelBank(kernels=kernels, strides=strides)


# -- convolution -------------------------------------------------------------


def _same_padding(size: int, ksize: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    pad = max((out - 1) * stride + ksize - size, 0)
    lead = pad // 2
    return out, lead, pad - lead


def conv2d_same(values: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Same-padding 2D cross-correlation of one map with one kernel slice."""
    values = np.asarray(values, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    _, top, bottom = _same_padding(values.shape[0], kh, stride)
    _, left, right = _same_padding(values.shape[1], kw, stride)
    padded = np.pad(values, ((top, bottom), (left, right)))
    windows = sliding_window_view(padded, (kh, kw))[::stride, ::stride]
    return np.einsum("ijkl,kl->ij", windows, kernel)


def pairwise_conv_peaks(src_maps: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Max convolution value for every (dst, src) pair.

    src_maps: (src_channels, H, W); kernels: (dst, src, kh, kw).
    Returns (dst_channels, src_channels) peak values.
    """
    return pairwise_conv_maps(src_maps, kernels, stride).max(axis=(2, 3))


def pairwise_conv_maps(src_maps: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Full (dst, src, outH, outW) contribution maps for a layer pair."""
    src_maps = np.asarray(src_maps, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    kh, kw = kernels.shape[2:]
    _, top, bottom = _same_padding(src_maps.shape[1], kh, stride)
    _, left, right = _same_padding(src_maps.shape[2], kw, stride)
    padded = np.pad(src_maps, ((0, 0), (top, bottom), (left, right)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("sijkl,dskl->dsij", windows, kernels)


# -- importance --------------------------------------------------------------


@dataclass(frozen=True)
class NeuronImportance:
    class_label: str
    neuron: NeuronRef
    score: int


@dataclass
class GroupNode:
    node_id: str
    layer_id: str
    displayed_members: list[NeuronRef]
    importance: float


@dataclass(frozen=True)
class InfluenceEdge:
    class_label: str
    src: NeuronRef
    dst: NeuronRef
    weight: int


@dataclass
class GroupEdge:
    src_node: str
    dst_node: str
    weight: float


@dataclass
class ClassGraph:
    class_label: str
    nodes: list[GroupNode]
    edges: list[GroupEdge]
    min_importance: float


def neuron_importance(handle: DatasetHandle, class_label: str) -> list[NeuronImportance]:
    """Per neuron, the count of class images ranking it in its layer's top 5."""
    image_ids = handle.class_images(class_label)
    out: list[NeuronImportance] = []
    for spec in handle.layer_list:
        maxima = handle.layer_max(spec.layer_id)
        take = min(LAYER_TOP_NEURONS, spec.channels)
        scores = np.zeros(spec.channels, dtype=np.int64)
        channel_order = np.arange(spec.channels)
        for image_id in image_ids:
            row = maxima[image_id].astype(np.float64)
            ranked = np.lexsort((channel_order, -row))
            scores[ranked[:take]] += 1
        out.extend(
            NeuronImportance(class_label, NeuronRef(spec.layer_id, ch), int(scores[ch]))
            for ch in range(spec.channels)
        )
    return out


def group_importance(
    clusters: list[NeuronCluster], importances: list[NeuronImportance]
) -> list[GroupNode]:
    """Group score = mean importance of the group's top displayed members."""
    score = {imp.neuron: imp.score for imp in importances}
    nodes = []
    for cluster in clusters:
        ranked = sorted(cluster.members, key=lambda n: (-score.get(n, 0), n.channel))
        shown = ranked[: min(GROUP_DISPLAY_LIMIT, len(ranked))]
        mean = float(np.mean([score.get(n, 0) for n in shown]))
        nodes.append(
            GroupNode(
                node_id=cluster.cluster_id,
                layer_id=cluster.layer_id,
                displayed_members=shown,
                importance=mean,
            )
        )
    return nodes


def edge_influence(
    handle: DatasetHandle,
    kernels: KernelBank,
    class_label: str,
    top_edges_per_dst: int = 1,
) -> list[InfluenceEdge]:
    """Count, per connection, the images that use each edge as a major path.

    For each class image and each downstream neuron, the upstream neurons
    are ranked by the peak of conv(src map, kernel slice); the strongest
    top_edges_per_dst with a positive peak each collect one vote.
    """
    image_ids = handle.class_images(class_label)
    weights: dict[tuple[NeuronRef, NeuronRef], int] = defaultdict(int)
    for src_layer, dst_layer in handle.connections:
        bank, stride = kernels.slice_for(src_layer, dst_layer)
        acts = handle.activations(src_layer)
        src_count = handle.layers[src_layer].channels
        src_order = np.arange(src_count)
        for image_id in image_ids:
            peaks = pairwise_conv_peaks(acts[image_id], bank, stride)
            for dst_ch in range(peaks.shape[0]):
                row = peaks[dst_ch]
                ranked = np.lexsort((src_order, -row))
                for src_ch in ranked[:top_edges_per_dst]:
                    if row[src_ch] > 0:
                        key = (NeuronRef(src_layer, int(src_ch)), NeuronRef(dst_layer, dst_ch))
                        weights[key] += 1
    return [
        InfluenceEdge(class_label, src, dst, count)
        for (src, dst), count in sorted(weights.items())
    ]


def group_edges(
    edges: list[InfluenceEdge],
    clusters: list[NeuronCluster],
    connections: list[tuple[str, str]],
) -> list[GroupEdge]:
    """Average neuron-level influence over all member pairs of two groups."""
    weight = {(e.src, e.dst): e.weight for e in edges}
    by_layer: dict[str, list[NeuronCluster]] = defaultdict(list)
    for cluster in clusters:
        by_layer[cluster.layer_id].append(cluster)
    out: list[GroupEdge] = []
    for src_layer, dst_layer in connections:
        for src_cluster in by_layer.get(src_layer, []):
            for dst_cluster in by_layer.get(dst_layer, []):
                total = 0
                for src in src_cluster.members:
                    for dst in dst_cluster.members:
                        total += weight.get((src, dst), 0)
                if total == 0:
                    continue
                mean = total / (len(src_cluster.members) * len(dst_cluster.members))
                out.append(GroupEdge(src_cluster.cluster_id, dst_cluster.cluster_id, mean))
    return out


def build_class_graph(
    handle: DatasetHandle,
    kernels: KernelBank,
    clusters: list[NeuronCluster],
    class_label: str,
    min_importance: float = 0.0,
    top_edges_per_dst: int = 1,
) -> ClassGraph:
    """Assemble the filtered per-class graph of group nodes and edges."""
    importances = neuron_importance(handle, class_label)
    nodes = group_importance(clusters, importances)
    influence = edge_influence(handle, kernels, class_label, top_edges_per_dst)
    all_edges = group_edges(influence, clusters, handle.connections)
    return filter_class_graph(handle, class_label, nodes, all_edges, min_importance)


def filter_class_graph(
    handle: DatasetHandle,
    class_label: str,
    nodes: list[GroupNode],
    edges: list[GroupEdge],
    min_importance: float,
) -> ClassGraph:
    layer_order = {spec.layer_id: spec.order_index for spec in handle.layer_list}
    kept = [n for n in nodes if n.importance >= min_importance]
    kept.sort(key=lambda n: (layer_order[n.layer_id], -n.importance, n.node_id))
    kept_ids = {n.node_id for n in kept}
    kept_edges = [
        e for e in edges if e.src_node in kept_ids and e.dst_node in kept_ids and e.weight > 0
    ]
    kept_edges.sort(key=lambda e: (e.src_node, e.dst_node))
    return ClassGraph(
        class_label=class_label,
        nodes=kept,
        edges=kept_edges,
        min_importance=min_importance,
    )


def class_graph_payload(graph: ClassGraph) -> dict:
    """JSON-ready dict matching the graph_<class>.json schema."""
    return {
        "class": graph.class_label,
        "nodes": [
            {
                "node_id": node.node_id,
                "layer": node.layer_id,
                "members": [str(n) for n in node.displayed_members],
                "importance": node.importance,
            }
            for node in graph.nodes
        ],
        "edges": [
            {"src_node": e.src_node, "dst_node": e.dst_node, "weight": e.weight}
            for e in graph.edges
        ],
    }


def class_graph_from_payload(
    handle: DatasetHandle, payload: dict, min_importance: float = 0.0
) -> ClassGraph:
    """Rebuild a ClassGraph from its serialized form, applying a filter."""
    layer_order = {spec.layer_id: spec.order_index for spec in handle.layer_list}
    nodes = []
    for entry in payload["nodes"]:
        node = GroupNode(
            node_id=entry["node_id"],
            layer_id=entry["layer"],
            displayed_members=[NeuronRef.parse(m) for m in entry["members"]],
            importance=float(entry["importance"]),
        )
        if node.importance >= min_importance:
            nodes.append(node)
    nodes.sort(key=lambda n: (layer_order[n.layer_id], -n.importance, n.node_id))
    kept = {n.node_id for n in nodes}
    edges = [
        GroupEdge(e["src_node"], e["dst_node"], float(e["weight"]))
        for e in payload["edges"]
        if e["src_node"] in kept and e["dst_node"] in kept
    ]
    edges.sort(key=lambda e: (e.src_node, e.dst_node))
    return ClassGraph(
        class_label=payload["class"],
        nodes=nodes,
        edges=edges,
        min_importance=min_importance,
    )
