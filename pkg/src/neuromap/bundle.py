"""Summary bundle: one directory holding the dataset plus computed artifacts.

The pipeline stages communicate exclusively through files in this
directory: ``topk.json``, ``clusters.json``, ``embedding.json``,
``graph_<class>.json`` (built lazily, cached on disk), next to the dataset
manifest, activation files, and kernel banks. A loaded bundle is immutable
apart from the guarded graph cache and is safe to share across request
threads.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

import numpy as np

from . import classgraph
from .cascade import CascadeConfig, cascade_payload, run_cascade
from .clustering import NeuronCluster
from .embedding import (
    EmbeddingTable,
    Layout2D,
    neighbor_similarities,
)
from .store import MANIFEST_NAME, DatasetHandle, NeuronRef, TopKImages

TOPK_FILE = "topk.json"
CLUSTERS_FILE = "clusters.json"
EMBEDDING_FILE = "embedding.json"

# Default node filter for "relevant to this class" contexts (embedding class
# filter and cascade class split): a node matters once its mean importance
# reaches one image vote.
DEFAULT_CLASS_MIN_IMPORTANCE = 1.0


class BundleError(Exception):
    """A bundle artifact is missing, unreadable, or inconsistent."""


def write_json(path: str | Path, payload) -> None:
    """Canonical JSON writer: sorted keys, stable floats, trailing newline."""
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"missing artifact: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"unreadable artifact {path}: {exc}") from exc


def clusters_payload(clusters: list[NeuronCluster]) -> list[dict]:
    return [
        {
            "cluster_id": c.cluster_id,
            "layer_id": c.layer_id,
            "members": [str(m) for m in c.members],
        }
        for c in clusters
    ]


def clusters_from_payload(payload: list[dict]) -> list[NeuronCluster]:
    return [
        NeuronCluster(
            cluster_id=entry["cluster_id"],
            layer_id=entry["layer_id"],
            members=[NeuronRef.parse(m) for m in entry["members"]],
        )
        for entry in payload
    ]


def topk_payload(topk: dict[NeuronRef, TopKImages], k: int) -> dict:
    return {
        "k": k,
        "entries": {
            str(neuron): {
                "image_ids": entry.image_ids,
                "max_activations": entry.max_activations,
            }
            for neuron, entry in topk.items()
        },
    }


def topk_from_payload(payload: dict) -> dict[NeuronRef, TopKImages]:
    out = {}
    for key, entry in payload["entries"].items():
        neuron = NeuronRef.parse(key)
        out[neuron] = TopKImages(
            neuron=neuron,
            k=int(payload["k"]),
            image_ids=[int(i) for i in entry["image_ids"]],
            max_activations=[float(v) for v in entry["max_activations"]],
        )
    return out


def embedding_payload(
    table: EmbeddingTable, layout: Layout2D, config_dict: dict, overlap_metric: float
) -> dict:
    return {
        "config": config_dict,
        "vectors": {
            str(neuron): [float(v) for v in table.vectors[i]]
            for i, neuron in enumerate(table.neurons)
        },
        "layout2d": {
            str(neuron): [float(x), float(y)]
            for neuron, (x, y) in layout.positions.items()
        },
        "neighbor_overlap_metric": float(overlap_metric),
    }


class SummaryBundle:
    """Read-only access to every computed artifact, keyed for the API."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.dataset = DatasetHandle(self.root)
        self.digest = hashlib.sha256((self.root / MANIFEST_NAME).read_bytes()).hexdigest()

        known = set(self.dataset.neurons())
        raw_clusters = read_json(self.root / CLUSTERS_FILE)
        self.clusters = clusters_from_payload(raw_clusters)
        self.cluster_by_id = {c.cluster_id: c for c in self.clusters}
        self.cluster_of: dict[NeuronRef, str] = {}
        for cluster in self.clusters:
            for member in cluster.members:
                if member not in known:
                    raise BundleError(
                        f"{CLUSTERS_FILE}: member {member} is not a dataset neuron"
                    )
                self.cluster_of[member] = cluster.cluster_id

        raw_embedding = read_json(self.root / EMBEDDING_FILE)
        neurons = []
        rows = []
        for key, row in raw_embedding["vectors"].items():
            neuron = NeuronRef.parse(key)
            if neuron not in known:
                raise BundleError(f"{EMBEDDING_FILE}: vector for unknown neuron {neuron}")
            neurons.append(neuron)
            rows.append(row)
        order = {n: i for i, n in enumerate(self.dataset.neurons())}
        ranked = sorted(range(len(neurons)), key=lambda i: order[neurons[i]])
        self.table = EmbeddingTable(
            neurons=[neurons[i] for i in ranked],
            vectors=np.array([rows[i] for i in ranked], dtype=np.float64),
        )
        self.layout = Layout2D(
            positions={
                NeuronRef.parse(key): (float(x), float(y))
                for key, (x, y) in raw_embedding["layout2d"].items()
            }
        )
        for neuron in self.layout.positions:
            if neuron not in known:
                raise BundleError(f"{EMBEDDING_FILE}: layout for unknown neuron {neuron}")
        self.embedding_config = raw_embedding.get("config", {})
        self.overlap_metric = raw_embedding.get("neighbor_overlap_metric")

        self.kernels = (
            classgraph.read_kernel_bank(self.dataset) if self.dataset.connections else
            classgraph.KernelBank(kernels={}, strides={})
        )

        self._graphs: dict[str, dict] = {}
        self._graph_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- payload builders (the service serializes these verbatim) ----------

    def manifest_summary(self) -> dict:
        return {
            "digest": self.digest,
            "layers": self.layers_payload(),
            "connections": [
                {"src_layer": s, "dst_layer": d} for s, d in self.dataset.connections
            ],
            "num_images": self.dataset.num_images,
            "classes": self.dataset.classes(),
        }

    def layers_payload(self) -> list[dict]:
        return [
            {
                "id": spec.layer_id,
                "channels": spec.channels,
                "height": spec.height,
                "width": spec.width,
                "order_index": spec.order_index,
            }
            for spec in self.dataset.layer_list
        ]

    def clusters_payload(self, layer: str | None = None) -> list[dict]:
        if layer is not None and layer not in self.dataset.layers:
            raise KeyError(f"unknown layer {layer!r}")
        subset = [c for c in self.clusters if layer is None or c.layer_id == layer]
        return clusters_payload(subset)

    def embedding_view(self, filter_spec: str = "all", pinned: list[str] | None = None) -> dict:
        """Scatter positions, restricted by the requested filter."""
        if filter_spec == "all":
            keep = set(self.layout.positions)
        elif filter_spec == "pinned":
            keep = set()
            for cluster_id in pinned or []:
                cluster = self.cluster_by_id.get(cluster_id)
                if cluster is None:
                    raise KeyError(f"unknown cluster {cluster_id!r}")
                keep.update(cluster.members)
        elif filter_spec.startswith("class:"):
            label = filter_spec.split(":", 1)[1]
            graph = self.class_graph(label, DEFAULT_CLASS_MIN_IMPORTANCE)
            keep = {
                NeuronRef.parse(m) for node in graph["nodes"] for m in node["members"]
            }
        else:
            raise ValueError(f"unknown embedding filter {filter_spec!r}")
        neurons = [
            {
                "neuron": str(neuron),
                "x": x,
                "y": y,
                "cluster_id": self.cluster_of.get(neuron, ""),
            }
            for neuron, (x, y) in self.layout.positions.items()
            if neuron in keep
        ]
        neurons.sort(key=lambda item: item["neuron"])
        return {"filter": filter_spec, "neurons": neurons}

    def neighbors_payload(self, neuron_text: str, k: int = 10) -> dict:
        neuron = NeuronRef.parse(neuron_text)
        if neuron not in self.table:
            raise KeyError(f"unknown neuron {neuron_text!r}")
        if k < 1:
            raise ValueError("k must be >= 1")
        return {
            "neuron": str(neuron),
            "neighbors": [
                {"neuron": str(other), "cosine": value}
                for other, value in neighbor_similarities(self.table, neuron, k)
            ],
        }

    def patches_payload(self, neuron_text: str, limit: int = 5) -> dict:
        neuron = NeuronRef.parse(neuron_text)
        if neuron.layer_id not in self.dataset.layers:
            raise KeyError(f"unknown neuron {neuron_text!r}")
        if limit < 1:
            raise ValueError("limit must be >= 1")
        top = self.dataset.top_k_images(neuron, limit)
        patches = []
        for image_id in top.image_ids:
            try:
                patch = self.dataset.extract_patch(neuron, image_id)
            except ValueError:
                continue  # nothing activated on this image
            record = self.dataset.images[image_id]
            patches.append(
                {
                    "image_id": image_id,
                    "bbox": list(patch.bbox),
                    "class_label": record.class_label,
                    "source_path": record.source_path,
                }
            )
        return {"neuron": str(neuron), "patches": patches}

    # -- class graphs -------------------------------------------------------

    def _graph_lock(self, label: str) -> threading.Lock:
        with self._locks_guard:
            return self._graph_locks.setdefault(label, threading.Lock())

    def class_graph(self, label: str, min_importance: float = 0.0) -> dict:
        """Per-class graph payload, built once per class and cached on disk."""
        if label not in self.dataset.classes():
            raise KeyError(f"unknown class {label!r}")
        with self._graph_lock(label):
            full = self._graphs.get(label)
            if full is None:
                path = self.root / f"graph_{label}.json"
                if path.is_file():
                    full = read_json(path)
                else:
                    graph = classgraph.build_class_graph(
                        self.dataset, self.kernels, self.clusters, label, min_importance=0.0
                    )
                    full = classgraph.class_graph_payload(graph)
                    write_json(path, full)
                self._graphs[label] = full
        if min_importance <= 0:
            return full
        filtered = classgraph.class_graph_from_payload(self.dataset, full, min_importance)
        return classgraph.class_graph_payload(filtered)

    def class_node_ids(self, label: str) -> set[str]:
        graph = self.class_graph(label, DEFAULT_CLASS_MIN_IMPORTANCE)
        return {node["node_id"] for node in graph["nodes"]}

    # -- cascade --------------------------------------------------------------

    def cascade(
        self,
        cluster_id: str,
        trigger_top_n: int | None = None,
        class_context: str | None = None,
        config: CascadeConfig | None = None,
    ) -> dict:
        base = config or CascadeConfig()
        if trigger_top_n is not None:
            base = CascadeConfig(
                trigger_top_n=trigger_top_n, normalize=base.normalize, relu=base.relu
            )
        node_ids = self.class_node_ids(class_context) if class_context else None
        result = run_cascade(
            self.dataset, self.kernels, self.clusters, cluster_id, base, node_ids
        )
        return cascade_payload(result)
