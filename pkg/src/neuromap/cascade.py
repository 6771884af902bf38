"""Concept cascade: manually activate a cluster and propagate it forward.

The seed cluster's member maps are set to all-ones and every other neuron
in the seed layer to all-zeros. Each downstream layer accumulates the
convolution of every active upstream map with the connecting kernel slice,
clamps negatives (ReLU) and rescales by the layer-wide maximum, then keeps
only the top trigger_top_n neurons with a positive peak; only those
propagate further (a beam). Ties break toward the lower channel index, so
results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classgraph import KernelBank, pairwise_conv_maps
from .clustering import NeuronCluster
from .store import DatasetHandle, NeuronRef


@dataclass
class CascadeConfig:
    trigger_top_n: int = 5
    normalize: bool = True
    relu: bool = True

    def __post_init__(self) -> None:
        if self.trigger_top_n < 1:
            raise ValueError("trigger_top_n must be >= 1")


@dataclass
class TriggeredNeuron:
    neuron: NeuronRef
    score: float
    cluster_id: str
    in_class_summary: bool | None


@dataclass
class CascadeEdge:
    src: NeuronRef
    dst: NeuronRef
    strength: float


@dataclass
class CascadeLayer:
    layer_id: str
    triggered: list[TriggeredNeuron]
    edges: list[CascadeEdge]


@dataclass
class CascadeResult:
    seed_cluster: str
    layers: list[CascadeLayer] = field(default_factory=list)


def run_cascade(
    handle: DatasetHandle,
    kernels: KernelBank,
    clusters: Sequence[NeuronCluster],
    seed_cluster_id: str,
    config: CascadeConfig | None = None,
    class_node_ids: set[str] | None = None,
) -> CascadeResult:
    """Propagate an all-ones activation of the seed cluster through the net.

    class_node_ids, when given, is the set of cluster ids present in the
    active class's graph summary; triggered clusters are flagged as inside
    or outside that summary.
    """
    config = config or CascadeConfig()
    by_id = {c.cluster_id: c for c in clusters}
    if seed_cluster_id not in by_id:
        raise KeyError(f"unknown cluster {seed_cluster_id!r}")
    cluster_of: dict[NeuronRef, str] = {}
    for cluster in clusters:
        for member in cluster.members:
            cluster_of[member] = cluster.cluster_id
    seed = by_id[seed_cluster_id]
    seed_spec = handle.layers[seed.layer_id]

    # Maps of currently active neurons, per layer already processed.
    active: dict[str, dict[int, np.ndarray]] = {
        seed.layer_id: {
            m.channel: np.ones((seed_spec.height, seed_spec.width)) for m in seed.members
        }
    }
    result = CascadeResult(seed_cluster=seed_cluster_id)
    seed_order = seed_spec.order_index
    for spec in handle.layer_list:
        if spec.order_index <= seed_order:
            continue
        incoming = [
            src
            for src, dst in handle.connections
            if dst == spec.layer_id and active.get(src)
        ]
        if not incoming:
            continue
        total = np.zeros((spec.channels, spec.height, spec.width))
        peaks: dict[tuple[str, int], np.ndarray] = {}
        for src_layer in incoming:
            bank, stride = kernels.slice_for(src_layer, spec.layer_id)
            src_channels = sorted(active[src_layer])
            src_maps = np.stack([active[src_layer][ch] for ch in src_channels])
            contrib = pairwise_conv_maps(src_maps, bank[:, src_channels], stride)
            total += contrib.sum(axis=1)
            contrib_peaks = contrib.max(axis=(2, 3))
            for pos, ch in enumerate(src_channels):
                peaks[(src_layer, ch)] = contrib_peaks[:, pos]
        if config.relu:
            np.maximum(total, 0.0, out=total)
        if config.normalize:
            top = total.max()
            if top > 0:
                total /= top
        scores = total.max(axis=(1, 2))
        ranked = np.lexsort((np.arange(spec.channels), -scores))
        triggered_channels = [int(ch) for ch in ranked if scores[ch] > 0][: config.trigger_top_n]

        triggered = []
        for ch in triggered_channels:
            neuron = NeuronRef(spec.layer_id, ch)
            cluster_id = cluster_of[neuron]
            in_summary = None if class_node_ids is None else cluster_id in class_node_ids
            triggered.append(
                TriggeredNeuron(
                    neuron=neuron,
                    score=float(scores[ch]),
                    cluster_id=cluster_id,
                    in_class_summary=in_summary,
                )
            )
        edges = [
            CascadeEdge(
                src=NeuronRef(src_layer, src_ch),
                dst=NeuronRef(spec.layer_id, dst_ch),
                strength=float(peaks[(src_layer, src_ch)][dst_ch]),
            )
            for dst_ch in triggered_channels
            for src_layer in incoming
            for src_ch in sorted(active[src_layer])
        ]
        result.layers.append(CascadeLayer(layer_id=spec.layer_id, triggered=triggered, edges=edges))
        if triggered_channels:
            active[spec.layer_id] = {ch: total[ch].copy() for ch in triggered_channels}
    return result


def cascade_payload(result: CascadeResult) -> dict:
    """JSON-ready dict for the cascade response schema."""
    return {
        "seed_cluster": result.seed_cluster,
        "layers": [
            {
                "layer": layer.layer_id,
                "triggered": [
                    {
                        "neuron": str(t.neuron),
                        "score": t.score,
                        "cluster_id": t.cluster_id,
                        "in_class_summary": t.in_class_summary,
                    }
                    for t in layer.triggered
                ],
                "edges": [
                    {"src": str(e.src), "dst": str(e.dst), "strength": e.strength}
                    for e in layer.edges
                ],
            }
            for layer in result.layers
        ],
    }
