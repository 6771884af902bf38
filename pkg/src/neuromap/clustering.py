"""Two-stage neuron clustering.

The preprocessing stage groups neurons whose top-k image sets overlap,
using MinHash signatures over image-id sets and banded LSH. The main stage
refines each preprocessed group by hashing the activated positions of the
quantized activation maps on a sampled image pool, and connects neurons
that co-bucket on at least one image. Both stages work strictly within a
layer; the final clusters partition each layer's neuron set.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .minhash import BandingParams, HashFamily, UnionFind, band_group, bucket_edges, signature
from .store import DatasetHandle, NeuronRef, TopKImages

_STREAM_PRE_HASH = 1
_STREAM_SAMPLE_POOL = 2
_STREAM_MAIN_HASH = 3


def child_seed(root: int, stream: int) -> int:
    """Derive an independent child seed from a root seed and a stream tag."""
    return int(np.random.SeedSequence([root, stream]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class ClusteringConfig:
    k: int = 200
    t: int = 100
    pre_b: int = 2000
    pre_r: int = 3
    main_b: int = 20
    main_r: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("k", "t", "pre_b", "pre_r", "main_b", "main_r"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class PreGroup:
    """Preprocessing-stage group plus its sampled image pool."""

    group_id: str
    layer_id: str
    members: list[NeuronRef]
    sampled_images: list[int]


@dataclass
class NeuronCluster:
    cluster_id: str
    layer_id: str
    members: list[NeuronRef]
    representative_patches: dict = field(default_factory=dict)


def top_image_similarity(ids_a, ids_b) -> float:
    """Jaccard similarity of two top-image id sets."""
    set_a, set_b = set(ids_a), set(ids_b)
    union = set_a | set_b
    if not union:
        return 0.0
    return len(set_a & set_b) / len(union)


def mask_similarity(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Jaccard similarity of two boolean masks; 0 when the union is empty."""
    union = int(np.logical_or(mask_a, mask_b).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(mask_a, mask_b).sum()) / union


def activation_similarity(
    handle: DatasetHandle, i: NeuronRef, j: NeuronRef, image_id: int
) -> float:
    """Overlap of the two neurons' activated map regions on one image."""
    if i.layer_id != j.layer_id:
        raise ValueError(f"neurons {i} and {j} are not in the same layer")
    return mask_similarity(handle.quantized_map(i, image_id), handle.quantized_map(j, image_id))


def preprocess(
    handle: DatasetHandle,
    topk: Mapping[NeuronRef, TopKImages],
    config: ClusteringConfig,
) -> list[PreGroup]:
    """Group neurons per layer by common top-k images; sample each pool."""
    family = HashFamily.create(child_seed(config.seed, _STREAM_PRE_HASH), config.pre_b * config.pre_r)
    params = BandingParams(b=config.pre_b, r=config.pre_r)
    groups: list[PreGroup] = []
    for spec in handle.layer_list:
        sigs = {
            ch: signature(topk[NeuronRef(spec.layer_id, ch)].image_ids, family)
            for ch in range(spec.channels)
        }
        comps = _grouped(sigs, params)
        rng = np.random.default_rng([config.seed, _STREAM_SAMPLE_POOL, spec.order_index])
        for idx, channels in enumerate(comps):
            members = [NeuronRef(spec.layer_id, ch) for ch in channels]
            pool = sorted({img for m in members for img in topk[m].image_ids})
            if len(pool) > config.t:
                picked = rng.choice(len(pool), size=config.t, replace=False)
                sampled = sorted(pool[i] for i in picked)
            else:
                sampled = pool
            groups.append(
                PreGroup(
                    group_id=f"{spec.layer_id}/p{idx}",
                    layer_id=spec.layer_id,
                    members=members,
                    sampled_images=sampled,
                )
            )
    return groups


def _grouped(sigs: dict, params: BandingParams) -> list[list]:
    uf = UnionFind(sigs.keys())
    for a, b in bucket_edges(band_group(sigs, params)):
        uf.union(a, b)
    return uf.groups()


def main_cluster(
    handle: DatasetHandle,
    pregroups: list[PreGroup],
    config: ClusteringConfig,
) -> list[NeuronCluster]:
    """Refine pregroups by activated-position overlap on sampled images.

    Per sampled image, neurons are hashed over the flattened true positions
    of their quantized map; empty-mask neurons are skipped for that image.
    Two neurons join when they co-bucket for at least one image, and the
    transitive closure within the pregroup forms the clusters.
    """
    family = HashFamily.create(child_seed(config.seed, _STREAM_MAIN_HASH), config.main_b * config.main_r)
    params = BandingParams(b=config.main_b, r=config.main_r)
    per_layer: dict[str, list[list[int]]] = defaultdict(list)
    for group in pregroups:
        acts = handle.activations(group.layer_id)
        uf = UnionFind(m.channel for m in group.members)
        for image_id in group.sampled_images:
            sigs = {}
            for member in group.members:
                positions = np.flatnonzero(acts[image_id, member.channel] > 0)
                if positions.size == 0:
                    continue
                sigs[member.channel] = signature(positions, family)
            if len(sigs) < 2:
                continue
            for a, b in bucket_edges(band_group(sigs, params)):
                uf.union(a, b)
        per_layer[group.layer_id].extend(uf.groups())

    clusters: list[NeuronCluster] = []
    for spec in handle.layer_list:
        for channels in sorted(per_layer.get(spec.layer_id, []), key=lambda g: g[0]):
            clusters.append(
                NeuronCluster(
                    cluster_id=f"c{len(clusters)}",
                    layer_id=spec.layer_id,
                    members=[NeuronRef(spec.layer_id, ch) for ch in channels],
                )
            )
    return clusters


def cluster_neurons(
    handle: DatasetHandle,
    topk: Mapping[NeuronRef, TopKImages],
    config: ClusteringConfig,
) -> list[NeuronCluster]:
    """Run both stages back to back."""
    return main_cluster(handle, preprocess(handle, topk, config), config)


def verify_clusters(
    handle: DatasetHandle,
    clusters: list[NeuronCluster],
    topk: Mapping[NeuronRef, TopKImages],
    sample_images: int = 32,
) -> dict:
    """Audit report: exact pairwise similarities inside each multi-member cluster.

    Recomputes the exact top-image Jaccard for every member pair and, over a
    slice of the members' shared top images, the best activation-map overlap
    per pair. Purely diagnostic; the clustering output is not modified.
    """
    report = []
    for cluster in clusters:
        if len(cluster.members) < 2:
            continue
        pool = sorted({img for m in cluster.members for img in topk[m].image_ids})[:sample_images]
        pre_sims = []
        act_sims = []
        members = cluster.members
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                a, b = members[a_idx], members[b_idx]
                pre_sims.append(top_image_similarity(topk[a].image_ids, topk[b].image_ids))
                best = 0.0
                for img in pool:
                    best = max(best, activation_similarity(handle, a, b, img))
                act_sims.append(best)
        report.append(
            {
                "cluster_id": cluster.cluster_id,
                "size": len(members),
                "min_pair_top_image_jaccard": min(pre_sims),
                "mean_pair_top_image_jaccard": sum(pre_sims) / len(pre_sims),
                "min_pair_best_map_overlap": min(act_sims),
            }
        )
    return {"clusters": report}
