"""Evaluation harness: planted synthetic bundles, intruder tasks, scoring.

The synthetic generator plants neuron groups that share an image pool and
a common activated map region, so the clustering pipeline has a known
ground truth. Intruder tasks package six neuron patch sets (five cluster
members plus one outsider, or six random neurons); scoring turns recorded
judgments into a false-positive rate, an ROC curve over per-neuron
inclusion scores, and its trapezoidal AUC.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .classgraph import kernel_file_name, write_kernel_file
from .clustering import NeuronCluster
from .store import ImageRecord, LayerSpec, NeuronRef, write_dataset

_STREAM_SYNTH = 20
_STREAM_TASKS = 21

PLANTED_FILE = "planted.json"

# A respondent "sees a cluster" when selecting at least this many slots;
# smaller selections are excluded from inclusion scoring.
CLUSTER_PRESENT_MIN_SELECTED = 3


@dataclass
class SyntheticSpec:
    """Shape and difficulty of a planted synthetic bundle."""

    layers: list[tuple[str, int, int, int]] = field(
        default_factory=lambda: [
            ("conv1", 64, 16, 16),
            ("conv2", 64, 8, 8),
            ("conv3", 64, 8, 8),
        ]
    )
    num_images: int = 500
    groups_per_layer: int = 8
    iou_target: float = 0.9
    noise: float = 0.1
    seed: int = 0
    amplitude: float = 5.0

    def __post_init__(self) -> None:
        if self.num_images < 1 or not self.layers:
            raise ValueError("need at least one image and one layer")
        if self.groups_per_layer < 0:
            raise ValueError("groups_per_layer must be >= 0")
        if not 0 < self.iou_target <= 1:
            raise ValueError("iou_target must be in (0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


@dataclass
class PlantedInfo:
    """Ground-truth grouping written alongside a synthetic bundle."""

    groups: dict[NeuronRef, str]  # neuron -> planted group label
    pools: dict[str, list[int]]  # class label -> image ids


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> PlantedInfo:
    """Write a synthetic activation bundle with planted neuron groups.

    Members of a planted group activate strongly on the group's image pool
    with near-identical map regions (pairwise IoU near spec.iou_target) and
    see only low-amplitude, mostly negative noise elsewhere. Kernels carry
    a strong center weight between same-index groups of adjacent layers, so
    cascades and influence edges have known strong paths.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng([spec.seed, _STREAM_SYNTH])
    layer_specs = [
        LayerSpec(layer_id=lid, channels=c, height=h, width=w, order_index=i)
        for i, (lid, c, h, w) in enumerate(spec.layers)
    ]
    connections = [
        (layer_specs[i].layer_id, layer_specs[i + 1].layer_id)
        for i in range(len(layer_specs) - 1)
    ]

    # Image pools: one class per group plus a background remainder.
    pool_size = spec.num_images // (spec.groups_per_layer + 1) if spec.groups_per_layer else 0
    pools: dict[str, list[int]] = {}
    labels = ["background"] * spec.num_images
    for g in range(spec.groups_per_layer):
        ids = list(range(g * pool_size, (g + 1) * pool_size))
        label = f"class_{g:02d}"
        pools[label] = ids
        for i in ids:
            labels[i] = label
    pools["background"] = [i for i, lab in enumerate(labels) if lab == "background"]
    images = [
        ImageRecord(image_id=i, class_label=labels[i], pixel_height=64, pixel_width=64)
        for i in range(spec.num_images)
    ]

    planted: dict[NeuronRef, str] = {}
    activations: dict[str, np.ndarray] = {}
    group_channels: dict[tuple[str, int], list[int]] = {}
    for layer in layer_specs:
        acts = _noise_maps(rng, spec, (spec.num_images, layer.channels, layer.height, layer.width))
        cells = layer.height * layer.width
        region_size = max(4, cells // 4)
        extras = _jitter_cells(region_size, spec.iou_target)
        if region_size + extras > cells:
            raise ValueError(
                f"iou_target {spec.iou_target} infeasible for {layer.height}x{layer.width} maps"
            )
        group_size = layer.channels // spec.groups_per_layer if spec.groups_per_layer else 0
        for g in range(spec.groups_per_layer):
            channels = list(range(g * group_size, (g + 1) * group_size))
            group_channels[(layer.layer_id, g)] = channels
            region = rng.choice(cells, size=region_size, replace=False)
            outside = np.setdiff1d(np.arange(cells), region)
            for ch in channels:
                planted[NeuronRef(layer.layer_id, ch)] = f"{layer.layer_id}/g{g}"
                for image_id in pools[f"class_{g:02d}"]:
                    flat = np.zeros(cells, dtype=np.float32)
                    mask = region
                    if extras:
                        jitter = rng.choice(outside.size, size=extras, replace=False)
                        mask = np.concatenate([region, outside[jitter]])
                    flat[mask] = spec.amplitude * rng.uniform(0.5, 1.5, size=mask.size)
                    acts[image_id, ch] = flat.reshape(layer.height, layer.width)
        for ch in range(spec.groups_per_layer * group_size, layer.channels):
            planted[NeuronRef(layer.layer_id, ch)] = f"{layer.layer_id}/solo{ch}"
        activations[layer.layer_id] = acts

    write_dataset(out_dir, layer_specs, images, connections, activations)

    for src, dst in connections:
        src_spec = next(s for s in layer_specs if s.layer_id == src)
        dst_spec = next(s for s in layer_specs if s.layer_id == dst)
        stride = max(1, round(src_spec.height / dst_spec.height))
        weights = rng.normal(0.0, 0.01, size=(dst_spec.channels, src_spec.channels, 3, 3))
        for g in range(spec.groups_per_layer):
            for dst_ch in group_channels.get((dst, g), []):
                for src_ch in group_channels.get((src, g), []):
                    weights[dst_ch, src_ch, 1, 1] += 1.0
        write_kernel_file(out_dir / kernel_file_name(src, dst), weights.astype(np.float32), stride)

    info = PlantedInfo(groups=planted, pools=pools)
    payload = {
        "groups": {str(n): label for n, label in sorted(planted.items())},
        "pools": {label: ids for label, ids in sorted(pools.items())},
    }
    (out_dir / PLANTED_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return info


def _noise_maps(rng: np.random.Generator, spec: SyntheticSpec, shape: tuple) -> np.ndarray:
    if spec.noise == 0:
        return np.zeros(shape, dtype=np.float32)
    # Mostly negative so noise masks stay sparse (~20% positive cells).
    return rng.uniform(-spec.noise, spec.noise * 0.25, size=shape).astype(np.float32)


def _jitter_cells(region_size: int, iou_target: float) -> int:
    # Adding e private cells per mask gives pairwise IoU m / (m + 2e).
    return int(round(region_size * (1.0 - iou_target) / (2.0 * iou_target)))


def load_planted(bundle_dir: str | Path) -> PlantedInfo:
    payload = json.loads((Path(bundle_dir) / PLANTED_FILE).read_text())
    return PlantedInfo(
        groups={NeuronRef.parse(k): v for k, v in payload["groups"].items()},
        pools={k: list(v) for k, v in payload["pools"].items()},
    )


# -- partition agreement -----------------------------------------------------


def adjusted_rand_index(labels_a: Sequence, labels_b: Sequence) -> float:
    """Chance-corrected agreement between two partitions of the same items."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label sequences must have equal length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("empty partitions")
    counts: dict[tuple, int] = defaultdict(int)
    rows: dict = defaultdict(int)
    cols: dict = defaultdict(int)
    for a, b in zip(labels_a, labels_b):
        counts[(a, b)] += 1
        rows[a] += 1
        cols[b] += 1
    sum_cells = sum(math.comb(c, 2) for c in counts.values())
    sum_rows = sum(math.comb(c, 2) for c in rows.values())
    sum_cols = sum(math.comb(c, 2) for c in cols.values())
    total = math.comb(n, 2)
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def pairwise_f1(labels_a: Sequence, labels_b: Sequence) -> float:
    """F1 over same-group pair decisions, treating labels_a as ground truth."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label sequences must have equal length")
    tp = fp = fn = 0
    n = len(labels_a)
    for i in range(n):
        for j in range(i + 1, n):
            truth = labels_a[i] == labels_a[j]
            pred = labels_b[i] == labels_b[j]
            if truth and pred:
                tp += 1
            elif pred and not truth:
                fp += 1
            elif truth and not pred:
                fn += 1
    if tp == 0:
        return 0.0 if (fp or fn) else 1.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


# -- intruder tasks ----------------------------------------------------------


@dataclass
class IntruderTask:
    task_id: int
    mode: str  # "cluster" or "random"
    source: str  # "generated", "curated", or "random"
    slots: list[dict]  # per slot: {"neuron": str, "patches": [...]}
    cluster_id: str | None
    member_slots: list[int] | None
    intruder_slot: int | None


@dataclass
class Judgment:
    task_id: int
    respondent: str
    selected_slots: list[int]
    label: str | None = None


@dataclass
class ScoreReport:
    fpr: float | None
    roc_points: list[tuple[float, float]]
    auc: float | None


def largest_remainder_counts(proportions: Sequence[float], total: int) -> list[int]:
    """Integer allocation of total by proportions, largest remainder first."""
    if total < 0:
        raise ValueError("total must be >= 0")
    weight = sum(proportions)
    if weight <= 0:
        raise ValueError("proportions must sum to a positive value")
    quotas = [p / weight * total for p in proportions]
    counts = [int(math.floor(q)) for q in quotas]
    leftovers = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftovers]:
        counts[i] += 1
    return counts


def generate_tasks(
    clusters: Sequence[NeuronCluster],
    patch_lookup: Callable[[NeuronRef], list],
    all_neurons: Sequence[NeuronRef],
    count: int,
    proportions: tuple[float, float, float] = (0.43, 0.43, 0.14),
    seed: int = 0,
    curated_clusters: Sequence[NeuronCluster] | None = None,
) -> list[IntruderTask]:
    """Build shuffled six-slot tasks from clusters plus random baselines.

    proportions allocates tasks to (generated clusters, curated clusters,
    fully random) via largest-remainder rounding. Without a curated list,
    the curated share is drawn from the same generated clusters but tagged
    so scoring can report the sources separately.
    """
    rng = np.random.default_rng([seed, _STREAM_TASKS])
    eligible = [c for c in clusters if len(c.members) >= 5]
    curated_pool = [c for c in (curated_clusters or []) if len(c.members) >= 5] or eligible
    counts = largest_remainder_counts(proportions, count)
    if (counts[0] or counts[1]) and not eligible:
        raise ValueError("no cluster with >= 5 members; cannot build cluster-mode tasks")
    if len(all_neurons) < 6:
        raise ValueError("need at least 6 neurons")

    tasks: list[IntruderTask] = []
    plan = [("generated", eligible)] * counts[0] + [("curated", curated_pool)] * counts[1] + [
        ("random", None)
    ] * counts[2]
    for task_id, (source, pool) in enumerate(plan):
        if pool is None:
            picked = rng.choice(len(all_neurons), size=6, replace=False)
            neurons = [all_neurons[i] for i in picked]
            slots = [{"neuron": str(n), "patches": patch_lookup(n)} for n in neurons]
            tasks.append(
                IntruderTask(
                    task_id=task_id,
                    mode="random",
                    source=source,
                    slots=slots,
                    cluster_id=None,
                    member_slots=None,
                    intruder_slot=None,
                )
            )
            continue
        cluster = pool[int(rng.integers(len(pool)))]
        member_ids = rng.choice(len(cluster.members), size=5, replace=False)
        members = [cluster.members[i] for i in member_ids]
        member_set = set(cluster.members)
        outsiders = [n for n in all_neurons if n not in member_set]
        if not outsiders:
            raise ValueError("no outsider neuron available for an intruder")
        intruder = outsiders[int(rng.integers(len(outsiders)))]
        lineup = members + [intruder]
        order = rng.permutation(6)
        slots = [
            {"neuron": str(lineup[i]), "patches": patch_lookup(lineup[i])} for i in order
        ]
        positions = {int(order[pos]): pos for pos in range(6)}
        tasks.append(
            IntruderTask(
                task_id=task_id,
                mode="cluster",
                source=source,
                slots=slots,
                cluster_id=cluster.cluster_id,
                member_slots=sorted(positions[i] for i in range(5)),
                intruder_slot=positions[5],
            )
        )
    return tasks


def score(tasks: Sequence[IntruderTask], judgments: Sequence[Judgment]) -> ScoreReport:
    """FPR, ROC over per-neuron inclusion scores, and trapezoidal AUC.

    Inclusion score of a slot = fraction of that task's qualifying
    respondents (selected >= 3 slots) who picked it. FPR counts every
    cluster-mode judgment that selected the intruder, qualifying or not.
    When no judgment qualifies anywhere, the metrics are undefined (None),
    not zero.
    """
    by_task: dict[int, IntruderTask] = {t.task_id: t for t in tasks}
    selected: dict[int, list[Judgment]] = defaultdict(list)
    for judgment in judgments:
        if judgment.task_id not in by_task:
            raise KeyError(f"judgment references unknown task {judgment.task_id}")
        task = by_task[judgment.task_id]
        for slot in judgment.selected_slots:
            if not 0 <= slot < len(task.slots):
                raise ValueError(f"judgment selects invalid slot {slot}")
        selected[judgment.task_id].append(judgment)

    cluster_judgments = 0
    intruder_hits = 0
    labeled_scores: list[tuple[float, bool]] = []
    for task in tasks:
        entries = selected.get(task.task_id, [])
        if task.mode == "cluster":
            for judgment in entries:
                cluster_judgments += 1
                if task.intruder_slot in judgment.selected_slots:
                    intruder_hits += 1
        qualifying = [
            j for j in entries if len(set(j.selected_slots)) >= CLUSTER_PRESENT_MIN_SELECTED
        ]
        if task.mode != "cluster" or not qualifying:
            continue
        member_set = set(task.member_slots or [])
        for slot in range(len(task.slots)):
            fraction = sum(slot in j.selected_slots for j in qualifying) / len(qualifying)
            labeled_scores.append((fraction, slot in member_set))

    fpr = intruder_hits / cluster_judgments if cluster_judgments else None
    points, auc = roc_curve(labeled_scores)
    return ScoreReport(fpr=fpr, roc_points=points, auc=auc)


def roc_curve(labeled_scores: Sequence[tuple[float, bool]]) -> tuple[list[tuple[float, float]], float | None]:
    """ROC points over score thresholds plus trapezoidal AUC.

    Undefined (empty points, None) when either class is absent.
    """
    positives = sum(1 for _, good in labeled_scores if good)
    negatives = len(labeled_scores) - positives
    if positives == 0 or negatives == 0:
        return [], None
    thresholds = sorted({s for s, _ in labeled_scores}, reverse=True)
    points = [(0.0, 0.0)]
    for threshold in thresholds:
        tp = sum(1 for s, good in labeled_scores if good and s >= threshold)
        fp = sum(1 for s, good in labeled_scores if not good and s >= threshold)
        points.append((fp / negatives, tp / positives))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return points, float(np.trapezoid(ys, xs))


# -- serialization -----------------------------------------------------------


def tasks_payload(tasks: Sequence[IntruderTask]) -> dict:
    return {
        "tasks": [
            {
                "task_id": t.task_id,
                "mode": t.mode,
                "source": t.source,
                "slots": t.slots,
                "cluster_id": t.cluster_id,
                "member_slots": t.member_slots,
                "intruder_slot": t.intruder_slot,
            }
            for t in tasks
        ]
    }


def tasks_from_payload(payload: Mapping) -> list[IntruderTask]:
    return [
        IntruderTask(
            task_id=entry["task_id"],
            mode=entry["mode"],
            source=entry["source"],
            slots=entry["slots"],
            cluster_id=entry.get("cluster_id"),
            member_slots=entry.get("member_slots"),
            intruder_slot=entry.get("intruder_slot"),
        )
        for entry in payload["tasks"]
    ]


def judgments_from_payload(payload: Mapping) -> list[Judgment]:
    return [
        Judgment(
            task_id=entry["task_id"],
            respondent=entry["respondent"],
            selected_slots=list(entry["selected_slots"]),
            label=entry.get("label"),
        )
        for entry in payload["judgments"]
    ]


def score_payload(report: ScoreReport) -> dict:
    return {
        "fpr": report.fpr,
        "roc_points": [[x, y] for x, y in report.roc_points],
        "auc": report.auc,
    }
