"""Co-activation neuron embeddings.

Related neurons are sampled as pairs from per-image co-occurrence lists
(a shuffled sliding window of size 2 over the neurons that share a top
image), then trained with logistic loss plus negative sampling: each pair
pulls its two vectors together while sampled same-layer negatives push
away. Training is plain per-pair SGD and is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .store import NeuronRef, TopKImages

_STREAM_PAIRS = 10
_STREAM_TRAIN = 11


@dataclass
class EmbeddingConfig:
    dim: int = 16
    negatives: int = 10
    epochs: int = 30
    learning_rate: float = 0.01
    seed: int = 0
    freeze_negatives: bool = False

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class PairDataset:
    pairs: list[tuple[NeuronRef, NeuronRef]]
    provenance: list[int]  # image id that generated each pair


@dataclass
class EmbeddingTable:
    """One d-dim vector per model neuron, in (layer order, channel) order."""

    neurons: list[NeuronRef]
    vectors: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index = {n: i for i, n in enumerate(self.neurons)}

    def __contains__(self, neuron: NeuronRef) -> bool:
        return neuron in self._index

    def index(self, neuron: NeuronRef) -> int:
        return self._index[neuron]

    def vector(self, neuron: NeuronRef) -> np.ndarray:
        return self.vectors[self._index[neuron]]


@dataclass
class Layout2D:
    positions: dict[NeuronRef, tuple[float, float]]


def sample_pairs(
    topk: Mapping[NeuronRef, TopKImages],
    num_images: int,
    neurons: Sequence[NeuronRef],
    seed: int = 0,
) -> PairDataset:
    """Sample co-activation pairs: per image, a shuffled size-2 sliding window.

    The per-image list holds every neuron (across all layers) whose top-k
    images include that image, so the pair count is sum(max(0, L_x - 1))
    over images — linear in the total top-k volume, never quadratic.
    """
    by_image: dict[int, list[NeuronRef]] = {}
    for neuron in neurons:
        for image_id in topk[neuron].image_ids:
            by_image.setdefault(image_id, []).append(neuron)
    rng = np.random.default_rng([seed, _STREAM_PAIRS])
    pairs: list[tuple[NeuronRef, NeuronRef]] = []
    provenance: list[int] = []
    for image_id in range(num_images):
        listed = by_image.get(image_id)
        if not listed or len(listed) < 2:
            continue
        order = rng.permutation(len(listed))
        shuffled = [listed[i] for i in order]
        for a, b in zip(shuffled, shuffled[1:]):
            pairs.append((a, b))
            provenance.append(image_id)
    return PairDataset(pairs=pairs, provenance=provenance)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(x):
    """log(1 + e^x) without overflow; -log(sigmoid(x)) == softplus(-x)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if out.ndim == 0:
        return float(out)
    return out


def pair_loss(
    vec_i: np.ndarray,
    vec_j: np.ndarray,
    negs_i: np.ndarray,
    negs_j: np.ndarray,
) -> float:
    """Loss of one pair: -log s(vi.vj) + sum -log(1 - s(v.vm)) over negatives."""
    total = softplus(-float(vec_i @ vec_j))
    if len(negs_i):
        total += float(np.sum(softplus(negs_i @ vec_i)))
    if len(negs_j):
        total += float(np.sum(softplus(negs_j @ vec_j)))
    return total


def pair_gradients(
    vec_i: np.ndarray,
    vec_j: np.ndarray,
    negs_i: np.ndarray,
    negs_j: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of pair_loss w.r.t. (vi, vj, each negs_i, each negs_j)."""
    pull = -(1.0 - sigmoid(float(vec_i @ vec_j)))
    grad_i = pull * vec_j
    grad_j = pull * vec_i
    if len(negs_i):
        s_i = sigmoid(negs_i @ vec_i)
        grad_i = grad_i + s_i @ negs_i
        grad_negs_i = s_i[:, None] * vec_i[None, :]
    else:
        grad_negs_i = np.zeros((0, vec_i.shape[0]))
    if len(negs_j):
        s_j = sigmoid(negs_j @ vec_j)
        grad_j = grad_j + s_j @ negs_j
        grad_negs_j = s_j[:, None] * vec_j[None, :]
    else:
        grad_negs_j = np.zeros((0, vec_j.shape[0]))
    return grad_i, grad_j, grad_negs_i, grad_negs_j


def dataset_loss(
    table: EmbeddingTable,
    pairs: Sequence[tuple[NeuronRef, NeuronRef]],
    negatives: Sequence[tuple[Sequence[NeuronRef], Sequence[NeuronRef]]],
) -> float:
    """Total loss over a batch of pairs with their drawn negatives."""
    dim = table.vectors.shape[1]

    def gather(refs):
        if not refs:
            return np.zeros((0, dim))
        return np.stack([table.vector(m) for m in refs])

    total = 0.0
    for (i, j), (negs_i, negs_j) in zip(pairs, negatives):
        total += pair_loss(table.vector(i), table.vector(j), gather(negs_i), gather(negs_j))
    return total


def _draw_negatives(
    rng: np.random.Generator, candidates: np.ndarray, banned: tuple[int, int], count: int
) -> np.ndarray:
    # One vectorized draw per endpoint; collisions with either pair endpoint
    # are re-drawn up to 8 times, then that negative slot is skipped.
    if count == 0:
        return np.empty(0, dtype=np.int64)
    picks = candidates[rng.integers(0, candidates.size, size=count)]
    collided = (picks == banned[0]) | (picks == banned[1])
    if not collided.any():
        return picks
    kept: list[int] = []
    for slot in range(count):
        if not collided[slot]:
            kept.append(int(picks[slot]))
            continue
        for _attempt in range(8):
            retry = int(candidates[int(rng.integers(candidates.size))])
            if retry != banned[0] and retry != banned[1]:
                kept.append(retry)
                break
    return np.array(kept, dtype=np.int64)


def train(
    pairs: PairDataset,
    layer_members: Mapping[str, Sequence[NeuronRef]],
    config: EmbeddingConfig,
) -> EmbeddingTable:
    """SGD over shuffled pairs with per-endpoint same-layer negative sampling.

    Every model neuron gets a vector; neurons that never appear in a pair
    keep their initialization. Negative vectors receive their own gradient
    updates unless config.freeze_negatives is set.
    """
    if not pairs.pairs:
        raise ValueError("pair dataset is empty")
    neurons = [n for members in layer_members.values() for n in members]
    index = {n: i for i, n in enumerate(neurons)}
    layer_slots = {
        layer: np.array([index[n] for n in members], dtype=np.int64)
        for layer, members in layer_members.items()
    }
    pair_idx = np.array(
        [(index[a], index[b]) for a, b in pairs.pairs], dtype=np.int64
    )
    pair_layers = [(a.layer_id, b.layer_id) for a, b in pairs.pairs]

    rng = np.random.default_rng([config.seed, _STREAM_TRAIN])
    dim = config.dim
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(neurons), dim))
    gamma = config.learning_rate
    history: list[float] = []

    # Inner loop is fused: one dot-product array and one shared exp feed the
    # loss and the pair_loss / pair_gradients formulas in a single pass
    # (consistency with the reference functions is pinned by test).
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for pid in rng.permutation(len(pairs.pairs)):
            ii, jj = int(pair_idx[pid, 0]), int(pair_idx[pid, 1])
            layer_i, layer_j = pair_layers[pid]
            banned = (ii, jj)
            negs_i = _draw_negatives(rng, layer_slots[layer_i], banned, config.negatives)
            negs_j = _draw_negatives(rng, layer_slots[layer_j], banned, config.negatives)
            count_i = negs_i.size
            vec_i = vectors[ii].copy()
            vec_j = vectors[jj].copy()
            mat_i = vectors[negs_i]  # fancy indexing copies pre-update rows
            mat_j = vectors[negs_j]
            dots = np.concatenate(([vec_i @ vec_j], mat_i @ vec_i, mat_j @ vec_j))
            decay = np.exp(-np.abs(dots))
            sig = np.where(dots >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
            # loss terms: softplus(-dots[0]) for the pair, softplus(+) for negs
            log_terms = np.log1p(decay)
            epoch_loss += float(log_terms.sum())
            epoch_loss += max(-dots[0], 0.0) + float(np.maximum(dots[1:], 0.0).sum())
            pull = -(1.0 - sig[0])
            sig_i = sig[1 : 1 + count_i]
            sig_j = sig[1 + count_i :]
            grad_i = pull * vec_j
            grad_j = pull * vec_i
            if count_i:
                grad_i = grad_i + sig_i @ mat_i
            if sig_j.size:
                grad_j = grad_j + sig_j @ mat_j
            vectors[ii] -= gamma * grad_i
            vectors[jj] -= gamma * grad_j
            if not config.freeze_negatives:
                _apply_negative_updates(vectors, negs_i, gamma * sig_i, vec_i)
                _apply_negative_updates(vectors, negs_j, gamma * sig_j, vec_j)
        history.append(epoch_loss / len(pairs.pairs))
        if not np.isfinite(vectors).all():
            bad = int(np.count_nonzero(~np.isfinite(vectors).all(axis=1)))
            raise RuntimeError(
                f"training diverged at epoch {epoch}: {bad} neuron vectors non-finite "
                f"(learning_rate={gamma})"
            )
    return EmbeddingTable(neurons=neurons, vectors=vectors, loss_history=history)


def _apply_negative_updates(
    vectors: np.ndarray, slots: np.ndarray, scaled: np.ndarray, endpoint: np.ndarray
) -> None:
    """vectors[slots] -= outer(scaled, endpoint), accumulating duplicate slots."""
    if slots.size == 0:
        return
    update = scaled[:, None] * endpoint[None, :]
    if len(set(slots.tolist())) == slots.size:
        vectors[slots] -= update
    else:
        np.subtract.at(vectors, slots, update)


# -- 2D projection -----------------------------------------------------------


def project(
    table: EmbeddingTable, method: str = "pca", layout_file: str | None = None
) -> Layout2D:
    """Project the d-dim table to 2D.

    ``pca`` takes the top-2 centered principal components (signs fixed so
    repeated runs are identical). ``external`` loads positions produced by
    any external reducer from a JSON file keyed by "layer:channel".
    """
    if method == "pca":
        coords = _pca_2d(table.vectors)
    elif method == "external":
        if layout_file is None:
            raise ValueError("external projection requires a layout file")
        coords = _load_external(table, layout_file)
    else:
        raise ValueError(f"unknown projection method {method!r}")
    return Layout2D(
        positions={
            neuron: (float(coords[i, 0]), float(coords[i, 1]))
            for i, neuron in enumerate(table.neurons)
        }
    )


def _pca_2d(vectors: np.ndarray) -> np.ndarray:
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    if centered.shape[0] < 2:
        return np.zeros((centered.shape[0], 2))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:  # rank-deficient: pad with a zero direction
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], comps.shape[1]))])
    for row in comps:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return centered @ comps.T


def _load_external(table: EmbeddingTable, layout_file: str) -> np.ndarray:
    import json

    with open(layout_file) as fh:
        raw = json.load(fh)
    missing = [str(n) for n in table.neurons if str(n) not in raw]
    if missing:
        raise ValueError(f"external layout missing {len(missing)} neurons: {', '.join(missing[:8])}")
    coords = np.array([raw[str(n)][:2] for n in table.neurons], dtype=np.float64)
    return coords


def neighbors(table: EmbeddingTable, neuron: NeuronRef, k: int) -> list[NeuronRef]:
    """Top-k neighbors by cosine similarity, self excluded, stable tie order."""
    sims = _cosine_row(table, neuron)
    own = table.index(neuron)
    order = np.lexsort((np.arange(len(table.neurons)), -sims))
    picked = [i for i in order if i != own][: max(0, k)]
    return [table.neurons[i] for i in picked]


def neighbor_similarities(table: EmbeddingTable, neuron: NeuronRef, k: int) -> list[tuple[NeuronRef, float]]:
    sims = _cosine_row(table, neuron)
    return [(n, float(sims[table.index(n)])) for n in neighbors(table, neuron, k)]


def _cosine_row(table: EmbeddingTable, neuron: NeuronRef) -> np.ndarray:
    vecs = table.vectors
    norms = np.linalg.norm(vecs, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    target = table.vector(neuron)
    target_norm = np.linalg.norm(target)
    if target_norm == 0:
        return np.zeros(len(vecs))
    sims = (vecs @ target) / (safe * target_norm)
    sims[norms == 0] = 0.0
    return sims


def neighbor_overlap_metric(table: EmbeddingTable, layout: Layout2D, k: int = 10) -> float:
    """Mean overlap of top-k neighbor sets between d-dim cosine and 2D Euclidean."""
    n = len(table.neurons)
    if n < 2:
        return 1.0
    k_eff = min(k, n - 1)
    coords = np.array([layout.positions[neuron] for neuron in table.neurons])
    norms = np.linalg.norm(table.vectors, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = table.vectors / safe[:, None]
    cos = unit @ unit.T
    cos[norms == 0, :] = 0.0
    cos[:, norms == 0] = 0.0
    overlaps = []
    order_idx = np.arange(n)
    for i in range(n):
        high = np.lexsort((order_idx, -cos[i]))
        top_high = [int(x) for x in high if x != i][:k_eff]
        dist = np.linalg.norm(coords - coords[i], axis=1)
        low = np.lexsort((order_idx, dist))
        top_low = [int(x) for x in low if x != i][:k_eff]
        overlaps.append(len(set(top_high) & set(top_low)) / k_eff)
    return float(np.mean(overlaps))
