"""Concept summarization for CNN activations.

Discovers groups of neurons that detect the same concept (MinHash + banded
LSH over top-image sets and activation-map regions), learns co-activation
neuron embeddings with negative sampling, builds per-class concept graphs
with influence-weighted edges, and runs interactive concept cascades — all
served over an HTTP/JSON API for the companion web UI.
"""

from .cascade import CascadeConfig, CascadeResult, run_cascade
from .classgraph import (
    ClassGraph,
    KernelBank,
    build_class_graph,
    conv2d_same,
    edge_influence,
    group_edges,
    group_importance,
    neuron_importance,
    read_kernel_bank,
    write_kernel_file,
)
from .clustering import (
    ClusteringConfig,
    NeuronCluster,
    PreGroup,
    activation_similarity,
    cluster_neurons,
    main_cluster,
    preprocess,
    top_image_similarity,
)
from .embedding import (
    EmbeddingConfig,
    EmbeddingTable,
    Layout2D,
    PairDataset,
    neighbor_overlap_metric,
    neighbors,
    project,
    sample_pairs,
    sigmoid,
    train,
)
from .evalharness import (
    IntruderTask,
    Judgment,
    SyntheticSpec,
    adjusted_rand_index,
    generate_synthetic,
    generate_tasks,
    score,
)
from .minhash import BandingParams, HashFamily, band_group, components, signature
from .store import (
    DatasetHandle,
    ImageRecord,
    LayerSpec,
    NCAFError,
    NeuronRef,
    Patch,
    TopKImages,
    quantize,
    write_dataset,
)

__version__ = "0.1.0"
