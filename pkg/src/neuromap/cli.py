"""Pipeline command line: topk, cluster, embed, project, graph, cascade,
serve, eval, validate.

Stages communicate only through files in the bundle directory, so each can
be re-run in isolation and a missing prerequisite names the stage that
produces it. ``--seed`` propagates to every stage RNG; re-running a stage
with identical inputs and seed reproduces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import schemas
from .bundle import (
    CLUSTERS_FILE,
    EMBEDDING_FILE,
    TOPK_FILE,
    BundleError,
    SummaryBundle,
    clusters_from_payload,
    clusters_payload,
    embedding_payload,
    read_json,
    topk_from_payload,
    topk_payload,
    write_json,
)
from .cascade import CascadeConfig
from .clustering import ClusteringConfig, main_cluster, preprocess, verify_clusters
from .embedding import (
    EmbeddingConfig,
    EmbeddingTable,
    neighbor_overlap_metric,
    project,
    sample_pairs,
    train,
)
from .evalharness import (
    SyntheticSpec,
    generate_synthetic,
    generate_tasks,
    judgments_from_payload,
    score,
    score_payload,
    tasks_from_payload,
    tasks_payload,
)
from .store import DatasetHandle, NCAFError, NeuronRef


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class ProjectionConfig:
    method: str = "pca"
    path: str | None = None


@dataclasses.dataclass
class EvalConfig:
    count: int = 30
    proportions: tuple[float, float, float] = (0.43, 0.43, 0.14)
    patches_per_slot: int = 3


@dataclasses.dataclass
class PipelineConfig:
    seed: int = 0
    clustering: ClusteringConfig = dataclasses.field(default_factory=ClusteringConfig)
    embedding: EmbeddingConfig = dataclasses.field(default_factory=EmbeddingConfig)
    cascade: CascadeConfig = dataclasses.field(default_factory=CascadeConfig)
    projection: ProjectionConfig = dataclasses.field(default_factory=ProjectionConfig)
    synthetic: SyntheticSpec = dataclasses.field(default_factory=SyntheticSpec)
    eval: EvalConfig = dataclasses.field(default_factory=EvalConfig)


_SECTIONS = {
    "clustering": ClusteringConfig,
    "embedding": EmbeddingConfig,
    "cascade": CascadeConfig,
    "projection": ProjectionConfig,
    "synthetic": SyntheticSpec,
    "eval": EvalConfig,
}


def load_config(path: str | None, seed_override: int | None) -> PipelineConfig:
    """Build the pipeline config from an optional JSON file plus overrides.

    Unknown keys are rejected at every level; --seed wins over every seed
    in the file so a single flag pins all randomness.
    """
    config = PipelineConfig()
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in raw.items():
            if key == "seed":
                config.seed = int(value)
                continue
            cls = _SECTIONS.get(key)
            if cls is None:
                raise ConfigError(f"unknown config key {key!r}")
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(cls)}
            bad = sorted(set(value) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in {key!r}: {', '.join(bad)}")
            kwargs = dict(value)
            if "proportions" in kwargs:
                kwargs["proportions"] = tuple(kwargs["proportions"])
            if "layers" in kwargs:
                kwargs["layers"] = [tuple(item) for item in kwargs["layers"]]
            setattr(config, key, cls(**kwargs))
    if seed_override is not None:
        config.seed = seed_override
    # One root seed drives every stage unless a section pinned its own.
    for section in ("clustering", "embedding", "synthetic"):
        target = getattr(config, section)
        if seed_override is not None or target.seed == 0:
            target.seed = config.seed
    return config


def _require(bundle_dir: Path, name: str, producer: str):
    path = bundle_dir / name
    if not path.is_file():
        raise BundleError(
            f"missing {name} in {bundle_dir}; run the `{producer}` stage first"
        )
    return read_json(path)


def _parallel(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_handle(bundle_dir: Path) -> DatasetHandle:
    return DatasetHandle(bundle_dir)


# -- stages -------------------------------------------------------------------


def cmd_topk(args, config: PipelineConfig) -> int:
    handle = _load_handle(args.bundle)
    k = config.clustering.k

    def one_layer(spec):
        return [
            handle.top_k_images(NeuronRef(spec.layer_id, ch), k)
            for ch in range(spec.channels)
        ]

    per_layer = _parallel(one_layer, handle.layer_list, args.threads)
    topk = {entry.neuron: entry for entries in per_layer for entry in entries}
    write_json(args.bundle / TOPK_FILE, topk_payload(topk, k))
    print(f"wrote {TOPK_FILE}: {len(topk)} neurons, k={k}")
    return 0


def cmd_cluster(args, config: PipelineConfig) -> int:
    handle = _load_handle(args.bundle)
    topk = topk_from_payload(_require(args.bundle, TOPK_FILE, "topk"))
    pregroups = preprocess(handle, topk, config.clustering)
    clusters = main_cluster(handle, pregroups, config.clustering)
    write_json(args.bundle / CLUSTERS_FILE, clusters_payload(clusters))
    print(f"wrote {CLUSTERS_FILE}: {len(clusters)} clusters")
    if args.verify:
        report = verify_clusters(handle, clusters, topk)
        if args.json:
            print(json.dumps(report, indent=2, sort_keys=True))
        else:
            for row in report["clusters"]:
                print(
                    f"  {row['cluster_id']} size={row['size']} "
                    f"min_topk_jaccard={row['min_pair_top_image_jaccard']:.3f} "
                    f"min_best_overlap={row['min_pair_best_map_overlap']:.3f}"
                )
    return 0


def _embedding_config_dict(config: EmbeddingConfig) -> dict:
    return {
        "dim": config.dim,
        "negatives": config.negatives,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "seed": config.seed,
        "freeze_negatives": config.freeze_negatives,
    }


def cmd_embed(args, config: PipelineConfig) -> int:
    handle = _load_handle(args.bundle)
    topk = topk_from_payload(_require(args.bundle, TOPK_FILE, "topk"))
    neurons = handle.neurons()
    pairs = sample_pairs(topk, handle.num_images, neurons, config.embedding.seed)
    if not pairs.pairs:
        raise BundleError("no co-activation pairs found; dataset too sparse to embed")
    layer_members = {
        spec.layer_id: [NeuronRef(spec.layer_id, ch) for ch in range(spec.channels)]
        for spec in handle.layer_list
    }
    table = train(pairs, layer_members, config.embedding)
    layout = project(table, "pca")
    metric = neighbor_overlap_metric(table, layout)
    write_json(
        args.bundle / EMBEDDING_FILE,
        embedding_payload(table, layout, _embedding_config_dict(config.embedding), metric),
    )
    print(
        f"wrote {EMBEDDING_FILE}: {len(table.neurons)} vectors from {len(pairs.pairs)} pairs, "
        f"neighbor overlap {metric:.3f}"
    )
    return 0


def cmd_project(args, config: PipelineConfig) -> int:
    payload = _require(args.bundle, EMBEDDING_FILE, "embed")
    import numpy as np

    neurons = [NeuronRef.parse(key) for key in sorted(payload["vectors"])]
    table = EmbeddingTable(
        neurons=neurons,
        vectors=np.array([payload["vectors"][str(n)] for n in neurons], dtype=np.float64),
    )
    layout = project(table, config.projection.method, config.projection.path)
    metric = neighbor_overlap_metric(table, layout)
    payload["layout2d"] = {
        str(neuron): [x, y] for neuron, (x, y) in layout.positions.items()
    }
    payload["neighbor_overlap_metric"] = metric
    write_json(args.bundle / EMBEDDING_FILE, payload)
    print(f"updated layout2d ({config.projection.method}), neighbor overlap {metric:.3f}")
    return 0


def cmd_graph(args, config: PipelineConfig) -> int:
    if not args.class_label:
        raise ConfigError("graph requires --class <label>")
    _require(args.bundle, CLUSTERS_FILE, "cluster")
    _require(args.bundle, EMBEDDING_FILE, "embed")
    bundle = SummaryBundle(args.bundle)
    payload = bundle.class_graph(args.class_label, 0.0)
    filtered = bundle.class_graph(args.class_label, args.min_importance or 0.0)
    if args.json:
        print(json.dumps(filtered, indent=2, sort_keys=True))
    else:
        print(
            f"graph_{args.class_label}.json: {len(payload['nodes'])} nodes, "
            f"{len(payload['edges'])} edges"
            + (
                f" ({len(filtered['nodes'])} nodes above importance {args.min_importance})"
                if args.min_importance
                else ""
            )
        )
    return 0


def cmd_cascade(args, config: PipelineConfig) -> int:
    if not args.cluster:
        raise ConfigError("cascade requires --cluster <id>")
    _require(args.bundle, CLUSTERS_FILE, "cluster")
    _require(args.bundle, EMBEDDING_FILE, "embed")
    bundle = SummaryBundle(args.bundle)
    payload = bundle.cascade(
        args.cluster,
        trigger_top_n=config.cascade.trigger_top_n,
        class_context=args.class_label,
        config=config.cascade,
    )
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"cascade from {args.cluster}:")
        for layer in payload["layers"]:
            names = ", ".join(t["neuron"] for t in layer["triggered"]) or "(nothing)"
            print(f"  {layer['layer']}: {names}")
    return 0


def cmd_serve(args, config: PipelineConfig) -> int:
    from .service import serve

    _require(args.bundle, CLUSTERS_FILE, "cluster")
    _require(args.bundle, EMBEDDING_FILE, "embed")
    serve(args.bundle, port=args.port, ui_dir=args.ui_dir)
    return 0


def cmd_eval(args, config: PipelineConfig) -> int:
    if args.mode == "synth":
        spec = config.synthetic
        generate_synthetic(spec, args.bundle)
        print(
            f"wrote synthetic bundle to {args.bundle}: "
            f"{len(spec.layers)} layers, {spec.num_images} images"
        )
        return 0
    if args.mode == "tasks":
        handle = _load_handle(args.bundle)
        clusters = clusters_from_payload(_require(args.bundle, CLUSTERS_FILE, "cluster"))
        _require(args.bundle, EMBEDDING_FILE, "embed")
        bundle = SummaryBundle(args.bundle)

        def patch_lookup(neuron: NeuronRef):
            return bundle.patches_payload(str(neuron), config.eval.patches_per_slot)["patches"]

        tasks = generate_tasks(
            clusters,
            patch_lookup,
            handle.neurons(),
            count=config.eval.count,
            proportions=config.eval.proportions,
            seed=config.seed,
        )
        write_json(args.bundle / "tasks.json", tasks_payload(tasks))
        print(f"wrote tasks.json: {len(tasks)} tasks")
        return 0
    if args.mode == "score":
        if not args.path:
            raise ConfigError("eval score requires a judgments file path")
        tasks = tasks_from_payload(_require(args.bundle, "tasks.json", "eval tasks"))
        judgments = judgments_from_payload(read_json(args.path))
        report = score(tasks, judgments)
        print(json.dumps(score_payload(report), indent=2, sort_keys=True))
        return 0
    raise ConfigError(f"unknown eval mode {args.mode!r} (expected synth|tasks|score)")


def cmd_validate(args, config: PipelineConfig) -> int:
    """Check dataset integrity plus the schema of every artifact present."""
    problems: list[str] = []
    handle = None
    try:
        handle = _load_handle(args.bundle)
    except NCAFError as exc:
        problems.append(str(exc))
    if handle is not None and handle.connections:
        from .classgraph import read_kernel_bank

        try:
            read_kernel_bank(handle)
        except NCAFError as exc:
            problems.append(str(exc))

    checks = [
        (TOPK_FILE, schemas.TOPK_SCHEMA),
        (CLUSTERS_FILE, schemas.CLUSTERS_SCHEMA),
        (EMBEDDING_FILE, schemas.EMBEDDING_FILE_SCHEMA),
        ("tasks.json", schemas.TASKS_SCHEMA),
    ]
    found = []
    for name, schema in checks:
        path = args.bundle / name
        if not path.is_file():
            continue
        found.append(name)
        try:
            schemas.check(read_json(path), schema)
        except Exception as exc:  # jsonschema error or BundleError
            problems.append(f"{name}: {exc}")
    for path in sorted(args.bundle.glob("graph_*.json")):
        found.append(path.name)
        try:
            schemas.check(read_json(path), schemas.GRAPH_SCHEMA)
        except Exception as exc:
            problems.append(f"{path.name}: {exc}")
    have_bundle = (args.bundle / CLUSTERS_FILE).is_file() and (
        args.bundle / EMBEDDING_FILE
    ).is_file()
    if handle is not None and have_bundle and not problems:
        try:
            SummaryBundle(args.bundle)  # cross-reference checks
        except (BundleError, KeyError, ValueError, TypeError) as exc:
            problems.append(f"bundle cross-references: {exc}")

    if problems:
        for problem in problems:
            print(f"FAIL: {problem}", file=sys.stderr)
        return 1
    print(f"bundle ok: dataset valid, artifacts checked: {', '.join(found) or 'none'}")
    return 0


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuromap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, bundle_required: bool = True):
        p.add_argument("--bundle", type=Path, required=bundle_required, help="bundle directory")
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="root seed for all RNGs")
        p.add_argument("--threads", type=int, default=0, help="worker threads (0 = all cores)")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("topk", help="rank top-k images per neuron")
    common(p)
    p = sub.add_parser("cluster", help="two-stage neuron clustering")
    common(p)
    p.add_argument("--verify", action="store_true", help="audit clusters with exact similarities")
    p = sub.add_parser("embed", help="train co-activation embedding + 2D layout")
    common(p)
    p = sub.add_parser("project", help="recompute the 2D layout")
    common(p)
    p = sub.add_parser("graph", help="build a per-class concept graph")
    common(p)
    p.add_argument("--class", dest="class_label", type=str, default=None)
    p.add_argument("--min-importance", dest="min_importance", type=float, default=0.0)
    p = sub.add_parser("cascade", help="run a concept cascade from a cluster")
    common(p)
    p.add_argument("--cluster", type=str, default=None)
    p.add_argument("--class", dest="class_label", type=str, default=None)
    p = sub.add_parser("serve", help="serve the bundle over HTTP")
    common(p)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui-dir", type=Path, default=None, help="static web UI directory")
    p = sub.add_parser("eval", help="synthetic data, intruder tasks, scoring")
    common(p)
    p.add_argument("mode", choices=["synth", "tasks", "score"])
    p.add_argument("path", nargs="?", default=None, help="judgments file for `score`")
    p = sub.add_parser("validate", help="check bundle integrity")
    common(p)
    return parser


_COMMANDS = {
    "topk": cmd_topk,
    "cluster": cmd_cluster,
    "embed": cmd_embed,
    "project": cmd_project,
    "graph": cmd_graph,
    "cascade": cmd_cascade,
    "serve": cmd_serve,
    "eval": cmd_eval,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads <= 0:
        import os

        args.threads = os.cpu_count() or 1
    try:
        config = load_config(args.config, args.seed)
        return _COMMANDS[args.command](args, config)
    except (BundleError, NCAFError, ConfigError, KeyError, ValueError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
