import json

import numpy as np
import pytest

from neuromap import cli
from neuromap.store import DatasetHandle, ImageRecord, LayerSpec, write_dataset

SMALL_SPEC = dict(
    layers=[["conv1", 16, 8, 8], ["conv2", 16, 4, 4]],
    num_images=80,
    groups_per_layer=4,
    iou_target=0.9,
    noise=0.1,
    seed=11,
)

SMALL_CONFIG = {
    "seed": 11,
    "synthetic": SMALL_SPEC,
    "clustering": {"k": 20, "seed": 11},
    "embedding": {"dim": 8, "epochs": 8, "seed": 11},
}


def run_small_pipeline(root):
    """Synthetic bundle plus topk/cluster/embed artifacts, fixed seed."""
    root.mkdir(parents=True, exist_ok=True)
    config_path = root / "config.json"
    config_path.write_text(json.dumps(SMALL_CONFIG))
    base = ["--bundle", str(root), "--config", str(config_path), "--threads", "1"]
    assert cli.main(["eval", "synth", *base]) == 0
    assert cli.main(["topk", *base]) == 0
    assert cli.main(["cluster", *base]) == 0
    assert cli.main(["embed", *base]) == 0
    return root


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory):
    return run_small_pipeline(tmp_path_factory.mktemp("bundle") / "small")


def build_dataset(
    root,
    activations: dict[str, np.ndarray],
    labels=None,
    connections=(),
    pixel=(64, 64),
    spatial=None,
):
    """Write a dataset directory from {layer: (N, C, H, W)} arrays."""
    layer_ids = list(activations)
    counts = {arr.shape[0] for arr in activations.values()}
    assert len(counts) == 1, "all layers must share the image count"
    num_images = counts.pop()
    layers = [
        LayerSpec(
            layer_id=lid,
            channels=activations[lid].shape[1],
            height=activations[lid].shape[2],
            width=activations[lid].shape[3],
            order_index=i,
        )
        for i, lid in enumerate(layer_ids)
    ]
    labels = labels or ["default"] * num_images
    images = [
        ImageRecord(
            image_id=i,
            class_label=labels[i],
            pixel_height=pixel[0],
            pixel_width=pixel[1],
        )
        for i in range(num_images)
    ]
    write_dataset(root, layers, images, list(connections), activations)
    return DatasetHandle(root)


@pytest.fixture
def make_dataset(tmp_path):
    counter = 0

    def _make(activations, **kwargs):
        nonlocal counter
        counter += 1
        root = tmp_path / f"ds{counter}"
        return build_dataset(root, activations, **kwargs)

    return _make
