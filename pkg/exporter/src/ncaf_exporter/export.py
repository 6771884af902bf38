"""Export an NCAF bundle from a CNN forward pass over an image folder.

The image directory holds one subfolder per class. Every image is resized
to a square input, pushed through the model once, and the post-ReLU
activation of each export layer is written to ``act_<layer>.bin`` (magic
NCA1, u32 header, float32 [image][channel][row][col]). Kernel banks come
straight from the conv weights when consecutive export layers are adjacent
in the model; non-adjacent pairs get identity-initialized 1x1 kernels and
the manifest connection entry is flagged with ``kernel_source``.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .model import build_model

ACTIVATION_MAGIC = b"NCA1"
KERNEL_MAGIC = b"NCK1"

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif"}


class ExportError(Exception):
    pass


@dataclass
class ExportSpec:
    image_dir: Path
    out_dir: Path
    model: str = "toy3"
    layers: tuple[str, ...] = ("conv1", "conv2", "conv3")
    input_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        self.image_dir = Path(self.image_dir)
        self.out_dir = Path(self.out_dir)
        if len(self.layers) < 1:
            raise ExportError("need at least one export layer")


def _find_images(image_dir: Path) -> list[tuple[str, Path]]:
    """(class label, path) pairs from per-class subfolders, sorted."""
    if not image_dir.is_dir():
        raise ExportError(f"image directory not found: {image_dir}")
    labeled = []
    for class_dir in sorted(p for p in image_dir.iterdir() if p.is_dir()):
        files = sorted(
            p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        for path in files:
            labeled.append((class_dir.name, path))
    if not labeled:
        raise ExportError(
            f"no class subfolders with images under {image_dir}; "
            "expected <dir>/<class_label>/<image files>"
        )
    return labeled


def load_image_tensor(path: Path, input_size: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Image as a (3, S, S) float tensor in [0, 1] plus original pixel dims."""
    with Image.open(path) as img:
        original = (img.height, img.width)
        rgb = img.convert("RGB").resize((input_size, input_size), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1), original


def export(spec: ExportSpec) -> dict:
    """Run the model over every image and write the bundle; returns the manifest."""
    model = build_model(spec.model, seed=spec.seed)
    stages = list(model.STAGES)
    unknown = [layer for layer in spec.layers if layer not in stages]
    if unknown:
        raise ExportError(f"model {spec.model} has no layer(s): {', '.join(unknown)}")
    order = [stages.index(layer) for layer in spec.layers]
    if order != sorted(order):
        raise ExportError("export layers must be listed in model order")

    labeled = _find_images(spec.image_dir)
    spec.out_dir.mkdir(parents=True, exist_ok=True)

    captured: dict[str, list[np.ndarray]] = {layer: [] for layer in spec.layers}
    image_entries = []
    with torch.no_grad():
        for image_id, (label, path) in enumerate(labeled):
            tensor, (height, width) = load_image_tensor(path, spec.input_size)
            outputs = model(tensor.unsqueeze(0))
            for layer in spec.layers:
                captured[layer].append(outputs[layer][0].numpy().astype("<f4"))
            image_entries.append(
                {
                    "image_id": image_id,
                    "class_label": label,
                    "pixel_height": height,
                    "pixel_width": width,
                    "source_path": str(path.relative_to(spec.image_dir)),
                }
            )

    layer_entries = []
    shapes = {}
    for index, layer in enumerate(spec.layers):
        stack = np.stack(captured[layer])
        shapes[layer] = stack.shape
        layer_entries.append(
            {
                "id": layer,
                "channels": stack.shape[1],
                "height": stack.shape[2],
                "width": stack.shape[3],
                "order_index": index,
            }
        )
        _write_activation_file(spec.out_dir / f"act_{layer}.bin", stack)

    connection_entries = []
    for src, dst in zip(spec.layers, spec.layers[1:]):
        adjacent = stages.index(dst) == stages.index(src) + 1
        if adjacent:
            conv = model.conv_layer(dst)
            weights = conv.weight.detach().numpy().astype("<f4")
            stride = int(conv.stride[0])
            source = "model"
        else:
            src_c, dst_c = shapes[src][1], shapes[dst][1]
            weights = np.zeros((dst_c, src_c, 1, 1), dtype="<f4")
            for ch in range(min(src_c, dst_c)):
                weights[ch, ch, 0, 0] = 1.0
            stride = max(1, round(shapes[src][2] / shapes[dst][2]))
            source = "identity"
        _write_kernel_file(spec.out_dir / f"kern_{src}__{dst}.bin", weights, stride)
        connection_entries.append(
            {"src_layer": src, "dst_layer": dst, "kernel_source": source}
        )

    manifest = {
        "layers": layer_entries,
        "images": image_entries,
        "connections": connection_entries,
    }
    (spec.out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def _write_activation_file(path: Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(ACTIVATION_MAGIC)
        fh.write(struct.pack("<IIII", *arr.shape))
        fh.write(arr.tobytes())


def _write_kernel_file(path: Path, weights: np.ndarray, stride: int) -> None:
    arr = np.ascontiguousarray(weights, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(KERNEL_MAGIC)
        fh.write(struct.pack("<IIIII", *arr.shape, stride))
        fh.write(arr.tobytes())


def read_activation_value(
    bundle_dir: Path, layer: str, image_id: int, channel: int, row: int, col: int
) -> float:
    """Read one activation back from the written binary, per the format spec."""
    path = Path(bundle_dir) / f"act_{layer}.bin"
    with open(path, "rb") as fh:
        header = fh.read(20)
        if header[:4] != ACTIVATION_MAGIC:
            raise ExportError(f"bad magic in {path}")
        num_images, channels, height, width = struct.unpack("<IIII", header[4:])
        flat = ((image_id * channels + channel) * height + row) * width + col
        fh.seek(20 + 4 * flat)
        return struct.unpack("<f", fh.read(4))[0]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ncaf-export",
        description="Export an NCAF activation bundle from a labeled image folder.",
    )
    parser.add_argument("--images", required=True, type=Path, help="dir with per-class subfolders")
    parser.add_argument("--out", required=True, type=Path, help="output bundle directory")
    parser.add_argument("--model", default="toy3")
    parser.add_argument("--layers", default="conv1,conv2,conv3")
    parser.add_argument("--size", type=int, default=32, help="square model input size")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        spec = ExportSpec(
            image_dir=args.images,
            out_dir=args.out,
            model=args.model,
            layers=tuple(args.layers.split(",")),
            input_size=args.size,
            seed=args.seed,
        )
        manifest = export(spec)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote bundle to {args.out}: {len(manifest['images'])} images, "
        f"{len(manifest['layers'])} layers"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
