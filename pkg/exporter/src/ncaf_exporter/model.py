"""Small CNNs with named, hookable ReLU stages.

Weights are randomly initialized from a fixed seed, so exports are
reproducible without a checkpoint. Activations are captured after the
nonlinearity, which keeps the downstream strict-positive quantization
meaningful.
"""

from __future__ import annotations

import torch
from torch import nn


class ToyCnn(nn.Module):
    """Three conv+ReLU stages: 3->8 (s1), 8->12 (s2), 12->16 (s2)."""

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.conv1 = nn.Conv2d(3, 8, kernel_size=3, stride=1, padding=1)
        self.conv2 = nn.Conv2d(8, 12, kernel_size=3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(12, 16, kernel_size=3, stride=2, padding=1)
        self.relu = nn.ReLU()

    STAGES = ("conv1", "conv2", "conv3")

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        out: dict[str, torch.Tensor] = {}
        x = self.relu(self.conv1(x))
        out["conv1"] = x
        x = self.relu(self.conv2(x))
        out["conv2"] = x
        x = self.relu(self.conv3(x))
        out["conv3"] = x
        return out

    def conv_layer(self, name: str) -> nn.Conv2d:
        return getattr(self, name)


def build_model(identifier: str, seed: int = 0) -> ToyCnn:
    if identifier != "toy3":
        raise ValueError(f"unknown model identifier {identifier!r} (available: toy3)")
    model = ToyCnn(seed=seed)
    model.eval()
    return model
