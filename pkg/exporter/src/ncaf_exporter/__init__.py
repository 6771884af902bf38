"""NCAF bundle exporter: run a small CNN over a labeled image folder and
write the activation dataset format consumed by the summarization pipeline."""

from .export import ExportSpec, export
from .model import ToyCnn, build_model

__version__ = "0.1.0"
