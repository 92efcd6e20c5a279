"""Checkpoint-feature exporter for the dgselect model-selection toolkit."""
from .export import ExportSpec, export_run, load_spec
from .reference import ReferenceMLP, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ExportSpec",
    "ReferenceMLP",
    "export_run",
    "load_checkpoint",
    "load_spec",
    "save_checkpoint",
]
