"""Reference training pipeline: a small torch MLP with savable checkpoints.

One concrete pipeline is enough for the exporter; other frameworks can emit
the same JSONL themselves.  Checkpoint files bundle the constructor arguments
with the state dict so a checkpoint is loadable on its own.
"""
from __future__ import annotations

import torch
from torch import nn


class ReferenceMLP(nn.Module):
    """input -> (linear, tanh) feature block -> linear head.

    The ``features`` submodule is the penultimate representation the exporter
    captures by default.
    """

    def __init__(self, input_dim: int, hidden_dim: int, n_classes: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_classes = n_classes
        self.features = nn.Sequential(nn.Linear(input_dim, hidden_dim), nn.Tanh())
        self.head = nn.Linear(hidden_dim, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


def save_checkpoint(model: ReferenceMLP, path: str):
    torch.save(
        {
            "arch": {
                "input_dim": model.input_dim,
                "hidden_dim": model.hidden_dim,
                "n_classes": model.n_classes,
            },
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str) -> ReferenceMLP:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = ReferenceMLP(**payload["arch"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
