"""Extract per-checkpoint validation features and emit checkpoint JSONL.

The output schema is the dgselect interchange format, one object per
(run, step, domain):

    {"run_id": str, "step": int, "domain": str, "features": [[f32...]...],
     "logits": [[f32...]...], "labels": [int...], "test_acc": float|null}

Features come from a named submodule (the penultimate block by default),
captured with a forward hook, so the featurizer layer is selectable without
touching the model code.  Checkpoints are only ever read.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .reference import load_checkpoint


class ExportError(Exception):
    """Invalid spec, missing artifacts, or inconsistent checkpoints."""


@dataclass(frozen=True)
class ExportSpec:
    """What to export: checkpoints, per-domain validation data, output path."""

    run_id: str
    checkpoints: tuple  # of (step, path), steps strictly increasing
    domains: tuple  # of (domain_id, npz path); >= 2 seen domains
    output: str
    feature_layer: str = "features"
    test_data: Optional[str] = None  # unseen-domain npz, for test_acc only

    def __post_init__(self):
        if len(self.domains) < 2:
            raise ExportError(f"need at least 2 seen domains, got {len(self.domains)}")
        if not self.checkpoints:
            raise ExportError("no checkpoints listed")
        steps = [s for s, _ in self.checkpoints]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ExportError("checkpoint steps must be strictly increasing")
        ids = [d for d, _ in self.domains]
        if len(set(ids)) != len(ids):
            raise ExportError("duplicate domain ids")


def load_spec(path: str) -> ExportSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ExportError(f"spec file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ExportError(f"spec file {path} is not valid JSON: {exc}")
    try:
        return ExportSpec(
            run_id=doc["run_id"],
            checkpoints=tuple((int(c["step"]), c["path"]) for c in doc["checkpoints"]),
            domains=tuple((d["domain_id"], d["data"]) for d in doc["domains"]),
            output=doc["output"],
            feature_layer=doc.get("feature_layer", "features"),
            test_data=doc.get("test_data"),
        )
    except (KeyError, TypeError) as exc:
        raise ExportError(f"spec file {path} is malformed: {exc}")


def _load_domain(path: str) -> tuple[np.ndarray, np.ndarray]:
    if not os.path.exists(path):
        raise ExportError(f"domain data not found: {path}")
    with np.load(path) as data:
        if "features" not in data or "labels" not in data:
            raise ExportError(f"{path}: expected arrays 'features' and 'labels'")
        return np.asarray(data["features"], dtype=np.float32), np.asarray(
            data["labels"], dtype=np.int64
        )


def _capture_layer(model: torch.nn.Module, layer_name: str, x: torch.Tensor):
    """Forward pass returning (named submodule output, final logits)."""
    modules = dict(model.named_modules())
    if layer_name not in modules:
        raise ExportError(
            f"feature layer {layer_name!r} not found; available: "
            f"{sorted(n for n in modules if n)}"
        )
    captured: list[torch.Tensor] = []
    handle = modules[layer_name].register_forward_hook(
        lambda _mod, _inp, out: captured.append(out)
    )
    try:
        with torch.no_grad():
            logits = model(x)
    finally:
        handle.remove()
    if not captured:
        raise ExportError(f"feature layer {layer_name!r} was never reached in forward()")
    feats = captured[-1]
    if feats.ndim != 2:
        feats = feats.flatten(start_dim=1)
    return feats, logits


def export_run(spec: ExportSpec) -> int:
    """Write one JSONL record per (checkpoint, domain); returns the record count."""
    domain_data = [(d, *_load_domain(p)) for d, p in spec.domains]
    test_set = _load_domain(spec.test_data) if spec.test_data else None

    n_records = 0
    feature_dim = None
    with open(spec.output, "w", encoding="utf-8", newline="\n") as out:
        for step, ckpt_path in spec.checkpoints:
            if not os.path.exists(ckpt_path):
                raise ExportError(f"checkpoint for step {step} not found: {ckpt_path}")
            model = load_checkpoint(ckpt_path)

            test_acc = None
            if test_set is not None:
                with torch.no_grad():
                    logits = model(torch.from_numpy(test_set[0]))
                preds = logits.argmax(dim=1).numpy()
                test_acc = float(np.mean(preds == test_set[1]))

            for domain_id, feats_np, labels_np in domain_data:
                feats, logits = _capture_layer(
                    model, spec.feature_layer, torch.from_numpy(feats_np)
                )
                feats = feats.numpy().astype(np.float32)
                if feature_dim is None:
                    feature_dim = feats.shape[1]
                elif feats.shape[1] != feature_dim:
                    raise ExportError(
                        f"feature dimension drift at step {step}: "
                        f"{feats.shape[1]} != {feature_dim}"
                    )
                record = {
                    "run_id": spec.run_id,
                    "step": step,
                    "domain": domain_id,
                    "features": feats.astype(np.float64).tolist(),
                    "logits": logits.numpy().astype(np.float32).astype(np.float64).tolist(),
                    "labels": labels_np.tolist(),
                    "test_acc": test_acc,
                }
                out.write(json.dumps(record, separators=(",", ":")) + "\n")
                n_records += 1
    return n_records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dgexport",
        description="Export checkpoint validation features to dgselect JSONL.",
    )
    parser.add_argument("--spec", required=True, help="export spec JSON file")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        count = export_run(spec)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {spec.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
