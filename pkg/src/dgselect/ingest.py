"""Checkpoint-feature interchange and metric persistence.

Two file formats:

* checkpoint JSONL — one object per (run, step, domain):
  ``{"run_id": str, "step": int, "domain": str, "features": [[...]],
  "logits": [[...]], "labels": [...], "test_acc": float|null}``.
  Payloads may be float32 on disk; everything is handled as float64 in memory.
* metrics CSV — exact header ``run_id,step,ce,mmd,acc,test_acc``, floats at 17
  significant digits so the round-trip is bit-exact, empty test_acc when absent.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError
from .metrics import (
    FeatureBatch,
    KernelConfig,
    accuracy,
    cross_entropy,
    pairwise_domain_mmd,
)
from .selection import CheckpointRecord

METRICS_HEADER = ("run_id", "step", "ce", "mmd", "acc", "test_acc")

_JSONL_FIELDS = ("run_id", "step", "domain", "features", "logits", "labels")


@dataclass(frozen=True)
class ArchiveManifest:
    """What a checkpoint archive contains, derived while loading."""

    run_ids: tuple[str, ...]
    steps: dict  # run_id -> tuple of steps, ascending
    domain_ids: tuple[str, ...]
    feature_dim: int
    n_classes: int


@dataclass(frozen=True)
class CheckpointArchive:
    """Validated in-memory form of a checkpoint JSONL file.

    ``batches`` maps (run_id, step, domain_id) to a FeatureBatch; ``test_acc``
    maps (run_id, step) to the recorded unseen-domain accuracy, if any.
    """

    manifest: ArchiveManifest
    batches: dict
    test_acc: dict


def _new_record_error(line_no: int, msg: str) -> ParseError:
    return ParseError(f"line {line_no}: {msg}")


def read_checkpoint_jsonl(path: str) -> CheckpointArchive:
    """Load and fully validate a checkpoint JSONL file."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"checkpoint file not found: {path}")

    batches: dict = {}
    test_acc: dict = {}
    feature_dim = None
    n_classes = None
    domains: list[str] = []
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _new_record_error(line_no, f"invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise _new_record_error(line_no, "record must be a JSON object")
            missing = [f for f in _JSONL_FIELDS if f not in obj]
            if missing:
                raise _new_record_error(line_no, f"missing fields: {', '.join(missing)}")

            run_id, step, domain = obj["run_id"], obj["step"], obj["domain"]
            if not isinstance(run_id, str) or not isinstance(domain, str):
                raise _new_record_error(line_no, "run_id and domain must be strings")
            if not isinstance(step, int) or step < 0:
                raise _new_record_error(line_no, f"step must be a non-negative integer, got {step!r}")
            key = (run_id, step, domain)
            if key in batches:
                raise _new_record_error(line_no, f"duplicate (run, step, domain) = {key}")

            try:
                batch = FeatureBatch(
                    domain_id=domain,
                    features=np.asarray(obj["features"], dtype=np.float64),
                    logits=np.asarray(obj["logits"], dtype=np.float64),
                    labels=np.asarray(obj["labels"], dtype=np.int64),
                )
            except (InputError, ValueError) as exc:
                raise _new_record_error(line_no, f"record {key}: {exc}")

            if feature_dim is None:
                feature_dim, n_classes = batch.dim, batch.n_classes
            elif batch.dim != feature_dim:
                raise _new_record_error(
                    line_no,
                    f"record {key}: feature dimension {batch.dim} "
                    f"does not match archive dimension {feature_dim}",
                )
            elif batch.n_classes != n_classes:
                raise _new_record_error(
                    line_no,
                    f"record {key}: class count {batch.n_classes} "
                    f"does not match archive class count {n_classes}",
                )

            ta = obj.get("test_acc")
            if ta is not None:
                if not isinstance(ta, (int, float)) or not (0.0 <= float(ta) <= 1.0):
                    raise _new_record_error(line_no, f"test_acc {ta!r} outside [0, 1]")
                prev = test_acc.get((run_id, step))
                if prev is not None and prev != float(ta):
                    raise _new_record_error(
                        line_no, f"conflicting test_acc for run {run_id!r} step {step}"
                    )
                test_acc[(run_id, step)] = float(ta)

            batches[key] = batch
            if domain not in domains:
                domains.append(domain)

    if not batches:
        raise InputError(f"no records in {path}")

    steps: dict = {}
    for run_id, step, _domain in batches:
        steps.setdefault(run_id, set()).add(step)
    for run_id in steps:
        for step in sorted(steps[run_id]):
            for domain in domains:
                if (run_id, step, domain) not in batches:
                    raise InputError(
                        f"run {run_id!r} step {step} is missing domain {domain!r}"
                    )

    manifest = ArchiveManifest(
        run_ids=tuple(sorted(steps)),
        steps={r: tuple(sorted(s)) for r, s in steps.items()},
        domain_ids=tuple(sorted(domains)),
        feature_dim=feature_dim,
        n_classes=n_classes,
    )
    return CheckpointArchive(manifest=manifest, batches=batches, test_acc=test_acc)


def write_checkpoint_jsonl(archive: CheckpointArchive, path: str, float32_payload: bool = True):
    """Write an archive in the JSONL interchange format (float32 payloads by default)."""
    m = archive.manifest
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for run_id in m.run_ids:
            for step in m.steps[run_id]:
                for domain in m.domain_ids:
                    batch = archive.batches[(run_id, step, domain)]
                    feats = batch.features
                    logits = batch.logits
                    if float32_payload:
                        feats = feats.astype(np.float32).astype(np.float64)
                        logits = logits.astype(np.float32).astype(np.float64)
                    obj = {
                        "run_id": run_id,
                        "step": step,
                        "domain": domain,
                        "features": feats.tolist(),
                        "logits": logits.tolist(),
                        "labels": batch.labels.tolist(),
                        "test_acc": archive.test_acc.get((run_id, step)),
                    }
                    fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def build_archive(
    batches: dict, test_acc: dict | None = None, float32_payload: bool = True
) -> CheckpointArchive:
    """Assemble and validate an archive from in-memory batches.

    ``batches`` maps (run_id, step, domain_id) to FeatureBatch.  With
    ``float32_payload`` the numeric payloads are rounded through float32 so
    in-memory metrics match what a JSONL round-trip would produce.
    """
    if not batches:
        raise InputError("no batches supplied")
    test_acc = dict(test_acc or {})

    out: dict = {}
    domains: list[str] = []
    feature_dim = None
    n_classes = None
    for key in batches:
        run_id, step, domain = key
        batch = batches[key]
        if batch.domain_id != domain:
            raise InputError(f"batch under key {key} carries domain_id {batch.domain_id!r}")
        if float32_payload:
            batch = FeatureBatch(
                domain_id=batch.domain_id,
                features=batch.features.astype(np.float32).astype(np.float64),
                logits=batch.logits.astype(np.float32).astype(np.float64),
                labels=batch.labels,
            )
        if feature_dim is None:
            feature_dim, n_classes = batch.dim, batch.n_classes
        elif batch.dim != feature_dim or batch.n_classes != n_classes:
            raise InputError(f"batch {key} disagrees with archive dimensions")
        out[key] = batch
        if domain not in domains:
            domains.append(domain)

    steps: dict = {}
    for run_id, step, _domain in out:
        steps.setdefault(run_id, set()).add(step)
    for run_id in steps:
        for step in sorted(steps[run_id]):
            for domain in domains:
                if (run_id, step, domain) not in out:
                    raise InputError(f"run {run_id!r} step {step} is missing domain {domain!r}")

    manifest = ArchiveManifest(
        run_ids=tuple(sorted(steps)),
        steps={r: tuple(sorted(s)) for r, s in steps.items()},
        domain_ids=tuple(sorted(domains)),
        feature_dim=feature_dim,
        n_classes=n_classes,
    )
    return CheckpointArchive(manifest=manifest, batches=out, test_acc=test_acc)


def compute_checkpoint_metrics(
    archive: CheckpointArchive, kernel_cfg: KernelConfig
) -> list[CheckpointRecord]:
    """Turn raw feature batches into one CheckpointRecord per (run, step).

    Cross-entropy and accuracy pool the rows of every domain; the MMD is the
    mean pairwise biased MMD between per-domain feature batches.
    """
    m = archive.manifest
    records = []
    for run_id in m.run_ids:
        for step in m.steps[run_id]:
            domain_batches = [archive.batches[(run_id, step, d)] for d in m.domain_ids]
            logits = np.concatenate([b.logits for b in domain_batches], axis=0)
            labels = np.concatenate([b.labels for b in domain_batches], axis=0)
            records.append(
                CheckpointRecord(
                    run_id=run_id,
                    step=step,
                    ce=cross_entropy(logits, labels),
                    mmd=pairwise_domain_mmd(domain_batches, kernel_cfg),
                    acc=accuracy(logits, labels),
                    test_acc=archive.test_acc.get((run_id, step)),
                )
            )
    return records


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_metrics_csv(records: list[CheckpointRecord], path: str):
    """Write checkpoint records with bit-exact float round-trip."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.run_id,
                    str(r.step),
                    _fmt(r.ce),
                    _fmt(r.mmd),
                    _fmt(r.acc),
                    "" if r.test_acc is None else _fmt(r.test_acc),
                ]
            )


def read_metrics_csv(path: str) -> list[CheckpointRecord]:
    """Read a metrics CSV back into validated records."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise InputError(f"metrics file not found: {path}")
    records = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected header {','.join(METRICS_HEADER)}")
        if tuple(header) != METRICS_HEADER:
            raise ParseError(
                f"{path}: bad header {','.join(header)!r}, expected {','.join(METRICS_HEADER)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(METRICS_HEADER):
                raise ParseError(f"{path} row {row_no}: expected {len(METRICS_HEADER)} fields")
            run_id, step_s, ce_s, mmd_s, acc_s, ta_s = row
            try:
                record = CheckpointRecord(
                    run_id=run_id,
                    step=int(step_s),
                    ce=float(ce_s),
                    mmd=float(mmd_s),
                    acc=float(acc_s),
                    test_acc=None if ta_s == "" else float(ta_s),
                )
            except (ValueError, InputError) as exc:
                raise ParseError(f"{path} row {row_no}: {exc}")
            if not all(map(math.isfinite, (record.ce, record.mmd, record.acc))):
                raise ParseError(f"{path} row {row_no}: non-finite metric")
            records.append(record)
    return records
