"""Checkpoint selection strategies.

Two selectors over recorded checkpoint metrics:

* ``select_ours`` — minimize the combined validation loss
  β·(1−α)·ce + α·mmd, after keeping only the checkpoints between the
  ``pct_low`` and ``pct_high`` percentiles of validation cross-entropy
  within each run (defaults α=0.2, β=1, percentiles 5%–50%).
* ``select_traditional`` — maximize pooled validation accuracy.

Unseen-domain accuracy (``test_acc``) rides along for reporting and never
influences either selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class CheckpointRecord:
    """Validation metrics for one (run, step) checkpoint."""

    run_id: str
    step: int
    ce: float
    mmd: float
    acc: float
    test_acc: Optional[float] = None

    def __post_init__(self):
        if self.step < 0:
            raise InputError(f"{self.run_id}: negative step {self.step}")
        for name in ("ce", "mmd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{self.run_id} step {self.step}: {name}={v} must be finite and >= 0")
        if not (0.0 <= self.acc <= 1.0):
            raise InputError(f"{self.run_id} step {self.step}: acc={self.acc} outside [0, 1]")
        if self.test_acc is not None and not (0.0 <= self.test_acc <= 1.0):
            raise InputError(f"{self.run_id} step {self.step}: test_acc={self.test_acc} outside [0, 1]")


@dataclass(frozen=True)
class RunRecord:
    """One training run: a hyper-parameter draw plus its checkpoint trail."""

    run_id: str
    hparams: dict = field(default_factory=dict)
    checkpoints: tuple[CheckpointRecord, ...] = ()

    def __post_init__(self):
        cps = tuple(self.checkpoints)
        if not cps:
            raise InputError(f"run {self.run_id!r} has no checkpoints")
        steps = [c.step for c in cps]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise InputError(f"run {self.run_id!r}: checkpoint steps must be strictly increasing")
        if any(c.run_id != self.run_id for c in cps):
            raise InputError(f"run {self.run_id!r}: checkpoint with foreign run_id")
        object.__setattr__(self, "checkpoints", cps)


@dataclass(frozen=True)
class SelectionConfig:
    """Hyper-parameters of the combined-loss selector."""

    alpha: float = 0.2
    beta: float = 1.0
    pct_low: float = 0.05
    pct_high: float = 0.50

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigurationError(f"alpha={self.alpha} outside [0, 1]")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ConfigurationError(f"beta={self.beta} must be positive and finite")
        if not (0.0 <= self.pct_low < 1.0) or not (0.0 < self.pct_high <= 1.0):
            raise ConfigurationError(
                f"percentiles must satisfy 0 <= pct_low < 1 and 0 < pct_high <= 1, "
                f"got ({self.pct_low}, {self.pct_high})"
            )
        if self.pct_low >= self.pct_high:
            raise ConfigurationError(
                f"pct_low={self.pct_low} must be below pct_high={self.pct_high}"
            )


@dataclass(frozen=True)
class AuditRow:
    run_id: str
    step: int
    ce: float
    mmd: float
    loss: float
    acc: float
    test_acc: Optional[float] = None


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple[str, int]
    criterion_value: float
    method: str  # "ours" | "traditional"
    candidate_count: int
    audit: tuple[AuditRow, ...]

    def __post_init__(self):
        if self.candidate_count < 1:
            raise InputError("selection over zero candidates")
        if not any((r.run_id, r.step) == self.chosen for r in self.audit):
            raise InputError("chosen checkpoint missing from audit table")


def validation_loss(ce: float, mmd: float, cfg: SelectionConfig) -> float:
    """Combined validation objective β·(1−α)·ce + α·mmd."""
    if not (math.isfinite(ce) and math.isfinite(mmd)):
        raise InputError(f"non-finite inputs: ce={ce}, mmd={mmd}")
    return cfg.beta * (1.0 - cfg.alpha) * ce + cfg.alpha * mmd


def _ce_sort_key(c: CheckpointRecord):
    return (c.ce, c.step, c.run_id)


def percentile_filter(
    checkpoints: list[CheckpointRecord], cfg: SelectionConfig
) -> list[CheckpointRecord]:
    """Keep the cross-entropy percentile window of a checkpoint list.

    Sorts ascending by ce (ties: earlier step, then run_id) and keeps 1-indexed
    ranks r with ceil(pct_low·N) <= r <= floor(pct_high·N).  When the window
    rounds to nothing (tiny N), the single rank max(1, ceil(pct_low·N))
    survives, so the result is never empty.
    """
    if not checkpoints:
        raise InputError("percentile filter over an empty checkpoint list")
    ordered = sorted(checkpoints, key=_ce_sort_key)
    n = len(ordered)
    # tiny slack absorbs float dust in pct*N without moving exact ranks
    lo = math.ceil(cfg.pct_low * n - 1e-9)
    hi = math.floor(cfg.pct_high * n + 1e-9)
    lo = max(lo, 1)
    if hi < lo:
        return [ordered[lo - 1]]
    return ordered[lo - 1 : hi]


def _check_runs(runs: list[RunRecord]):
    if not runs:
        raise InputError("no runs supplied")
    seen = set()
    for run in runs:
        if run.run_id in seen:
            raise InputError(f"duplicate run_id {run.run_id!r}")
        seen.add(run.run_id)


def select_ours(runs: list[RunRecord], cfg: SelectionConfig) -> SelectionResult:
    """Percentile-filter each run, then take the combined-loss argmin overall.

    Ties break by lower ce, then earlier step, then lexicographic run_id.
    """
    _check_runs(runs)
    survivors: list[CheckpointRecord] = []
    for run in runs:
        survivors.extend(percentile_filter(list(run.checkpoints), cfg))
    audit = tuple(
        AuditRow(c.run_id, c.step, c.ce, c.mmd, validation_loss(c.ce, c.mmd, cfg), c.acc, c.test_acc)
        for c in survivors
    )
    best = min(audit, key=lambda r: (r.loss, r.ce, r.step, r.run_id))
    return SelectionResult(
        chosen=(best.run_id, best.step),
        criterion_value=best.loss,
        method="ours",
        candidate_count=len(audit),
        audit=audit,
    )


def select_traditional(runs: list[RunRecord], cfg: SelectionConfig | None = None) -> SelectionResult:
    """Pick the checkpoint with the highest validation accuracy over all runs.

    Ties break by lower ce, then earlier step, then lexicographic run_id.  The
    audit rows still carry the combined loss for side-by-side inspection.
    """
    _check_runs(runs)
    loss_cfg = cfg if cfg is not None else SelectionConfig()
    audit = tuple(
        AuditRow(c.run_id, c.step, c.ce, c.mmd, validation_loss(c.ce, c.mmd, loss_cfg), c.acc, c.test_acc)
        for run in runs
        for c in run.checkpoints
    )
    best = min(audit, key=lambda r: (-r.acc, r.ce, r.step, r.run_id))
    return SelectionResult(
        chosen=(best.run_id, best.step),
        criterion_value=best.acc,
        method="traditional",
        candidate_count=len(audit),
        audit=audit,
    )


@dataclass(frozen=True)
class MethodComparison:
    """Both selections plus their unseen-domain accuracies and the gap."""

    ours: SelectionResult
    traditional: SelectionResult
    ours_test_acc: Optional[float]
    traditional_test_acc: Optional[float]
    delta: Optional[float]


def compare_methods(runs: list[RunRecord], cfg: SelectionConfig) -> MethodComparison:
    """Run both selectors and report unseen-domain accuracy of each choice.

    Checkpoints without ``test_acc`` yield explicit None entries and a None
    delta rather than an error.
    """
    ours = select_ours(runs, cfg)
    trad = select_traditional(runs, cfg)
    by_key = {(c.run_id, c.step): c for run in runs for c in run.checkpoints}
    ours_test = by_key[ours.chosen].test_acc
    trad_test = by_key[trad.chosen].test_acc
    delta = None if ours_test is None or trad_test is None else ours_test - trad_test
    return MethodComparison(ours, trad, ours_test, trad_test, delta)


def group_runs(records: list[CheckpointRecord]) -> list[RunRecord]:
    """Assemble flat checkpoint records into RunRecords, sorted by run_id."""
    by_run: dict[str, list[CheckpointRecord]] = {}
    for rec in records:
        by_run.setdefault(rec.run_id, []).append(rec)
    runs = []
    for run_id in sorted(by_run):
        cps = sorted(by_run[run_id], key=lambda c: c.step)
        for a, b in zip(cps, cps[1:]):
            if a.step == b.step:
                raise InputError(f"duplicate (run, step) = ({run_id!r}, {a.step})")
        runs.append(RunRecord(run_id=run_id, checkpoints=tuple(cps)))
    return runs
