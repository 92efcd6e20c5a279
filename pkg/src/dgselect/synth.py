"""Desk-scale end-to-end harness.

Generates multi-domain binary data with a spurious feature whose label
correlation flips between seen and unseen domains, trains a one-hidden-layer
softmax classifier with minibatch SGD, archives per-checkpoint validation
features in the interchange format, and compares the two selection methods.

The spurious coordinate is noiseless and carries twice the invariant
separation by default (``spur_scale``), so SGD prefers the shortcut early —
that is the knob that makes the two selection methods diverge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DGSelectError, InputError
from .ingest import CheckpointArchive, build_archive, compute_checkpoint_metrics
from .metrics import FeatureBatch, KernelConfig, accuracy
from .selection import (
    MethodComparison,
    RunRecord,
    SelectionConfig,
    compare_methods,
)

HIDDEN_CHOICES = (8, 16, 32)
LR_LOG10_RANGE = (-2.0, -0.5)


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_per_domain: int = 400
    seen_corrs: tuple[float, ...] = (0.9, 0.8)
    unseen_corr: float = 0.1
    inv_sep: float = 2.0
    noise_sd: float = 1.0
    spur_scale: float = 2.0

    def __post_init__(self):
        if len(self.seen_corrs) < 2:
            raise ConfigurationError("need at least 2 seen domains")
        corrs = tuple(float(c) for c in self.seen_corrs) + (float(self.unseen_corr),)
        if any(not (0.0 <= c <= 1.0) for c in corrs):
            raise ConfigurationError(f"correlations must lie in [0, 1], got {corrs}")
        if self.inv_sep <= 0 or self.noise_sd <= 0 or self.spur_scale <= 0:
            raise ConfigurationError("inv_sep, noise_sd and spur_scale must be positive")
        if self.n_per_domain < 10:
            raise ConfigurationError("n_per_domain too small to split")


@dataclass(frozen=True)
class TrainConfig:
    hidden_units: int = 16
    learning_rate: float = 0.05
    steps: int = 1000
    checkpoint_every: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1 or self.batch_size < 1:
            raise ConfigurationError("hidden_units and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be >= 0")
        if self.checkpoint_every < 1 or self.steps // self.checkpoint_every < 3:
            raise ConfigurationError(
                f"steps={self.steps} with checkpoint_every={self.checkpoint_every} "
                "yields fewer than 3 checkpoints"
            )


@dataclass(frozen=True)
class DomainData:
    domain_id: str
    features: np.ndarray  # n × 2: (invariant, spurious)
    labels: np.ndarray


@dataclass(frozen=True)
class DomainSuite:
    seen: tuple[DomainData, ...]
    unseen: DomainData


def _make_domain(domain_id: str, corr: float, cfg: SyntheticConfig, rng) -> DomainData:
    n = cfg.n_per_domain
    labels = rng.integers(0, 2, size=n)
    signs = labels * 2 - 1
    invariant = signs * (cfg.inv_sep / 2.0) + rng.normal(0.0, cfg.noise_sd, size=n)
    agree = rng.random(n) < corr
    spur_sign = np.where(agree, signs, -signs)
    spurious = spur_sign * (cfg.spur_scale * cfg.inv_sep / 2.0)
    feats = np.column_stack([invariant, spurious])
    return DomainData(domain_id=domain_id, features=feats, labels=labels.astype(np.int64))


def generate_domains(cfg: SyntheticConfig) -> DomainSuite:
    """Sample every domain deterministically from the config seed."""
    seen = tuple(
        _make_domain(f"seen{i}", corr, cfg, np.random.default_rng([cfg.seed, i]))
        for i, corr in enumerate(cfg.seen_corrs)
    )
    unseen = _make_domain(
        "unseen", cfg.unseen_corr, cfg, np.random.default_rng([cfg.seed, len(cfg.seen_corrs)])
    )
    return DomainSuite(seen=seen, unseen=unseen)


@dataclass
class MLPParams:
    """One-hidden-layer network: affine → tanh → affine → softmax."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "MLPParams":
        return MLPParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_params(rng, dim: int, hidden: int, n_classes: int) -> MLPParams:
    return MLPParams(
        w1=rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(hidden, n_classes)),
        b2=np.zeros(n_classes),
    )


def forward(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (hidden activations, logits)."""
    hidden = np.tanh(x @ params.w1 + params.b1)
    return hidden, hidden @ params.w2 + params.b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def batch_loss(params: MLPParams, x: np.ndarray, y: np.ndarray) -> float:
    _, logits = forward(params, x)
    probs = _softmax(logits)
    with np.errstate(divide="ignore"):  # log(0) -> inf is the divergence signal
        return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def loss_and_grads(params: MLPParams, x: np.ndarray, y: np.ndarray) -> tuple[float, MLPParams]:
    """Mean softmax cross-entropy and its gradients, by backprop."""
    n = x.shape[0]
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    probs = _softmax(logits)
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(probs[np.arange(n), y])))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ params.w2.T) * (1.0 - hidden**2)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, MLPParams(gw1, gb1, gw2, gb2)


def gradient_check(
    params: MLPParams,
    x: np.ndarray,
    y: np.ndarray,
    rng,
    coords_per_array: int = 3,
    eps: float = 1e-5,
) -> float:
    """Max relative error of backprop vs central finite differences.

    Samples ``coords_per_array`` coordinates in every parameter array.
    """
    _, grads = loss_and_grads(params, x, y)
    worst = 0.0
    for name, arr in params.arrays().items():
        flat = arr.reshape(-1)
        gflat = grads.arrays()[name].reshape(-1)
        for idx in rng.integers(0, flat.size, size=coords_per_array):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = batch_loss(params, x, y)
            flat[idx] = orig - eps
            down = batch_loss(params, x, y)
            flat[idx] = orig
            fd = (up - down) / (2.0 * eps)
            denom = max(abs(fd), abs(gflat[idx]), 1e-6)
            worst = max(worst, abs(fd - gflat[idx]) / denom)
    return worst


def _split_domain(domain: DomainData, rng, val_fraction: float = 0.2):
    n = domain.features.shape[0]
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return (
        (domain.features[train_idx], domain.labels[train_idx]),
        (domain.features[val_idx], domain.labels[val_idx]),
    )


@dataclass(frozen=True)
class TrainResult:
    run: RunRecord
    archive: CheckpointArchive
    train_losses: tuple[float, ...]  # full-train-split loss at each checkpoint
    final_params: MLPParams


def train_classifier(
    suite: DomainSuite,
    tcfg: TrainConfig,
    run_id: str = "run0",
    hparams: Optional[dict] = None,
    kernel_cfg: Optional[KernelConfig] = None,
) -> TrainResult:
    """SGD-train the classifier and archive per-checkpoint validation features.

    Holds out 20% of each seen domain for validation; pooled remainders form
    the training split.  At every checkpoint interval the hidden-layer
    activations, logits and labels of each validation domain are archived
    (float32 payloads) and the unseen-domain accuracy is recorded for
    reporting.  Fully deterministic given the seeds.
    """
    if len(suite.seen) < 2:
        raise InputError("training requires at least 2 seen domains")
    kernel_cfg = kernel_cfg or KernelConfig()

    train_parts = []
    val_sets = []
    for i, domain in enumerate(suite.seen):
        train, val = _split_domain(domain, np.random.default_rng([tcfg.seed, 10_000 + i]))
        train_parts.append(train)
        val_sets.append((domain.domain_id, val))
    x_train = np.concatenate([p[0] for p in train_parts], axis=0)
    y_train = np.concatenate([p[1] for p in train_parts], axis=0)

    rng_init = np.random.default_rng([tcfg.seed, 1])
    rng_batch = np.random.default_rng([tcfg.seed, 2])
    params = init_params(rng_init, x_train.shape[1], tcfg.hidden_units, 2)

    batches: dict = {}
    test_acc: dict = {}
    train_losses = []
    checkpoint_steps = []
    for step in range(1, tcfg.steps + 1):
        idx = rng_batch.integers(0, x_train.shape[0], size=tcfg.batch_size)
        loss, grads = loss_and_grads(params, x_train[idx], y_train[idx])
        if not math.isfinite(loss):
            raise DGSelectError(f"training diverged at step {step}: loss={loss}")
        params.w1 -= tcfg.learning_rate * grads.w1
        params.b1 -= tcfg.learning_rate * grads.b1
        params.w2 -= tcfg.learning_rate * grads.w2
        params.b2 -= tcfg.learning_rate * grads.b2

        if step % tcfg.checkpoint_every == 0:
            checkpoint_steps.append(step)
            for domain_id, (xv, yv) in val_sets:
                hidden, logits = forward(params, xv)
                batches[(run_id, step, domain_id)] = FeatureBatch(
                    domain_id=domain_id, features=hidden, logits=logits, labels=yv
                )
            _, test_logits = forward(params, suite.unseen.features)
            test_acc[(run_id, step)] = accuracy(test_logits, suite.unseen.labels)
            train_losses.append(batch_loss(params, x_train, y_train))

    archive = build_archive(batches, test_acc=test_acc, float32_payload=True)
    records = compute_checkpoint_metrics(archive, kernel_cfg)
    run = RunRecord(run_id=run_id, hparams=dict(hparams or {}), checkpoints=tuple(records))
    return TrainResult(
        run=run, archive=archive, train_losses=tuple(train_losses), final_params=params
    )


def sample_trial_config(base: TrainConfig, scfg_seed: int, trial: int) -> tuple[TrainConfig, dict]:
    """Random-search draw for one trial: log-uniform lr, hidden units from a small set."""
    rng = np.random.default_rng([scfg_seed, 20_000 + trial])
    lr = float(10.0 ** rng.uniform(*LR_LOG10_RANGE))
    hidden = int(rng.choice(HIDDEN_CHOICES))
    tcfg = replace(base, learning_rate=lr, hidden_units=hidden, seed=base.seed * 100_003 + trial)
    return tcfg, {"learning_rate": lr, "hidden_units": hidden, "seed": tcfg.seed}


def _selection_dict(comp: MethodComparison) -> dict:
    return {
        "ours": {
            "run_id": comp.ours.chosen[0],
            "step": comp.ours.chosen[1],
            "criterion_value": comp.ours.criterion_value,
            "candidate_count": comp.ours.candidate_count,
            "test_acc": comp.ours_test_acc,
        },
        "traditional": {
            "run_id": comp.traditional.chosen[0],
            "step": comp.traditional.chosen[1],
            "criterion_value": comp.traditional.criterion_value,
            "candidate_count": comp.traditional.candidate_count,
            "test_acc": comp.traditional_test_acc,
        },
        "delta": comp.delta,
    }


def assemble_report(
    runs: list[RunRecord], selection_cfg: SelectionConfig, config_echo: Optional[dict] = None
) -> dict:
    """Comparison report over a set of runs: global pick plus per-trial picks.

    The global section applies both selectors across all runs (the random
    search verdict); the per-trial section applies them within each run and
    averages the unseen-domain accuracies of the picks.
    """
    global_comp = compare_methods(runs, selection_cfg)

    trials = []
    ours_accs = []
    trad_accs = []
    for run in runs:
        comp = compare_methods([run], selection_cfg)
        if comp.ours_test_acc is not None:
            ours_accs.append(comp.ours_test_acc)
        if comp.traditional_test_acc is not None:
            trad_accs.append(comp.traditional_test_acc)
        trials.append(
            {
                "run_id": run.run_id,
                "hparams": run.hparams,
                "selection": _selection_dict(comp),
                "checkpoints": [
                    {
                        "step": c.step,
                        "ce": c.ce,
                        "mmd": c.mmd,
                        "acc": c.acc,
                        "test_acc": c.test_acc,
                    }
                    for c in run.checkpoints
                ],
            }
        )

    mean_ours = float(np.mean(ours_accs)) if ours_accs else None
    mean_trad = float(np.mean(trad_accs)) if trad_accs else None
    summary = {
        "mean_test_acc_ours": mean_ours,
        "mean_test_acc_traditional": mean_trad,
        "mean_delta": None if mean_ours is None or mean_trad is None else mean_ours - mean_trad,
    }
    report = {
        "selection_config": {
            "alpha": selection_cfg.alpha,
            "beta": selection_cfg.beta,
            "pct_low": selection_cfg.pct_low,
            "pct_high": selection_cfg.pct_high,
        },
        "n_trials": len(runs),
        "global": _selection_dict(global_comp),
        "per_trial_summary": summary,
        "trials": trials,
    }
    if config_echo:
        report["config"] = config_echo
    return report


def run_experiment(
    scfg: SyntheticConfig,
    tcfg: TrainConfig,
    n_trials: int,
    selection_cfg: SelectionConfig,
    kernel_cfg: Optional[KernelConfig] = None,
    on_trial: Optional[Callable[[int, RunRecord], None]] = None,
) -> tuple[dict, list[TrainResult]]:
    """Random-search experiment: train n_trials models, then compare selectors.

    Returns the report plus each trial's TrainResult (for archiving).
    Deterministic: identical inputs give an identical report.
    """
    if n_trials < 1:
        raise InputError("n_trials must be >= 1")
    kernel_cfg = kernel_cfg or KernelConfig()
    suite = generate_domains(scfg)

    results = []
    for trial in range(n_trials):
        trial_cfg, hparams = sample_trial_config(tcfg, scfg.seed, trial)
        result = train_classifier(
            suite,
            trial_cfg,
            run_id=f"trial{trial:02d}",
            hparams=hparams,
            kernel_cfg=kernel_cfg,
        )
        results.append(result)
        if on_trial is not None:
            on_trial(trial, result.run)

    config_echo = {
        "synthetic": {
            "seed": scfg.seed,
            "n_per_domain": scfg.n_per_domain,
            "seen_corrs": list(scfg.seen_corrs),
            "unseen_corr": scfg.unseen_corr,
            "inv_sep": scfg.inv_sep,
            "noise_sd": scfg.noise_sd,
            "spur_scale": scfg.spur_scale,
        },
        "train": {
            "steps": tcfg.steps,
            "checkpoint_every": tcfg.checkpoint_every,
            "batch_size": tcfg.batch_size,
            "base_seed": tcfg.seed,
        },
        "n_trials": n_trials,
    }
    report = assemble_report([r.run for r in results], selection_cfg, config_echo=config_echo)
    return report, results
