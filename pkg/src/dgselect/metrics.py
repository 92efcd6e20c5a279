"""Validation-metric primitives: distances, Gaussian kernels, MMD, cross-entropy, accuracy.

Everything here is a pure function of its inputs.  The MMD estimator is the
biased V-statistic (kernel means include the diagonal), computed with a
multi-bandwidth Gaussian kernel; the default bandwidth set mirrors the widely
used reference implementation for domain-generalization benchmarks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ConfigurationError, InputError, InsufficientDomainsError

#: Inverse squared bandwidths of the default Gaussian kernel mixture.
DEFAULT_GAMMAS: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class KernelConfig:
    """Multi-bandwidth Gaussian kernel: K(d) = Σ_γ exp(−γ·d)."""

    gammas: tuple[float, ...] = DEFAULT_GAMMAS

    def __post_init__(self):
        if len(self.gammas) == 0:
            raise ConfigurationError("kernel config needs at least one gamma")
        if any(not np.isfinite(g) or g <= 0 for g in self.gammas):
            raise ConfigurationError(f"gammas must be positive and finite, got {self.gammas}")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    def gamma_array(self) -> np.ndarray:
        return np.asarray(self.gammas, dtype=np.float64)


@dataclass(frozen=True)
class FeatureBatch:
    """Per-domain validation payload for one checkpoint.

    ``features`` is n×d, ``logits`` n×k, ``labels`` n integer class indices.
    All arrays are stored as float64/int64 regardless of the input dtype.
    """

    domain_id: str
    features: np.ndarray
    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or logits.ndim != 2 or labels.ndim != 1:
            raise InputError(
                f"domain {self.domain_id!r}: features must be 2-d, logits 2-d, labels 1-d"
            )
        n = feats.shape[0]
        if n < 1:
            raise InputError(f"domain {self.domain_id!r}: empty batch")
        if logits.shape[0] != n or labels.shape[0] != n:
            raise InputError(
                f"domain {self.domain_id!r}: row counts differ "
                f"(features {n}, logits {logits.shape[0]}, labels {labels.shape[0]})"
            )
        if not np.isfinite(feats).all() or not np.isfinite(logits).all():
            raise InputError(f"domain {self.domain_id!r}: non-finite features or logits")
        k = logits.shape[1]
        if labels.min() < 0 or labels.max() >= k:
            raise InputError(
                f"domain {self.domain_id!r}: labels must lie in [0, {k}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]


def squared_euclidean_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distances between rows of ``a`` and ``b``, clamped at 0."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise InputError("inputs must be 2-d matrices")
    if a.shape[1] != b.shape[1]:
        raise InputError(
            f"column dimensions differ: left has {a.shape[1]}, right has {b.shape[1]}"
        )
    return kernels.pairwise_sq_dists(a, b)


def multi_gamma_kernel(d: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Evaluate the kernel mixture on a matrix of squared distances."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    if (d < 0).any():
        raise InputError("distance matrix has negative entries")
    return kernels.multi_gamma_kernel(d, cfg.gamma_array())


def mmd_biased(a: FeatureBatch, b: FeatureBatch, cfg: KernelConfig) -> float:
    """Biased (V-statistic) MMD between two feature batches.

    mean(K_aa) + mean(K_bb) − 2·mean(K_ab) with all kernel means taken over
    every entry, diagonals included; clamped at zero.
    """
    if a.dim != b.dim:
        raise InputError(
            f"feature dimensions differ: {a.domain_id!r} has {a.dim}, {b.domain_id!r} has {b.dim}"
        )
    gammas = cfg.gamma_array()
    k_aa = kernels.multi_gamma_kernel(kernels.pairwise_sq_dists(a.features, a.features), gammas)
    k_bb = kernels.multi_gamma_kernel(kernels.pairwise_sq_dists(b.features, b.features), gammas)
    k_ab = kernels.multi_gamma_kernel(kernels.pairwise_sq_dists(a.features, b.features), gammas)
    value = float(k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean())
    return max(value, 0.0)


def pairwise_domain_mmd(batches: list[FeatureBatch], cfg: KernelConfig) -> float:
    """Mean biased MMD over all unordered pairs of domains."""
    if len(batches) < 2:
        raise InsufficientDomainsError(
            f"pairwise MMD needs at least 2 domains, got {len(batches)}"
        )
    total = 0.0
    n_pairs = 0
    for i in range(len(batches)):
        for j in range(i + 1, len(batches)):
            total += mmd_biased(batches[i], batches[j], cfg)
            n_pairs += 1
    return total / n_pairs


def _validate_logits_labels(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise InputError(
            f"logits must be n×k with n labels; got {logits.shape} and {labels.shape}"
        )
    if logits.shape[0] < 1:
        raise InputError("empty logits")
    if not np.isfinite(logits).all():
        raise InputError("non-finite logit")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise InputError(f"labels must lie in [0, {k})")
    return logits, labels


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean −log softmax(logits)[label], with max-subtraction for stability."""
    logits, labels = _validate_logits_labels(logits, labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(log_norm - picked))


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax logit is the label; ties go to the lowest class."""
    logits, labels = _validate_logits_labels(logits, labels)
    return float(np.mean(np.argmax(logits, axis=1) == labels))
