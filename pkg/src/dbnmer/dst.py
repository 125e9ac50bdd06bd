"""Dynamic soft targets: a K×K column-stochastic label matrix refreshed every epoch.

Column ``k`` of ``S`` is the target distribution used whenever the ground
truth token is ``k``.  During an epoch the temperature-softened output
distribution of every correctly predicted token is summed into its
category's column; at the end of the epoch the per-category averages are
mixed with the previous matrix.  Training in epoch ``t`` always reads the
matrix finalised after epoch ``t-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .vocab import EOS_ID, PAD_ID, SOS_ID

RESERVED_IDS = (PAD_ID, SOS_ID, EOS_ID)


@dataclass
class DstConfig:
    beta: float = 0.5
    temperature: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class SoftLabelMatrix:
    S: np.ndarray
    epoch: int = 0
    reserved: tuple = RESERVED_IDS

    @property
    def K(self) -> int:
        return self.S.shape[0]

    def column(self, k: int) -> np.ndarray:
        return self.S[:, k]

    def validate(self, tol: float = 1e-9) -> None:
        S = self.S
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"soft-label matrix must be square, got {S.shape}")
        if not np.all(np.isfinite(S)) or S.min() < 0 or S.max() > 1 + tol:
            raise ValueError("soft-label entries must lie in [0, 1]")
        dev = np.abs(S.sum(axis=0) - 1).max()
        if dev > tol:
            raise ValueError(f"soft-label columns must sum to 1 (deviation {dev:.3e})")

    def copy(self) -> "SoftLabelMatrix":
        return SoftLabelMatrix(self.S.copy(), self.epoch, self.reserved)


def init_soft_labels(K: int, eps: float = 0.1, reserved=RESERVED_IDS) -> SoftLabelMatrix:
    """Label-smoothing start: 1-eps on the diagonal, eps/(K-1) elsewhere; reserved columns one-hot."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    if K < 2:
        S = np.eye(K)
    else:
        S = np.full((K, K), eps / (K - 1))
        np.fill_diagonal(S, 1.0 - eps)
    for r in reserved:
        if r < K:
            S[:, r] = 0.0
            S[r, r] = 1.0
    return SoftLabelMatrix(S, 0, tuple(r for r in reserved if r < K))


def tempered_softmax(logits, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if temperature != 1:
        z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class EpochAccumulator:
    K: int
    temperature: float = 10.0
    sums: np.ndarray = field(default=None)
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.sums is None:
            self.sums = np.zeros((self.K, self.K))
        if self.counts is None:
            self.counts = np.zeros(self.K, dtype=np.int64)

    def merge(self, other: "EpochAccumulator") -> "EpochAccumulator":
        return EpochAccumulator(self.K, self.temperature, self.sums + other.sums,
                                self.counts + other.counts)


def accumulate(acc: EpochAccumulator, predicted_id: int, target_id: int, logits) -> EpochAccumulator:
    """Add one token's softened distribution to its category column if it was predicted correctly."""
    if not (0 <= predicted_id < acc.K and 0 <= target_id < acc.K):
        raise ValueError("token ids outside the vocabulary")
    if predicted_id != target_id:
        return acc
    acc.sums[:, target_id] += tempered_softmax(logits, acc.temperature)
    acc.counts[target_id] += 1
    return acc


def accumulate_batch(acc: EpochAccumulator, logits: np.ndarray, targets: np.ndarray,
                     mask: np.ndarray | None = None) -> EpochAccumulator:
    """Vectorised :func:`accumulate` over rows of ``logits`` (…, K) with ``targets`` (…)."""
    logits = np.asarray(logits).reshape(-1, acc.K)
    targets = np.asarray(targets).reshape(-1)
    keep = np.argmax(logits, axis=-1) == targets
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool).reshape(-1)
    if not keep.any():
        return acc
    probs = tempered_softmax(logits[keep], acc.temperature)
    tg = targets[keep]
    np.add.at(acc.sums.T, tg, probs)
    np.add.at(acc.counts, tg, 1)
    return acc


def finalize_epoch(acc: EpochAccumulator, prev: SoftLabelMatrix, beta: float) -> SoftLabelMatrix:
    """Mix the epoch's per-category averages into the previous matrix with weight ``1 - beta``.

    Categories never predicted correctly, and reserved tokens, keep their old column.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    S = prev.S.copy()
    seen = acc.counts > 0
    for r in prev.reserved:
        seen[r] = False
    cols = np.flatnonzero(seen)
    if cols.size:
        avg = acc.sums[:, cols] / acc.counts[cols]
        S[:, cols] = beta * prev.S[:, cols] + (1.0 - beta) * avg
    return SoftLabelMatrix(S, prev.epoch + 1, prev.reserved)


def soft_targets(S: SoftLabelMatrix, targets: np.ndarray) -> np.ndarray:
    """Stack the columns of ``S`` selected by ``targets`` into (…, K) distributions."""
    return S.S.T[np.asarray(targets)]


def soft_loss(logits: Tensor, targets: np.ndarray, S: SoftLabelMatrix,
              temperature: float = 1.0, validate: bool = True) -> Tensor:
    """Mean soft cross-entropy over non-<pad> positions.

    ``logits`` is (T, K) or (B, T, K) and ``targets`` the matching ids.
    ``temperature`` divides the logits inside the loss; 1 keeps the plain softmax.
    """
    if validate:
        S.validate()
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets {targets.shape} do not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= S.K):
        raise ValueError("target ids outside the soft-label matrix")
    keep = targets != PAD_ID
    n = int(keep.sum())
    if n == 0:
        raise ValueError("no non-pad targets")
    z = logits if temperature == 1 else logits * (1.0 / temperature)
    ce = ag.cross_entropy_soft(z, soft_targets(S, targets), validate=False)
    return (ce * keep.astype(np.float64)).sum() * (1.0 / n)
