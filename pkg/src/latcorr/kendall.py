"""Sample Kendall's tau-a and zero-proportion statistics.

tau-a: tied pairs contribute zero to the numerator and the denominator is
the untied-pair-count-free n(n-1)/2.  This is NOT tau-b; no tie correction
is applied to the denominator.

The fast path is Knight's merge-count construction: sort by (x, y), count
discordant pairs as inversions of the y sequence, and remove tied pairs
from the concordant+discordant total with the standard tie-count identity.
All counting is exact integer arithmetic, so the fast path reproduces the
brute-force double sum bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "PairStatistics",
    "kendall_tau_a",
    "kendall_tau_a_bruteforce",
    "zero_proportion",
]


@dataclass(frozen=True)
class PairStatistics:
    """Per-pair sample statistics feeding the bridge inversion.

    delta_x / delta_y are the normal-scale thresholds Phi^{-1}(pi0); they are
    -inf / +inf when the zero proportion is 0 / 1 (degenerate thresholds).
    """

    tau_hat: float
    pi0_x: float
    pi0_y: float
    delta_x: float
    delta_y: float

    def __post_init__(self):
        if abs(self.tau_hat) > 1.0:
            raise DomainError(f"|tau_hat| must be <= 1, got {self.tau_hat!r}")
        for p in (self.pi0_x, self.pi0_y):
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"zero proportion must be in [0, 1], got {p!r}")


def _validate_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise DomainError("observed vectors must be one-dimensional")
    if x.shape[0] != y.shape[0]:
        raise DomainError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise DomainError("need at least 2 observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("observed values must be finite")
    return x, y


_BLOCK = 32


def _count_inversions(a: np.ndarray) -> int:
    """Strict inversions (i < j with a[i] > a[j]) via bottom-up merge counting.

    Base blocks are counted with one vectorized comparison; higher levels
    merge adjacent sorted runs, counting cross-inversions with searchsorted.
    Padding with +inf (appended at the end, hence always in the right-hand
    run) contributes no inversions.
    """
    n = a.shape[0]
    if n < 2:
        return 0
    m = -(-n // _BLOCK)
    pad = m * _BLOCK - n
    if pad:
        a = np.concatenate([a, np.full(pad, np.inf)])
    blocks = a.reshape(m, _BLOCK)
    total = int(np.triu(blocks[:, :, None] > blocks[:, None, :], k=1).sum())

    runs = list(np.sort(blocks, axis=1))
    while len(runs) > 1:
        merged_runs = []
        for i in range(0, len(runs) - 1, 2):
            left, right = runs[i], runs[i + 1]
            pos = np.searchsorted(left, right, side="right")
            total += left.shape[0] * right.shape[0] - int(pos.sum())
            merged = np.empty(left.shape[0] + right.shape[0], dtype=a.dtype)
            ridx = pos + np.arange(right.shape[0])
            mask = np.ones(merged.shape[0], dtype=bool)
            mask[ridx] = False
            merged[ridx] = right
            merged[mask] = left
            merged_runs.append(merged)
        if len(runs) % 2:
            merged_runs.append(runs[-1])
        runs = merged_runs
    return total


def _run_length_pair_count(sorted_mask_boundaries: np.ndarray, n: int) -> int:
    # Tied pairs from run boundaries of a sorted sequence.
    counts = np.diff(np.concatenate(([0], sorted_mask_boundaries + 1, [n])))
    return int((counts * (counts - 1) // 2).sum())


def kendall_tau_a(x, y) -> float:
    """Sample Kendall's tau-a of two equal-length vectors, O(n log n).

    Equals 2/(n(n-1)) * sum over i<i' of sign(x_i - x_i') sign(y_i - y_i'),
    exactly (integer counting throughout).
    """
    x, y = _validate_pair(x, y)
    n = x.shape[0]
    n0 = n * (n - 1) // 2

    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order]

    # Tied-pair counts: in x, in y, and jointly.
    n1 = _run_length_pair_count(np.flatnonzero(xs[1:] != xs[:-1]), n)
    y_sorted = np.sort(y)
    n2 = _run_length_pair_count(np.flatnonzero(y_sorted[1:] != y_sorted[:-1]), n)
    n3 = _run_length_pair_count(np.flatnonzero((xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])), n)

    # With ties in x broken by ascending y, inversions of ys are exactly the
    # strictly discordant pairs.
    discordant = _count_inversions(ys)
    s = (n0 - n1 - n2 + n3) - 2 * discordant
    return s / n0


def kendall_tau_a_bruteforce(x, y) -> float:
    """Literal double-sum tau-a, the test oracle for the fast path."""
    x, y = _validate_pair(x, y)
    n = x.shape[0]
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    s = float((sx[iu] * sy[iu]).sum())
    return s / (n * (n - 1) / 2.0)


def zero_proportion(x) -> float:
    """Fraction of entries exactly equal to 0.0 (structural zeros, no epsilon)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] == 0:
        raise DomainError("zero_proportion expects a non-empty vector")
    return float(np.count_nonzero(x == 0.0)) / x.shape[0]
