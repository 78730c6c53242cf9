"""Deterministic numeric primitives shared by every other module.

Everything here is pure: same inputs, same outputs, no hidden state. All
randomness in the package flows through :class:`RngStream`, a thin wrapper
around numpy's Philox counter-based generator, so that a single 64-bit seed
pins every stochastic operation in the repository.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sstats

from .errors import InputError, NumericError, UndefinedMetricError

__all__ = [
    "RngStream",
    "ConfidenceInterval",
    "rbf_kernel",
    "mmd_biased",
    "median_heuristic_bandwidth",
    "auroc",
    "mean_ci95",
    "finite_diff_grad",
]


def _label_words(label: str) -> tuple[int, ...]:
    """Hash a child-stream label to four stable 32-bit words."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Seeded random stream backed by the Philox counter-based generator.

    Philox is a named, portable PRNG: the same (seed, child-label path)
    yields the identical draw sequence on every platform. Child streams are
    derived by hashing a text label into the Philox spawn key, so they are
    mutually independent and reproducible without any shared mutable state.

    Instances are stateful (each draw advances the counter) and must not be
    shared across concurrent tasks; derive one child per task instead.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        self.seed = int(seed)
        self._path = tuple(int(w) for w in _path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, label: str) -> "RngStream":
        """Derive an independent, reproducible stream for ``label``."""
        return RngStream(self.seed, self._path + _label_words(label))

    def normal(self, shape: tuple[int, ...] | int = ()) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, shape: tuple[int, ...] | int = ()) -> np.ndarray:
        return self._gen.random(shape)

    def integers(self, low: int, high: int, shape: tuple[int, ...] | int = ()) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def bernoulli(self, p, shape: tuple[int, ...] | int = ()) -> np.ndarray:
        """0/1 draws with success probability ``p`` (scalar or broadcastable)."""
        return (self._gen.random(shape) < p).astype(np.int8)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, path_len={len(self._path)})"


@dataclass(frozen=True)
class ConfidenceInterval:
    """Mean with a symmetric 95% Student-t interval over independent runs."""

    mean: float
    lo: float
    hi: float
    n_runs: int

    def __post_init__(self):
        if self.n_runs < 1:
            raise InputError("n_runs must be positive")
        if not (self.lo <= self.mean <= self.hi):
            raise NumericError(
                f"inconsistent interval: lo={self.lo}, mean={self.mean}, hi={self.hi}"
            )

    def to_dict(self) -> dict:
        return {"mean": self.mean, "lo": self.lo, "hi": self.hi, "n_runs": self.n_runs}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfidenceInterval":
        return cls(mean=d["mean"], lo=d["lo"], hi=d["hi"], n_runs=int(d["n_runs"]))


def rbf_kernel(x: Sequence[float], y: Sequence[float], bandwidth: float) -> float:
    """Gaussian kernel exp(-||x - y||^2 / (2 * bandwidth^2))."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise InputError(f"rbf_kernel needs equal-length vectors, got {xa.shape} vs {ya.shape}")
    if not bandwidth > 0:
        raise InputError(f"bandwidth must be positive, got {bandwidth}")
    sq = float(np.sum((xa - ya) ** 2))
    return float(np.exp(-sq / (2.0 * bandwidth**2)))


def _as_sample_matrix(samples, name: str) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InputError(f"{name} must be a non-empty list of equal-length vectors")
    return arr


def mmd_biased(X, Y, bandwidth: float) -> float:
    """Biased (V-statistic) squared maximum mean discrepancy with an RBF kernel.

    Computes, for two equally sized batches of B vectors each,

        1/B^2 sum_ij k(x_i, x_j) + 1/B^2 sum_ij k(y_i, y_j)
        - 2/B^2 sum_ij k(x_i, y_j)

    with diagonal terms included. The result is nonnegative up to floating
    point noise; tiny negatives (>= -1e-12) are clamped to zero, anything
    more negative is a numeric failure.
    """
    xa = _as_sample_matrix(X, "X")
    ya = _as_sample_matrix(Y, "Y")
    if xa.shape[0] != ya.shape[0]:
        raise InputError(f"batch sizes must match, got {xa.shape[0]} vs {ya.shape[0]}")
    if xa.shape[1] != ya.shape[1]:
        raise InputError(f"vector dimensions must match, got {xa.shape[1]} vs {ya.shape[1]}")
    if not bandwidth > 0:
        raise InputError(f"bandwidth must be positive, got {bandwidth}")

    denom = 2.0 * bandwidth**2

    def mean_kernel(a: np.ndarray, b: np.ndarray) -> float:
        # Per-pair kernels computed with the same arithmetic as rbf_kernel,
        # totalled with fsum so the result is independent of summation order
        # and matches a naive four-loop accumulation bit for bit.
        total = math.fsum(
            v
            for i in range(a.shape[0])
            for v in np.exp(-((a[i] - b) ** 2).sum(axis=1) / denom).tolist()
        )
        return total / (a.shape[0] * b.shape[0])

    value = mean_kernel(xa, xa) + mean_kernel(ya, ya) - 2.0 * mean_kernel(xa, ya)
    if value < -1e-12:
        raise NumericError(f"MMD estimate {value} below tolerance; kernel not PSD?")
    return max(value, 0.0)


def median_heuristic_bandwidth(X, Y) -> float:
    """Median pairwise Euclidean distance of the combined batch.

    Standard bandwidth heuristic for RBF-kernel MMD; recomputed per batch.
    Falls back to 1.0 when all points coincide (median distance zero).
    """
    z = np.concatenate([_as_sample_matrix(X, "X"), _as_sample_matrix(Y, "Y")], axis=0)
    sq = (
        np.sum(z**2, axis=1)[:, None]
        + np.sum(z**2, axis=1)[None, :]
        - 2.0 * (z @ z.T)
    )
    iu = np.triu_indices(z.shape[0], k=1)
    dists = np.sqrt(np.maximum(sq[iu], 0.0))
    med = float(np.median(dists)) if dists.size else 0.0
    return med if med > 0.0 else 1.0


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic.

    Equivalent to the fraction of (positive, negative) pairs ranked
    correctly, with ties counted as half credit.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise InputError(f"scores and labels must be equal-length vectors, got {s.shape} vs {y.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericError("scores contain non-finite values")
    pos = y == 1
    neg = y == 0
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    if n_pos + n_neg != y.size:
        raise InputError("labels must be binary 0/1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC undefined: need both classes, got {n_pos} positives / {n_neg} negatives"
        )
    ranks = sstats.rankdata(s, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def mean_ci95(values) -> ConfidenceInterval:
    """Mean with 95% Student-t interval: mean +/- t_{0.975,n-1} * sd / sqrt(n).

    A single run degenerates to a zero-width interval.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InputError("values must be a non-empty 1-D list")
    if not np.all(np.isfinite(v)):
        raise NumericError("values contain non-finite entries")
    n = v.size
    mean = float(v.mean())
    if n == 1:
        return ConfidenceInterval(mean=mean, lo=mean, hi=mean, n_runs=1)
    sd = float(v.std(ddof=1))
    half = float(sstats.t.ppf(0.975, n - 1)) * sd / np.sqrt(n)
    return ConfidenceInterval(mean=mean, lo=mean - half, hi=mean + half, n_runs=n)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / (2h).

    The package-wide oracle for checking analytic gradients; deliberately
    independent of the autodiff engine.
    """
    xa = np.asarray(x, dtype=np.float64)
    if not h > 0:
        raise InputError(f"step h must be positive, got {h}")
    flat = xa.reshape(-1).copy()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_hi = float(f(flat.reshape(xa.shape)))
        flat[i] = orig - h
        f_lo = float(f(flat.reshape(xa.shape)))
        flat[i] = orig
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise NumericError(f"function returned non-finite value near coordinate {i}")
        grad[i] = (f_hi - f_lo) / (2.0 * h)
    return grad.reshape(xa.shape)
