"""Sparsifying compression operators and their moment estimators.

Three families are supported: unscaled Rand-k (contractive, biased),
scaled Rand-k (unbiased, not contractive for k < d/2), and Top-k
(contractive, deterministic, biased). ``identity`` is the no-compression
baseline.

Every compressor works row-wise on a 2-d array so that an agent can
compress all of its outgoing messages with one call. Row-wise and
one-vector-at-a-time calls consume the RNG identically, which is what lets
two independent implementations share a sample path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KINDS",
    "CompressedMessage",
    "CompressorSpec",
    "Compressor",
    "rand_k",
    "rand_k_unbiased",
    "top_k",
    "estimate_moments",
]

KINDS = ("identity", "rand_k", "rand_k_unbiased", "top_k")
VALUE_BITS = 64


@dataclass(frozen=True)
class CompressedMessage:
    """Sparse wire representation of a compressed vector."""

    indices: np.ndarray
    values: np.ndarray
    original_dim: int

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or idx.shape != np.shape(self.values):
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.original_dim):
            raise ValueError("indices must be strictly increasing and inside [0, original_dim)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("message values must be finite")

    def densify(self) -> np.ndarray:
        out = np.zeros(self.original_dim)
        out[self.indices] = self.values
        return out

    @property
    def bits(self) -> int:
        return message_bits(len(self.indices), self.original_dim)


def message_bits(k: int, dim: int, indexed: bool = True) -> int:
    """Wire cost: 64-bit values plus ``ceil(log2 dim)``-bit indices."""
    index_bits = math.ceil(math.log2(dim)) if indexed and dim > 1 else 0
    return k * (VALUE_BITS + index_bits)


def _check_k(k: int, d: int) -> None:
    if not 1 <= k <= d:
        raise ValueError(f"k must satisfy 1 <= k <= {d}, got {k}")


def _random_subsets(rng: np.random.Generator, rows: int, d: int, k: int) -> np.ndarray:
    # uniform k-subsets via the k smallest of d iid uniform keys; one
    # rng.random(d) draw per row regardless of batching
    keys = rng.random((rows, d))
    if k == 1:
        return keys.argmin(axis=1)[:, None]
    return np.sort(np.argpartition(keys, k - 1, axis=1)[:, :k], axis=1)


def _top_subsets(V: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        # argmax returns the first maximizer
        return np.abs(V).argmax(axis=1)[:, None]
    # stable sort on -|v| keeps the lowest index first among ties
    order = np.argsort(-np.abs(V), axis=1, kind="stable")[:, :k]
    return np.sort(order, axis=1)


def _gather(V: np.ndarray, idx: np.ndarray, scale: float = 1.0) -> np.ndarray:
    out = np.zeros_like(V)
    rows = np.arange(V.shape[0])[:, None]
    out[rows, idx] = V[rows, idx] * scale
    return out


def _message(v: np.ndarray, idx: np.ndarray, scale: float = 1.0) -> CompressedMessage:
    idx = np.asarray(idx, dtype=np.intp)
    return CompressedMessage(idx, v[idx] * scale, v.size)


def rand_k(v, k: int, rng: np.random.Generator) -> CompressedMessage:
    """Keep ``k`` uniformly chosen coordinates with their raw values."""
    v = np.asarray(v, dtype=float)
    _check_k(k, v.size)
    return _message(v, _random_subsets(rng, 1, v.size, k)[0])


def rand_k_unbiased(v, k: int, rng: np.random.Generator) -> CompressedMessage:
    """Rand-k rescaled by ``d/k`` so that the expectation equals ``v``."""
    v = np.asarray(v, dtype=float)
    _check_k(k, v.size)
    return _message(v, _random_subsets(rng, 1, v.size, k)[0], v.size / k)


def top_k(v, k: int) -> CompressedMessage:
    """Keep the ``k`` largest-magnitude coordinates (ties: lowest index)."""
    v = np.asarray(v, dtype=float)
    _check_k(k, v.size)
    return _message(v, _top_subsets(v[None, :], k)[0])


@dataclass(frozen=True)
class CompressorSpec:
    kind: str = "identity"
    k: int = 1
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}; expected one of {KINDS}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")

    @property
    def deterministic(self) -> bool:
        return self.kind in ("identity", "top_k")

    def build(self, seed=None) -> Compressor:
        return Compressor(self, np.random.default_rng(self.seed if seed is None else seed))


class Compressor:
    """A compressor bound to one agent's private RNG stream."""

    def __init__(self, spec: CompressorSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        self.rng = rng if rng is not None else np.random.default_rng(spec.seed)

    def __repr__(self) -> str:
        return f"Compressor({self.spec.kind!r}, k={self.spec.k})"

    def compress_rows(self, V: np.ndarray, return_support: bool = False):
        """Compress each row of ``V`` independently; returns densified rows.

        With ``return_support`` a boolean mask of the transmitted coordinates
        is returned as well.
        """
        V = np.asarray(V, dtype=float)
        kind, d = self.spec.kind, V.shape[1]
        if kind == "identity":
            out, idx = V.copy(), None
        else:
            _check_k(self.spec.k, d)
            if kind == "top_k":
                idx = _top_subsets(V, self.spec.k)
                out = _gather(V, idx)
            else:
                idx = _random_subsets(self.rng, V.shape[0], d, self.spec.k)
                out = _gather(V, idx, d / self.spec.k if kind == "rand_k_unbiased" else 1.0)
        if not return_support:
            return out
        if idx is None:
            return out, np.ones(V.shape, dtype=bool)
        support = np.zeros(V.shape, dtype=bool)
        support[np.arange(V.shape[0])[:, None], idx] = True
        return out, support

    def compress(self, v) -> CompressedMessage:
        v = np.asarray(v, dtype=float)
        kind = self.spec.kind
        if kind == "identity":
            return CompressedMessage(np.arange(v.size), v.copy(), v.size)
        if kind == "top_k":
            return top_k(v, self.spec.k)
        if kind == "rand_k":
            return rand_k(v, self.spec.k, self.rng)
        return rand_k_unbiased(v, self.spec.k, self.rng)

    def message_bits(self, dim: int) -> int:
        if self.spec.kind == "identity":
            return message_bits(dim, dim, indexed=False)
        return message_bits(min(self.spec.k, dim), dim)

    def norm_bound(self, dim: int) -> float:
        """Almost-sure gain ``sup ||C(v)|| / ||v||``."""
        return dim / self.spec.k if self.spec.kind == "rand_k_unbiased" else 1.0


def estimate_moments(spec: CompressorSpec, v, trials: int, seed) -> tuple[np.ndarray, float]:
    """Monte Carlo estimates of ``E[C(v)]`` and ``E||C(v) - v||^2 / ||v||^2``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    v = np.asarray(v, dtype=float)
    sq = float(v @ v)
    if sq == 0.0:
        raise ValueError("contraction ratio is undefined for the zero vector")
    comp = spec.build(seed)
    total = np.zeros_like(v)
    err = 0.0
    chunk = 4096
    done = 0
    while done < trials:
        rows = min(chunk, trials - done)
        C = comp.compress_rows(np.broadcast_to(v, (rows, v.size)))
        total += C.sum(axis=0)
        err += float(np.sum((C - v) ** 2))
        done += rows
    return total / trials, err / (trials * sq)
