"""Bitstrings, probability tables, Porter-Thomas generation and occurrence counts.

Bitstrings are unsigned integers; bit ``i`` of the integer is the readout of
qubit ``i``.  Text renderings put the most significant qubit first.

Randomness that must be addressable per bitstring (Porter-Thomas weights,
synthetic circuits) goes through a counter-based mixing function keyed by
``(seed, x)`` so that a single probability can be queried in O(1) without
materialising the table.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

DENSE_MAX_QUBITS = 24
DENSE_COUNTS_MAX_QUBITS = 16
_NORM_RTOL = 1e-9

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def derive_seed(master: int, *labels: Any) -> int:
    """Derive a 64-bit child seed from a master seed and a sequence of labels.

    The derivation is a keyed BLAKE2b hash of the labels' ``repr``; it does
    not depend on call order, thread count or any global state, so any stage
    of a computation can reconstruct its own stream from ``(master, labels)``.
    """
    key = (int(master) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    h = hashlib.blake2b(repr(tuple(labels)).encode(), digest_size=8, key=key)
    return int.from_bytes(h.digest(), "little")


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def prf_uniform(seed: int, x: np.ndarray | int) -> np.ndarray:
    """Uniform(0, 1) values keyed by ``(seed, x)``, open at both ends."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix(np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)[0]
        v = _splitmix((x + np.uint64(1)) * _GOLDEN ^ key)
    return ((v >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def prf_exponential(seed: int, x: np.ndarray | int) -> np.ndarray:
    """Exp(1) draws by inverse CDF on :func:`prf_uniform`; always > 0."""
    return -np.log(prf_uniform(seed, x))


def bits_to_str(x: int, n: int) -> str:
    return format(int(x), f"0{n}b") if n else ""


def str_to_bits(s: str) -> int:
    s = s.strip()
    if not s or set(s) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {s!r}")
    return int(s, 2)


def check_dense(n: int) -> None:
    if n > DENSE_MAX_QUBITS:
        raise ValueError(f"dense tables are capped at n <= {DENSE_MAX_QUBITS}, got n={n}")


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    """Dense distribution over the ``M = 2**n`` bitstrings, in index order."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        check_dense(self.n)
        p = np.array(self.probs, dtype=np.float64)
        if p.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} probabilities, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ValueError("probabilities must be finite and non-negative")
        total = p.sum()
        if abs(total - 1.0) > _NORM_RTOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, n: int, weights: np.ndarray) -> "ProbabilityTable":
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not total > 0:
            raise ValueError("weights have no mass")
        return cls(n, w / total)

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityTable":
        return cls(n, np.full(1 << n, 1.0 / (1 << n)))

    @property
    def M(self) -> int:
        return 1 << self.n

    def prob(self, x) -> np.ndarray:
        return self.probs[np.asarray(x, dtype=np.int64)]

    def marginal(self, qubits: Sequence[int]) -> "ProbabilityTable":
        """Marginal on ``qubits``; bit ``j`` of the result is ``qubits[j]``."""
        qubits = list(qubits)
        idx = np.arange(self.M, dtype=np.int64)
        sub = np.zeros(self.M, dtype=np.int64)
        for j, q in enumerate(qubits):
            sub |= ((idx >> q) & 1) << j
        out = np.bincount(sub, weights=self.probs, minlength=1 << len(qubits))
        return ProbabilityTable(len(qubits), out / out.sum())

    def __len__(self):
        return self.M


@dataclass(frozen=True)
class SyntheticCircuit:
    """Seeded Porter-Thomas surrogate answering point queries ``P(x)``.

    ``exact`` mode divides the Exp(1) weights by their realised sum (needs an
    enumeration, so ``n <= 24``).  ``expected`` mode divides by ``M``; the
    resulting values sum to ``1 + O(M**-0.5)`` rather than exactly 1.
    """

    seed: int
    n: int
    normalization_mode: str = "expected"
    _norm: float = field(default=0.0, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.n > 62:
            raise ValueError(f"n out of range: {self.n}")
        if self.normalization_mode not in ("exact", "expected"):
            raise ValueError(f"unknown normalization mode {self.normalization_mode!r}")
        if self.normalization_mode == "exact":
            check_dense(self.n)
            total = 0.0
            for start in range(0, self.M, 1 << 20):
                total += float(prf_exponential(self.seed, np.arange(start, min(self.M, start + (1 << 20)),
                                                                  dtype=np.uint64)).sum())
            object.__setattr__(self, "_norm", total)
        else:
            object.__setattr__(self, "_norm", float(self.M))

    @property
    def M(self) -> int:
        return 1 << self.n

    def weights(self, x) -> np.ndarray:
        return prf_exponential(self.seed, x)

    def prob(self, x) -> np.ndarray:
        return self.weights(x) / self._norm

    def table(self) -> ProbabilityTable:
        check_dense(self.n)
        return ProbabilityTable.from_weights(self.n, self.weights(np.arange(self.M, dtype=np.uint64)))


def generate_porter_thomas(seed: int, n: int, normalization_mode: str = "exact"):
    """Porter-Thomas distribution: ``M`` i.i.d. Exp(1) weights, normalised.

    Returns a dense :class:`ProbabilityTable` in ``exact`` mode and a
    :class:`SyntheticCircuit` (point queries only) in ``expected`` mode.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if normalization_mode == "exact":
        if n > DENSE_MAX_QUBITS:
            raise ValueError(f"exact normalization needs an enumeration; n={n} exceeds {DENSE_MAX_QUBITS}")
        return SyntheticCircuit(seed, n, "expected").table()
    if normalization_mode == "expected":
        return SyntheticCircuit(seed, n, "expected")
    raise ValueError(f"unknown normalization mode {normalization_mode!r}")


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """Ordered draws; ``draws[i]`` is the i-th sampled bitstring."""

    n: int
    draws: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.draws, dtype=np.int64).ravel()
        if d.size < 1:
            raise ValueError("a sample needs at least one draw")
        if self.n < 1 or self.n > 62:
            raise ValueError(f"n out of range: {self.n}")
        if d.min() < 0 or d.max() >= (1 << self.n):
            raise ValueError(f"draw outside [0, 2**{self.n})")
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)

    @property
    def N(self) -> int:
        return int(self.draws.size)

    def __len__(self):
        return self.N

    def __getitem__(self, item) -> "SampleRecord":
        if not isinstance(item, slice):
            raise TypeError("SampleRecord supports slicing only; use .draws for items")
        return SampleRecord(self.n, self.draws[item], dict(self.metadata))

    def concat(self, other: "SampleRecord") -> "SampleRecord":
        if other.n != self.n:
            raise ValueError("cannot concatenate samples of different n")
        return SampleRecord(self.n, np.concatenate([self.draws, other.draws]), dict(self.metadata))

    def bit_matrix(self) -> np.ndarray:
        """(N, n) uint8 matrix; column ``i`` is qubit ``i``."""
        return ((self.draws[:, None] >> np.arange(self.n)) & 1).astype(np.uint8)

    def project(self, qubits: Sequence[int]) -> "SampleRecord":
        """Restrict every draw to ``qubits``; bit ``j`` of a result is ``qubits[j]``."""
        out = np.zeros(self.N, dtype=np.int64)
        for j, q in enumerate(qubits):
            out |= ((self.draws >> q) & 1) << j
        return SampleRecord(len(qubits), out, dict(self.metadata))


class OccurrenceCounts:
    """Number of occurrences ``O(x)`` of each bitstring in a sample.

    Stored densely for ``n <= 16`` and as sorted (key, count) arrays above.
    """

    __slots__ = ("n", "total", "_dense", "_keys", "_counts")

    def __init__(self, n: int, draws: np.ndarray | None = None, *, keys=None, counts=None):
        self.n = n
        self._dense = None
        self._keys = self._counts = None
        if draws is not None:
            draws = np.asarray(draws, dtype=np.int64)
            if n <= DENSE_COUNTS_MAX_QUBITS:
                self._dense = np.bincount(draws, minlength=1 << n).astype(np.int64)
            else:
                self._keys, self._counts = np.unique(draws, return_counts=True)
        else:
            keys = np.asarray(keys, dtype=np.int64)
            counts = np.asarray(counts, dtype=np.int64)
            if n <= DENSE_COUNTS_MAX_QUBITS:
                self._dense = np.bincount(keys, weights=counts, minlength=1 << n).astype(np.int64)
            else:
                nz = counts > 0
                self._keys, self._counts = keys[nz], counts[nz]
        self.total = int(self._dense.sum() if self._dense is not None else self._counts.sum())

    @property
    def M(self) -> int:
        return 1 << self.n

    @property
    def N(self) -> int:
        return self.total

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        check_dense(self.n)
        out = np.zeros(self.M, dtype=np.int64)
        out[self._keys] = self._counts
        return out

    def nonzero(self) -> tuple[np.ndarray, np.ndarray]:
        if self._dense is not None:
            keys = np.flatnonzero(self._dense)
            return keys, self._dense[keys]
        return self._keys, self._counts

    def get(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        if self._dense is not None:
            return self._dense[x]
        pos = np.searchsorted(self._keys, x)
        pos = np.minimum(pos, self._keys.size - 1)
        return np.where(self._keys[pos] == x, self._counts[pos], 0)

    def sum_of_squares(self) -> int:
        _, c = self.nonzero()
        return int(np.dot(c, c))

    def as_dict(self) -> dict[int, int]:
        k, c = self.nonzero()
        return {int(a): int(b) for a, b in zip(k, c)}

    def __add__(self, other: "OccurrenceCounts") -> "OccurrenceCounts":
        if other.n != self.n:
            raise ValueError("cannot add counts of different n")
        k1, c1 = self.nonzero()
        k2, c2 = other.nonzero()
        keys, inv = np.unique(np.concatenate([k1, k2]), return_inverse=True)
        counts = np.bincount(inv, weights=np.concatenate([c1, c2])).astype(np.int64)
        return OccurrenceCounts(self.n, keys=keys, counts=counts)

    def __eq__(self, other):
        if not isinstance(other, OccurrenceCounts) or other.n != self.n:
            return NotImplemented
        a, b = self.nonzero(), other.nonzero()
        return np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def __repr__(self):
        return f"OccurrenceCounts(n={self.n}, total={self.total}, distinct={self.nonzero()[0].size})"


def count_occurrences(sample: SampleRecord) -> OccurrenceCounts:
    return OccurrenceCounts(sample.n, sample.draws)


def half_indices(N: int, mode: str = "ordered", seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Index sets of the two halves; the first has ``N // 2`` elements."""
    if N < 2:
        raise ValueError("splitting needs N >= 2")
    h = N // 2
    if mode == "ordered":
        idx = np.arange(N)
    elif mode == "random":
        if seed is None:
            raise ValueError("random split needs a seed")
        idx = np.random.default_rng(seed).permutation(N)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return idx[:h], idx[h:]


def split_half(sample: SampleRecord, mode: str = "ordered", seed: int | None = None):
    """Occurrence counts of the two halves of a sample.

    ``ordered`` splits the sampling order at ``N // 2``; ``random`` takes a
    uniformly random partition into halves of the same sizes.
    """
    a, b = half_indices(sample.N, mode, seed)
    return (OccurrenceCounts(sample.n, sample.draws[a]),
            OccurrenceCounts(sample.n, sample.draws[b]))


def concatenate(samples: Iterable[SampleRecord]) -> SampleRecord:
    samples = list(samples)
    if not samples:
        raise ValueError("nothing to concatenate")
    n = samples[0].n
    if any(s.n != n for s in samples):
        raise ValueError("cannot concatenate samples of different n")
    return SampleRecord(n, np.concatenate([s.draws for s in samples]), dict(samples[0].metadata))
