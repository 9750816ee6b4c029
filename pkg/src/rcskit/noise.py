"""Noise models over probability tables and sampling from them.

Kinds:

* ``google``: ``phi * P + (1 - phi) / M``.
* ``symmetric_readout``: with weight ``phi_g = phi + phi_ro`` sample ``P`` and
  flip each bit independently with ``flip_rate``; otherwise uniform.  The
  flip rate and ``phi_ro`` determine each other through
  ``phi_g * (1 - flip_rate)**n = phi``.
* ``asymmetric_readout``: same coefficient ``phi + phi_ro`` but separate
  0->1 and 1->0 flip rates.
* ``composite``: ``phi * P + phi_ro * N_ro + (1 - phi_g) * N_g``, remainder
  uniform.  ``N_ro`` is ``P`` read out with at least one flipped bit and
  ``N_g`` an independent Porter-Thomas table.  An optional gamma overlay
  stands in for the unexplained residual.
* ``gamma_perturb``: google mixture (``phi`` defaults to 1) whose entries are
  multiplied by i.i.d. draws from ``D`` and renormalised.
* ``uniform``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bitspace import (DENSE_MAX_QUBITS, ProbabilityTable, SampleRecord, SyntheticCircuit,
                       derive_seed, generate_porter_thomas)

DEFAULT_FLIP_RATE = 0.038
DEFAULT_FLIP01 = 0.019
DEFAULT_FLIP10 = 0.057
REJECTION_CAP = 40.0

KINDS = ("google", "symmetric_readout", "asymmetric_readout", "composite", "gamma_perturb", "uniform")


@dataclass(frozen=True)
class Distribution:
    """Positive-valued distribution for gamma multipliers.

    ``exponential(scale)``, ``uniform(a, b)``, ``point(c)``, ``lognormal(mu, sigma)``.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "exponential":
            if len(p) > 1 or (p and p[0] <= 0):
                raise ValueError("exponential takes an optional positive scale")
        elif self.kind == "uniform":
            if len(p) != 2 or p[0] < 0 or p[1] <= p[0]:
                raise ValueError("uniform(a, b) needs 0 <= a < b")
        elif self.kind == "point":
            if len(p) != 1 or p[0] <= 0:
                raise ValueError("point(c) needs c > 0")
        elif self.kind == "lognormal":
            if len(p) != 2 or p[1] < 0:
                raise ValueError("lognormal(mu, sigma) needs sigma >= 0")
        else:
            raise ValueError(f"unknown distribution {self.kind!r}")

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if self.kind == "exponential":
            return rng.exponential(p[0] if p else 1.0, size)
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size)
        if self.kind == "point":
            return np.full(size, p[0])
        return rng.lognormal(p[0], p[1], size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d) -> "Distribution":
        if isinstance(d, Distribution):
            return d
        return cls(d["kind"], tuple(d.get("params", ())))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    phi: float = 1.0
    phi_ro: float | None = None
    flip_rate: float | None = None
    flip01: float = DEFAULT_FLIP01
    flip10: float = DEFAULT_FLIP10
    phi_g: float | None = None
    residual_seed: int = 0
    D: Distribution | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi={self.phi} outside [0, 1]")
        for name in ("flip_rate", "flip01", "flip10"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v < 1.0:
                raise ValueError(f"{name}={v} outside [0, 1)")
        if self.phi_ro is not None and self.phi_ro < 0:
            raise ValueError("phi_ro must be non-negative")
        if self.D is not None and not isinstance(self.D, Distribution):
            object.__setattr__(self, "D", Distribution.from_dict(self.D))
        if self.kind == "gamma_perturb" and self.D is None:
            raise ValueError("gamma_perturb needs a distribution D")
        if self.kind == "composite":
            phi_g = 1.0 if self.phi_g is None else self.phi_g
            total = self.phi + (self.phi_ro or 0.0) + (1.0 - phi_g)
            if not 0.0 <= phi_g <= 1.0 or total > 1.0 + 1e-12:
                raise ValueError(f"composite weights sum to {total} > 1")

    @classmethod
    def google(cls, phi: float) -> "NoiseSpec":
        return cls("google", phi)

    @classmethod
    def uniform(cls) -> "NoiseSpec":
        return cls("uniform", 0.0)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("kind", "phi", "phi_ro", "flip_rate", "flip01", "flip10",
                                           "phi_g", "residual_seed", "seed")}
        d["D"] = self.D.to_dict() if self.D else None
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise fields {sorted(unknown)}")
        if d.get("D") is not None:
            d["D"] = Distribution.from_dict(d["D"])
        return cls(**d)


def readout_coefficients(phi: float, n: int, flip_rate: float = DEFAULT_FLIP_RATE) -> float:
    """Readout coefficient ``phi / (1 - flip_rate)**n - phi``."""
    if not 0.0 < phi <= 1.0:
        raise ValueError(f"phi={phi} outside (0, 1]")
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0.0 <= flip_rate < 1.0:
        raise ValueError(f"flip_rate={flip_rate} outside [0, 1)")
    return phi / (1.0 - flip_rate) ** n - phi


def flip_rate_from_coefficient(phi: float, phi_ro: float, n: int) -> float:
    """Inverse of :func:`readout_coefficients` in the flip rate."""
    if phi_ro == 0:
        return 0.0
    return 1.0 - (phi / (phi + phi_ro)) ** (1.0 / n)


def _symmetric_params(spec: NoiseSpec, n: int) -> tuple[float, float]:
    if spec.flip_rate is not None and spec.phi_ro is not None:
        expect = readout_coefficients(spec.phi, n, spec.flip_rate) if spec.phi > 0 else 0.0
        if not math.isclose(expect, spec.phi_ro, rel_tol=1e-6, abs_tol=1e-12):
            raise ValueError("phi_ro and flip_rate are inconsistent")
    if spec.flip_rate is not None:
        e = spec.flip_rate
    elif spec.phi_ro is not None:
        e = flip_rate_from_coefficient(spec.phi, spec.phi_ro, n)
    else:
        e = DEFAULT_FLIP_RATE
    phi_g = spec.phi / (1.0 - e) ** n
    if phi_g > 1.0 + 1e-12:
        raise ValueError(f"readout model needs phi/(1-flip)^n <= 1, got {phi_g}")
    return min(phi_g, 1.0), e


def _asymmetric_phi_g(spec: NoiseSpec, n: int) -> float:
    phi_ro = spec.phi_ro
    if phi_ro is None:
        phi_ro = readout_coefficients(spec.phi, n, 0.5 * (spec.flip01 + spec.flip10)) if spec.phi > 0 else 0.0
    phi_g = spec.phi + phi_ro
    if phi_g > 1.0 + 1e-12:
        raise ValueError(f"readout coefficient phi + phi_ro = {phi_g} exceeds 1")
    return min(phi_g, 1.0)


def flip_channel(probs: np.ndarray, n: int, flip01: float, flip10: float) -> np.ndarray:
    """Push a dense table through independent per-bit readout flips."""
    t = np.asarray(probs, dtype=float).reshape((2,) * n)
    for q in range(n):
        axis = n - 1 - q  # bit q of the flat index
        t = np.moveaxis(t, axis, 0)
        p0, p1 = t[0], t[1]
        t = np.stack([(1 - flip01) * p0 + flip10 * p1, flip01 * p0 + (1 - flip10) * p1])
        t = np.moveaxis(t, 0, axis)
    return np.ascontiguousarray(t).reshape(-1)


def _finish(n: int, probs: np.ndarray) -> ProbabilityTable:
    probs = np.clip(probs, 0.0, None)
    return ProbabilityTable(n, probs / probs.sum())


def apply_noise(table: ProbabilityTable, spec: NoiseSpec) -> ProbabilityTable:
    """Noisy output distribution for ideal table ``table``."""
    n, M, P = table.n, table.M, table.probs
    if spec.kind == "uniform":
        return ProbabilityTable.uniform(n)
    if spec.kind == "google":
        return ProbabilityTable(n, spec.phi * P + (1.0 - spec.phi) / M)
    if spec.kind == "symmetric_readout":
        phi_g, e = _symmetric_params(spec, n)
        return _finish(n, phi_g * flip_channel(P, n, e, e) + (1.0 - phi_g) / M)
    if spec.kind == "asymmetric_readout":
        phi_g = _asymmetric_phi_g(spec, n)
        return _finish(n, phi_g * flip_channel(P, n, spec.flip01, spec.flip10) + (1.0 - phi_g) / M)
    if spec.kind == "composite":
        e = DEFAULT_FLIP_RATE if spec.flip_rate is None else spec.flip_rate
        keep = (1.0 - e) ** n
        flipped = flip_channel(P, n, e, e)
        n_ro = (flipped - keep * P) / (1.0 - keep) if keep < 1 else P
        phi_ro = spec.phi_ro or 0.0
        w_g = 1.0 - (1.0 if spec.phi_g is None else spec.phi_g)
        n_g = generate_porter_thomas(spec.residual_seed, n).probs if w_g else 0.0
        rest = max(0.0, 1.0 - spec.phi - phi_ro - w_g)
        out = _finish(n, spec.phi * P + phi_ro * n_ro + w_g * n_g + rest / M)
        if spec.D is not None:
            out = gamma_perturb(out, spec.D, spec.seed)
        return out
    base = ProbabilityTable(n, spec.phi * P + (1.0 - spec.phi) / M)
    return gamma_perturb(base, spec.D, spec.seed)


def gamma_perturb(table: ProbabilityTable, D: Distribution, seed: int) -> ProbabilityTable:
    """Multiply each entry by an independent draw from ``D`` and renormalise."""
    D = Distribution.from_dict(D)
    rng = np.random.default_rng(derive_seed(seed, "gamma"))
    gamma = D.draw(table.M, rng)
    w = table.probs * gamma
    total = w.sum()
    if not total > 0:
        raise ValueError("gamma perturbation left no probability mass")
    return ProbabilityTable(table.n, w / total)


# -- sampling -----------------------------------------------------------------

def _sample_dense(probs: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    u = rng.random(N) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.size - 1)


def _sample_synthetic(circ: SyntheticCircuit, phi: float, N: int, rng: np.random.Generator) -> np.ndarray:
    """Google-mixture sampling from a point-query source by rejection.

    Signal draws propose uniform ``x`` and accept with ``min(1, w(x)/cap)``
    for Exp(1) weights ``w``; truncation at ``cap`` changes the law by about
    ``exp(-cap)``.
    """
    out = rng.integers(0, circ.M, N, dtype=np.int64)
    signal = np.flatnonzero(rng.random(N) < phi)
    todo = signal
    while todo.size:
        k = max(64, int(todo.size * REJECTION_CAP * 1.2))
        x = rng.integers(0, circ.M, k, dtype=np.uint64)
        w = circ.weights(x)
        acc = x[rng.random(k) * REJECTION_CAP < w]
        take = min(acc.size, todo.size)
        out[todo[:take]] = acc[:take].astype(np.int64)
        todo = todo[take:]
    return out


def sample(source, N: int, seed: int, spec: NoiseSpec | None = None) -> SampleRecord:
    """Draw ``N`` i.i.d. bitstrings.

    ``source`` is a :class:`ProbabilityTable` (used as is when ``spec`` is
    None, else passed through :func:`apply_noise`) or a
    :class:`SyntheticCircuit`, which supports the ``google`` and ``uniform``
    kinds at any ``n``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.default_rng(derive_seed(seed, "sample"))
    meta = {"source": "noise.sample", "seed": seed, "noise": spec.to_dict() if spec else None}
    if isinstance(source, SyntheticCircuit):
        spec = spec or NoiseSpec.google(1.0)
        if spec.kind not in ("google", "uniform"):
            if source.n > DENSE_MAX_QUBITS:
                raise ValueError(f"noise kind {spec.kind!r} needs a dense table; n={source.n} is too large")
            return sample(source.table(), N, seed, spec)
        phi = spec.phi if spec.kind == "google" else 0.0
        if source.n <= DENSE_MAX_QUBITS:
            probs = source.table().probs
            draws = _sample_dense(phi * probs + (1 - phi) / source.M, N, rng)
        else:
            draws = _sample_synthetic(source, phi, N, rng)
        return SampleRecord(source.n, draws, meta)
    if not isinstance(source, ProbabilityTable):
        raise TypeError("source must be a ProbabilityTable or SyntheticCircuit")
    table = apply_noise(source, spec) if spec is not None else source
    return SampleRecord(table.n, _sample_dense(table.probs, N, rng), meta)
