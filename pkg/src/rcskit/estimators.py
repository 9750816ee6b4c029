"""Fidelity estimators, distances between counts and models, and a priori predictors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bitspace import OccurrenceCounts, ProbabilityTable, SampleRecord, SyntheticCircuit, check_dense

E1_DEFAULT = 0.0016
E2_DEFAULT = 0.0062
E2_DEV_DEFAULT = 0.0063
EQ_DEFAULT = 0.038
CYCLE_DEFAULT = 0.0093


@dataclass(frozen=True)
class EstimateReport:
    name: str
    value: float
    stderr: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr is not None and not self.stderr >= 0:
            raise ValueError("standard error must be non-negative")

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        d = {"estimator": self.name, "value": self.value}
        if self.stderr is not None:
            d["stderr"] = self.stderr
        d.update(self.extra)
        return d


def _point_probs(probs, draws: np.ndarray) -> np.ndarray:
    if isinstance(probs, ProbabilityTable):
        return probs.probs[draws]
    if isinstance(probs, SyntheticCircuit):
        return probs.prob(draws.astype(np.uint64))
    raise TypeError("probs must be a ProbabilityTable or SyntheticCircuit")


def xeb(sample: SampleRecord, probs) -> EstimateReport:
    """Linear cross-entropy fidelity ``mean(M * P(x)) - 1``."""
    if sample.n != probs.n:
        raise ValueError(f"sample has n={sample.n}, table has n={probs.n}")
    v = float(probs.M) * _point_probs(probs, sample.draws)
    se = float(v.std(ddof=1) / math.sqrt(sample.N)) if sample.N > 1 else 0.0
    return EstimateReport("xeb", float(v.mean() - 1.0), se, {"N": sample.N, "n": sample.n})


def patch_product(f_a: float, f_b: float) -> float:
    return float(f_a) * float(f_b)


def xeb_patch(sample: SampleRecord, probs_a, probs_b, partition) -> EstimateReport:
    """Product of the XEBs of the two patches' marginal samples.

    ``partition`` is ``(qubits_a, qubits_b)``; bit ``j`` of patch ``A``'s
    table is qubit ``qubits_a[j]`` of the full register.
    """
    qa, qb = (list(map(int, blk)) for blk in partition)
    if sorted(qa + qb) != list(range(sample.n)):
        raise ValueError("partition must split all qubits of the sample")
    if probs_a.n != len(qa) or probs_b.n != len(qb):
        raise ValueError("patch tables do not match partition sizes")
    fa = xeb(sample.project(qa), probs_a)
    fb = xeb(sample.project(qb), probs_b)
    value = patch_product(fa.value, fb.value)
    se = math.hypot(fa.value * fb.stderr, fb.value * fa.stderr)
    return EstimateReport("xeb_patch", value, se, {"xeb_a": fa.value, "xeb_b": fb.value})


def t_estimator(counts: OccurrenceCounts, n: int | None = None) -> EstimateReport:
    """Unbiased estimator of ``phi**2`` from occurrence counts alone.

    ``value`` is ``T = sign(T2) * sqrt(|T2|)``; ``extra['t2']`` holds ``T2``.
    """
    n = counts.n if n is None else n
    if n != counts.n:
        raise ValueError("n does not match the counts")
    N = counts.N
    if N < 2:
        raise ValueError("the T estimator needs at least two draws")
    M = float(1 << n)
    s2 = float(counts.sum_of_squares())
    pairs = float(N) * (N - 1)
    t2 = M * (M + 1) / (pairs * (M - 1)) * (s2 - N - pairs / M)
    t = math.copysign(math.sqrt(abs(t2)), t2)
    return EstimateReport("t", t, None, {"t2": t2, "N": N})


@dataclass(frozen=True)
class DistanceReport:
    chi2: float
    L1: float
    L2: float
    KL: float
    pearson_correlation: float
    dof: int
    dof_fitted: int
    kl_infinite: bool = False
    correlation_degenerate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def distances(counts: OccurrenceCounts, model: ProbabilityTable, N: int | None = None) -> DistanceReport:
    """Distances between occurrence counts ``O`` and expected counts ``N * Q``.

    chi2 = sum (O - NQ)^2 / (NQ); L1 = sum |NQ - O|; L2 = sqrt(sum (NQ - O)^2);
    KL = sum (O/N) log((O/N) / Q) with empty cells contributing 0; Pearson
    correlation of ``O`` with ``Q`` (0 and flagged when either is constant).
    """
    check_dense(model.n)
    if counts.n != model.n:
        raise ValueError("counts and model differ in n")
    N = counts.N if N is None else int(N)
    O = counts.dense().astype(float)
    Q = model.probs
    E = N * Q
    diff = O - E
    zero = E == 0
    if np.any(zero & (O > 0)):
        chi2 = math.inf
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            chi2 = float(np.sum(np.where(zero, 0.0, diff * diff / np.where(zero, 1.0, E))))
    nz = O > 0
    kl_inf = bool(np.any(nz & (Q == 0)))
    if kl_inf:
        kl = math.inf
    else:
        f = O[nz] / N
        kl = float(np.sum(f * np.log(f / Q[nz])))
    degenerate = O.std() == 0 or Q.std() == 0
    corr = 0.0 if degenerate else float(np.corrcoef(O, Q)[0, 1])
    M = model.M
    return DistanceReport(chi2, float(np.abs(diff).sum()), float(math.sqrt(np.dot(diff, diff))), kl, corr,
                          M - 1, M - 2, kl_inf, bool(degenerate))


def normalized_l2(a: ProbabilityTable, b: ProbabilityTable) -> float:
    """``2**(n/2) * ||a - b||_2``; equals about phi between uniform and a google(phi) model."""
    if a.n != b.n:
        raise ValueError("tables differ in n")
    d = a.probs - b.probs
    return float(math.sqrt(a.M * np.dot(d, d)))


def fit_phi(counts: OccurrenceCounts, table: ProbabilityTable, grid: Sequence[float] | None = None) -> EstimateReport:
    """Grid search for the google-model phi minimising chi2 against ``counts``."""
    grid = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, dtype=float)
    O = counts.dense().astype(float)
    N = counts.N
    P, M = table.probs, table.M
    best = (math.inf, 0.0)
    for phi in grid:
        E = N * (phi * P + (1 - phi) / M)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = float(np.sum(np.where(E > 0, (O - E) ** 2 / E, np.where(O > 0, np.inf, 0.0))))
        if c < best[0]:
            best = (c, float(phi))
    return EstimateReport("fit_phi", best[1], None, {"chi2": best[0], "dof": M - 2})


# -- a priori predictors -------------------------------------------------------

@dataclass(frozen=True)
class FidelityBudget:
    one_gate_errors: tuple
    two_gate_errors: tuple
    readout_errors: tuple

    def __post_init__(self):
        for name in ("one_gate_errors", "two_gate_errors", "readout_errors"):
            vals = tuple(float(v) for v in getattr(self, name))
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, vals)

    @classmethod
    def uniform(cls, n: int, g1: int, g2: int, e1: float = E1_DEFAULT, e2: float = E2_DEFAULT,
                eq: float = EQ_DEFAULT) -> "FidelityBudget":
        return cls((e1,) * g1, (e2,) * g2, (eq,) * n)


def formula77(budget: FidelityBudget) -> float:
    """Product of ``1 - e`` over all 1-gates, 2-gates and readouts."""
    out = 1.0
    for group in (budget.one_gate_errors, budget.two_gate_errors, budget.readout_errors):
        for e in group:
            out *= 1.0 - e
    return out


def formula77_simplified(n: int, g1_count: int, g2_count: int, variant: str = "per-gate",
                         e1: float = E1_DEFAULT, e2: float = E2_DEFAULT, eq: float = EQ_DEFAULT,
                         e_cycle: float = CYCLE_DEFAULT) -> float:
    """Uniform-rate predictor; ``cycle`` folds 1-gate errors into a per-2-gate rate."""
    if min(n, g1_count, g2_count) < 0:
        raise ValueError("counts must be non-negative")
    if variant == "per-gate":
        return (1 - e1) ** g1_count * (1 - e2) ** g2_count * (1 - eq) ** n
    if variant == "cycle":
        return (1 - e_cycle) ** g2_count * (1 - eq) ** n
    raise ValueError(f"unknown variant {variant!r}")


def dev_estimate(n: int, g1_count: int, g2_count: int, rel_err: float = 0.2,
                 rates: tuple = (EQ_DEFAULT, E1_DEFAULT, E2_DEV_DEFAULT)) -> float:
    """Relative deviation of the predictor when each rate is off by ``rel_err`` independently."""
    if min(n, g1_count, g2_count) < 0:
        raise ValueError("counts must be non-negative")
    eq, e1, e2 = rates
    return rel_err * (math.sqrt(n) * eq + math.sqrt(g1_count) * e1 + math.sqrt(g2_count) * e2)


def biased_dev_estimate(n: int, g1_count: int, g2_count: int, t: float, rel_err: float = 0.2,
                        rates: tuple = (EQ_DEFAULT, E1_DEFAULT, E2_DEV_DEFAULT)) -> float:
    """Deviation when a fraction ``t`` of rates is systematically biased."""
    if not 0.0 <= t <= 0.5:
        raise ValueError(f"t={t} outside [0, 0.5]")
    eq, e1, e2 = rates
    biased = n * eq + g1_count * e1 + g2_count * e2
    return (1 - 2 * t) * dev_estimate(n, g1_count, g2_count, rel_err, rates) + 2 * t * biased


def calibration_effect(theta: float, phi: float) -> float:
    """Predicted fidelity factor for scoring a gate ``(theta, phi)`` as the nominal gate."""
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ValueError("angles must be finite")
    a = math.cos(theta - math.pi / 2)
    b = math.cos(phi - math.pi / 6)
    return (4 + math.cos(2 * (theta - math.pi / 2)) + b + 2 * a * (1 + b)) / 10


def calibration_effect_total(gates: Iterable[tuple[float, float]]) -> float:
    out = 1.0
    for theta, phi in gates:
        out *= calibration_effect(theta, phi)
    return out
