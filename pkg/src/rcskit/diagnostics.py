"""Shape and stationarity diagnostics for samples against a model.

Every test that needs a null distribution builds it by simulation and
reports empirical p-values as ``(k + 1) / (R + 1)``, where ``k`` counts null
replicates at least as extreme as the observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bitspace import OccurrenceCounts, ProbabilityTable, SampleRecord, derive_seed, half_indices
from .estimators import _point_probs


@dataclass(frozen=True)
class HistogramSpec:
    cell_count: int = 200
    range: tuple[float, float] | None = None  # default: [0, max observed]
    phi: float | None = None  # overlay density parameter

    def __post_init__(self):
        if self.cell_count < 2:
            raise ValueError("cell_count must be >= 2")
        if self.range is not None and not self.range[1] > self.range[0]:
            raise ValueError("histogram range must be increasing")


@dataclass
class DiagnosticReport:
    name: str
    statistics: dict
    p_value: float | None = None
    null: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"name": self.name, "p_value": self.p_value, **self.statistics,
                **{f"null_{k}": v for k, v in self.null.items()}}


def empirical_p(observed: float, null: np.ndarray, rng: np.random.Generator | None = None) -> float:
    """``(k + 1) / (R + 1)`` with ``k = #{null >= observed}``.

    With ``rng`` ties are broken at random, which makes the p-value exactly
    uniform on ``{1, ..., R + 1} / (R + 1)`` under exchangeability.
    """
    null = np.asarray(null, dtype=float)
    if rng is None:
        return float((np.sum(null >= observed) + 1) / (null.size + 1))
    gt = int(np.sum(null > observed))
    eq = int(np.sum(null == observed))
    return float((gt + 1 + int(rng.integers(0, eq + 1))) / (null.size + 1))


# -- size-biased distribution ---------------------------------------------------

def size_biased_density(x, phi: float) -> np.ndarray:
    """Density of ``M * P(x)`` for ``x`` drawn from a google(phi) model, large ``M``."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, (phi * x + 1 - phi) * np.exp(-x), 0.0)


def size_biased_cdf(x, phi: float) -> np.ndarray:
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    e = np.exp(-x)
    return phi * (1 - (1 + x) * e) + (1 - phi) * (1 - e)


def size_biased_values(sample: SampleRecord, probs) -> np.ndarray:
    if sample.n != probs.n:
        raise ValueError("sample and table differ in n")
    return float(probs.M) * _point_probs(probs, sample.draws)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    overlay: np.ndarray | None

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    def rows(self) -> list[tuple]:
        ov = self.overlay if self.overlay is not None else [float("nan")] * self.counts.size
        return [(float(a), float(b), int(c), float(d))
                for a, b, c, d in zip(self.edges[:-1], self.edges[1:], self.counts, ov)]


def size_biased_histogram(sample: SampleRecord, probs, spec: HistogramSpec = HistogramSpec()) -> Histogram:
    """Histogram of ``M * P(x_i)`` with the asymptotic density at bin centres."""
    v = size_biased_values(sample, probs)
    lo, hi = spec.range if spec.range is not None else (0.0, float(v.max()) if v.max() > 0 else 1.0)
    edges = np.linspace(lo, hi, spec.cell_count + 1)
    counts, _ = np.histogram(np.clip(v, lo, hi), bins=edges)
    overlay = None
    if spec.phi is not None:
        overlay = size_biased_density(0.5 * (edges[:-1] + edges[1:]), spec.phi)
    return Histogram(edges, counts.astype(np.int64), overlay)


def size_biased_ks(sample: SampleRecord, probs, phi: float) -> DiagnosticReport:
    """KS test of the size-biased values against the asymptotic mixture law."""
    v = size_biased_values(sample, probs)
    res = stats.kstest(v, lambda x: size_biased_cdf(x, phi))
    return DiagnosticReport("size_biased_ks", {"ks_statistic": float(res.statistic), "phi": phi},
                            float(res.pvalue))


def exact_bin_masses(table: ProbabilityTable, noisy: ProbabilityTable, edges: np.ndarray) -> np.ndarray:
    """Probability under ``noisy`` of each bin of ``M * table`` values.

    The finite-``M`` counterpart of integrating the asymptotic density.
    """
    v = table.M * table.probs
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, edges.size - 2)
    return np.bincount(idx, weights=noisy.probs, minlength=edges.size - 1)


def _merge_cells(obs: np.ndarray, exp: np.ndarray, min_expected: float):
    o_out, e_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(obs, exp):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            o_out.append(o_acc)
            e_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if e_out:
            o_out[-1] += o_acc
            e_out[-1] += e_acc
        else:
            o_out.append(o_acc)
            e_out.append(e_acc)
    return np.array(o_out), np.array(e_out)


def histogram_chi2(hist: Histogram, phi: float | None = None, masses: np.ndarray | None = None,
                   min_expected: float = 5.0) -> DiagnosticReport:
    """Pearson chi2 of histogram counts against bin masses.

    Masses come from ``masses`` (e.g. :func:`exact_bin_masses`) or from the
    asymptotic CDF at ``phi``, with the tail beyond the last edge folded into
    the last cell.  Adjacent cells are merged until each expects at least
    ``min_expected`` draws.
    """
    N = hist.N
    if masses is None:
        if phi is None:
            raise ValueError("need phi or explicit bin masses")
        cdf = size_biased_cdf(hist.edges, phi)
        masses = np.diff(cdf)
        masses[0] += cdf[0]
        masses[-1] += 1 - cdf[-1]
    o, e = _merge_cells(hist.counts.astype(float), N * np.asarray(masses, dtype=float), min_expected)
    chi2 = float(np.sum((o - e) ** 2 / e))
    dof = max(o.size - 1, 1)
    return DiagnosticReport("histogram_chi2", {"chi2": chi2, "dof": dof, "cells": int(o.size)},
                            float(stats.chi2.sf(chi2, dof)))


# -- model goodness of fit ------------------------------------------------------

def chi2_model_test(counts: OccurrenceCounts, model: ProbabilityTable) -> DiagnosticReport:
    """Pearson chi2 of occurrence counts against a dense model with a p-value.

    When every cell expects at least 5 draws the chi2(M-1) law is used;
    otherwise a normal approximation with the exact multinomial mean ``M-1``
    and variance ``2(M-1) + (sum 1/Q - M^2 - 2M + 2) / N``.
    """
    if counts.n != model.n:
        raise ValueError("counts and model differ in n")
    Q = model.probs
    if np.any(Q <= 0):
        raise ValueError("model has empty cells")
    N = counts.N
    O = counts.dense().astype(float)
    E = N * Q
    chi2 = float(np.sum((O - E) ** 2 / E))
    M = model.M
    if E.min() >= 5:
        p, method = float(stats.chi2.sf(chi2, M - 1)), "chi2"
    else:
        var = 2 * (M - 1) + (float(np.sum(1 / Q)) - M * M - 2 * M + 2) / N
        p, method = float(stats.norm.sf((chi2 - (M - 1)) / math.sqrt(var))), "normal"
    return DiagnosticReport("chi2_model", {"chi2": chi2, "dof": M - 1, "method": method}, p)


# -- quantile groups -------------------------------------------------------------

def _group_members(probs: ProbabilityTable, group_size: int) -> list[np.ndarray]:
    if group_size < 1:
        raise ValueError("group_size must be positive")
    order = np.argsort(-probs.probs, kind="stable")
    return [order[i:i + group_size] for i in range(0, order.size, group_size)]


def quantile_group_stats(counts: OccurrenceCounts, probs: ProbabilityTable, group_size: int = 128,
                         model: ProbabilityTable | None = None) -> dict:
    """Per-group occurrence statistics with bitstrings grouped by descending ``P``.

    ``model`` is the distribution the counts are compared to (defaults to
    ``probs``).  Returns arrays ``expected`` (summed expected counts),
    ``observed_mean``, ``observed_std`` and ``model_std`` (multinomial
    standard deviation of a member's count around the group mean).  A short
    last group is kept as is.
    """
    model = probs if model is None else model
    N = counts.N
    O = counts.dense().astype(float)
    E = N * model.probs
    out = {k: [] for k in ("expected", "observed_mean", "observed_std", "model_std")}
    for g in _group_members(probs, group_size):
        out["expected"].append(E[g].sum())
        out["observed_mean"].append(O[g].mean())
        out["observed_std"].append(O[g].std(ddof=1) if g.size > 1 else 0.0)
        var = np.mean(E[g] * (1 - model.probs[g])) + (E[g].var(ddof=1) if g.size > 1 else 0.0)
        out["model_std"].append(math.sqrt(var))
    return {k: np.array(v) for k, v in out.items()}


def quantile_group_null(probs: ProbabilityTable, N: int, group_size: int = 128, R: int = 100,
                        seed: int = 0, model: ProbabilityTable | None = None) -> dict:
    """Mean and sd of each group's ``observed_std`` under multinomial sampling from ``model``."""
    model = probs if model is None else model
    rng = np.random.default_rng(derive_seed(seed, "group-null"))
    groups = _group_members(probs, group_size)
    sims = np.empty((R, len(groups)))
    for r in range(R):
        O = rng.multinomial(N, model.probs).astype(float)
        sims[r] = [O[g].std(ddof=1) if g.size > 1 else 0.0 for g in groups]
    return {"mean": sims.mean(axis=0), "sd": sims.std(axis=0, ddof=1)}


def quantile_group_test(counts: OccurrenceCounts, probs: ProbabilityTable, group_size: int = 128,
                        R: int = 100, seed: int = 0, model: ProbabilityTable | None = None) -> DiagnosticReport:
    obs = quantile_group_stats(counts, probs, group_size, model)
    null = quantile_group_null(probs, counts.N, group_size, R, seed, model)
    z = (obs["observed_std"] - null["mean"]) / np.where(null["sd"] > 0, null["sd"], 1.0)
    return DiagnosticReport("quantile_groups", {"z": z, "frac_above_3sd": float(np.mean(z > 3)),
                                                "frac_within_3sd": float(np.mean(np.abs(z) <= 3))},
                            None, {"mean": null["mean"], "sd": null["sd"]})


# -- stationarity ----------------------------------------------------------------

def _halves_l1(sample: SampleRecord, a: np.ndarray, b: np.ndarray) -> int:
    M = 1 << sample.n
    ca = np.bincount(sample.draws[a], minlength=M)
    cb = np.bincount(sample.draws[b], minlength=M)
    return int(np.abs(ca - cb).sum())


def stationarity_split_test(sample: SampleRecord, n_random_partitions: int = 100, seed: int = 0) -> DiagnosticReport:
    """L1 distance between the ordered halves against random halvings."""
    if sample.N < 2:
        raise ValueError("need N >= 2")
    a, b = half_indices(sample.N, "ordered")
    observed = _halves_l1(sample, a, b)
    null = np.empty(n_random_partitions)
    for r in range(n_random_partitions):
        ra, rb = half_indices(sample.N, "random", derive_seed(seed, "split", r))
        null[r] = _halves_l1(sample, ra, rb)
    p = empirical_p(observed, null, np.random.default_rng(derive_seed(seed, "ties")))
    return DiagnosticReport("stationarity_split", {"ordered_l1": observed}, p,
                            {"values": null, "mean": float(null.mean()), "sd": float(null.std(ddof=1)) if null.size > 1 else 0.0})


def half_predictability(sample: SampleRecord, model: ProbabilityTable, n_random_partitions: int = 100,
                        seed: int = 0) -> DiagnosticReport:
    """Spearman correlation of first-half and second-half count deviations from ``model``.

    A surrogate for "predicting the second half from the first": positive
    correlation beyond random halvings means the halves share structure the
    model does not explain.
    """
    M = model.M

    def rho(a, b):
        ca = np.bincount(sample.draws[a], minlength=M) - a.size * model.probs
        cb = np.bincount(sample.draws[b], minlength=M) - b.size * model.probs
        return float(stats.spearmanr(ca, cb).statistic)

    a, b = half_indices(sample.N, "ordered")
    observed = rho(a, b)
    null = np.array([rho(*half_indices(sample.N, "random", derive_seed(seed, "predict", r)))
                     for r in range(n_random_partitions)])
    return DiagnosticReport("half_predictability", {"spearman": observed}, empirical_p(observed, null),
                            {"mean": float(null.mean()), "sd": float(null.std(ddof=1))})


def bit_drift(sample: SampleRecord, group_count: int = 250) -> DiagnosticReport:
    """Linear trend of each bit's fraction of ones across consecutive groups.

    Groups are as equal as possible (``numpy.array_split``).  Per bit the
    report holds the OLS slope, its t-statistic on ``group_count - 2``
    degrees of freedom and the two-sided p-value; ``p_value`` is the Sidak
    combination ``1 - (1 - min p)**n``.
    """
    if group_count < 3:
        raise ValueError("need at least 3 groups")
    if group_count > sample.N:
        raise ValueError(f"group_count={group_count} exceeds N={sample.N}")
    bits = sample.bit_matrix().astype(float)
    frac = np.array([g.mean(axis=0) for g in np.array_split(bits, group_count)])
    x = np.arange(group_count, dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = xc @ (frac - frac.mean(axis=0)) / sxx
    resid = frac - frac.mean(axis=0) - np.outer(xc, slope)
    dfree = group_count - 2
    s2 = (resid ** 2).sum(axis=0) / dfree
    se = np.sqrt(s2 / sxx)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, slope / np.where(se > 0, se, 1.0), 0.0)
    t[(se == 0) & (slope > 1e-15)] = np.inf
    t[(se == 0) & (slope < -1e-15)] = -np.inf
    slope = np.where(np.abs(slope) < 1e-15, 0.0, slope)
    p = 2 * stats.t.sf(np.abs(t), dfree)
    combined = float(1 - (1 - p.min()) ** sample.n)
    return DiagnosticReport("bit_drift", {"slope": slope, "t": t, "p": p, "dof": dfree}, combined)


def _skew(d: np.ndarray) -> float:
    c = d - d.mean()
    m2 = float(np.mean(c * c))
    return 0.0 if m2 == 0 else float(np.mean(c ** 3) / m2 ** 1.5)


def deviation_asymmetry(counts: OccurrenceCounts, model: ProbabilityTable, N: int | None = None,
                        R: int = 999, seed: int = 0, bins: int = 100) -> DiagnosticReport:
    """Skewness of deviations ``O(x) - N * Q(x)`` against a multinomial null.

    ``p_value`` is the one-sided (positive skew) parametric-bootstrap
    p-value.  Also reported: a histogram of deviations and a binomial sign
    test on deviations beyond two sampling standard deviations.
    """
    N = counts.N if N is None else int(N)
    O = counts.dense().astype(float)
    E = N * model.probs
    d = O - E
    g = _skew(d)
    rng = np.random.default_rng(derive_seed(seed, "asymmetry"))
    null = np.array([_skew(rng.multinomial(N, model.probs) - E) for _ in range(R)])
    sd = np.sqrt(E * (1 - model.probs))
    big = np.abs(d) > 2 * sd
    pos = int(np.sum(big & (d > 0)))
    tot = int(big.sum())
    sign_p = float(stats.binomtest(pos, tot).pvalue) if tot else 1.0
    hist, edges = np.histogram(d, bins=bins)
    return DiagnosticReport("deviation_asymmetry",
                            {"skewness": g, "sign_test_p": sign_p, "n_large_positive": pos, "n_large": tot,
                             "histogram": hist, "edges": edges},
                            empirical_p(g, null),
                            {"mean": float(null.mean()), "sd": float(null.std(ddof=1)) if R > 1 else 0.0})
