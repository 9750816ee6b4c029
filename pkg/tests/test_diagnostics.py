import numpy as np
import pytest
from scipy import integrate, stats

from rcskit.bitspace import OccurrenceCounts, ProbabilityTable, SampleRecord, concatenate, count_occurrences, generate_porter_thomas
from rcskit.diagnostics import (DiagnosticReport, HistogramSpec, bit_drift, chi2_model_test, deviation_asymmetry,
                                empirical_p, exact_bin_masses, half_predictability, histogram_chi2,
                                quantile_group_stats, quantile_group_test, size_biased_cdf, size_biased_density,
                                size_biased_histogram, size_biased_ks, stationarity_split_test)
from rcskit.noise import Distribution, NoiseSpec, apply_noise, gamma_perturb, sample


@pytest.fixture(scope="module")
def pt12():
    return generate_porter_thomas(31, 12)


@pytest.fixture(scope="module")
def pt20():
    return generate_porter_thomas(32, 20)


def test_density_and_cdf_consistent():
    for phi in (0.0, 0.37, 1.0):
        total, _ = integrate.quad(lambda x: size_biased_density(x, phi), 0, np.inf)
        assert total == pytest.approx(1.0)
        part, _ = integrate.quad(lambda x: size_biased_density(x, phi), 0, 1.7)
        assert size_biased_cdf(1.7, phi) == pytest.approx(part)


def test_histogram_counts_sum_to_n(pt12):
    s = sample(pt12, 10_000, 1, NoiseSpec.google(0.5))
    h = size_biased_histogram(s, pt12, HistogramSpec(phi=0.5))
    assert h.counts.size == 200 and h.N == 10_000
    assert h.overlay is not None and len(h.rows()) == 200
    with pytest.raises(ValueError):
        HistogramSpec(cell_count=1)


@pytest.mark.parametrize("phi", [0.0, 1.0, 0.3701])
def test_size_biased_fit_large_m(pt20, phi):
    s = sample(pt20, 50_000, 2, NoiseSpec.google(phi))
    assert size_biased_ks(s, pt20, phi).p_value > 0.001
    h = size_biased_histogram(s, pt20, HistogramSpec(range=(0.0, 12.0)))
    assert histogram_chi2(h, phi).p_value > 0.001


def test_size_biased_fit_n12_exact_masses(pt12):
    phi = 0.3701
    s = sample(pt12, 500_000, 3, NoiseSpec.google(phi))
    h = size_biased_histogram(s, pt12, HistogramSpec(range=(0.0, 12.0)))
    masses = exact_bin_masses(pt12, apply_noise(pt12, NoiseSpec.google(phi)), h.edges)
    assert histogram_chi2(h, masses=masses).p_value > 0.001


def test_size_biased_detects_wrong_phi(pt20):
    s = sample(pt20, 50_000, 4, NoiseSpec.google(0.8))
    assert size_biased_ks(s, pt20, 0.2).p_value < 1e-6


def test_chi2_model_test_dense_and_sparse(pt12, pt20):
    model = apply_noise(pt12, NoiseSpec.google(0.37))
    r = chi2_model_test(count_occurrences(sample(model, 500_000, 5)), model)
    assert r.statistics["method"] == "chi2" and r.p_value > 0.001
    m20 = apply_noise(pt20, NoiseSpec.google(0.37))
    r = chi2_model_test(count_occurrences(sample(m20, 200_000, 5)), m20)
    assert r.statistics["method"] == "normal" and r.p_value > 0.001


def test_empirical_p_convention():
    assert empirical_p(10, np.arange(9)) == pytest.approx(1 / 10)
    assert empirical_p(-1, np.arange(9)) == 1.0
    with pytest.raises(ValueError):
        DiagnosticReport("x", {}, 1.5)


def test_quantile_groups(pt12):
    model = apply_noise(pt12, NoiseSpec.google(0.37))
    c = count_occurrences(sample(model, 500_000, 7))
    g = quantile_group_stats(c, pt12, 128, model)
    assert len(g["expected"]) == 32
    assert g["expected"].sum() == pytest.approx(500_000, abs=1e-6)
    assert np.all(np.diff(g["expected"]) <= 1e-9)  # descending P groups
    rep = quantile_group_test(c, pt12, 128, R=100, seed=1, model=model)
    assert rep.statistics["frac_within_3sd"] >= 0.9
    one = quantile_group_stats(c, pt12, pt12.M, model)
    assert one["observed_std"][0] == pytest.approx(c.dense().std(ddof=1))


def test_quantile_groups_flag_gamma(pt12):
    model = apply_noise(pt12, NoiseSpec.google(0.37))
    perturbed = gamma_perturb(model, Distribution("uniform", (0, 1)), 3)
    c = count_occurrences(sample(perturbed, 500_000, 8))
    rep = quantile_group_test(c, pt12, 128, R=100, seed=2, model=model)
    assert rep.statistics["frac_above_3sd"] >= 0.9


def test_stationarity_detects_planted_drift(pt12):
    a = sample(pt12, 50_000, 1, NoiseSpec.google(0.5))
    b = sample(pt12, 50_000, 2, NoiseSpec.google(0.2))
    r = stationarity_split_test(concatenate([a, b]), 199, seed=3)
    assert r.p_value < 0.01


def test_stationarity_two_draws_degenerate():
    s = SampleRecord(3, np.array([1, 5]))
    r = stationarity_split_test(s, 20, seed=0)
    assert np.all(r.null["values"] == r.statistics["ordered_l1"])


def test_stationarity_reproducible(pt12):
    s = sample(pt12, 5000, 9, NoiseSpec.google(0.3))
    assert stationarity_split_test(s, 30, 4).p_value == stationarity_split_test(s, 30, 4).p_value


def test_half_predictability_null_and_shared_structure(pt12):
    model = apply_noise(pt12, NoiseSpec.google(0.3))
    s = sample(model, 100_000, 11)
    assert half_predictability(s, model, 50, 1).p_value > 0.01
    # both halves drawn from the same gamma-perturbed law share its deviations from the model
    pert = gamma_perturb(model, Distribution("exponential"), 5)
    s2 = concatenate([sample(pert, 50_000, 12), sample(pert, 50_000, 13)])
    r = half_predictability(s2, model, 50, 1)
    assert r.statistics["spearman"] > 0.3


def test_bit_drift_constant_bit_and_null(pt12):
    draws = np.zeros(2000, dtype=np.int64)
    r = bit_drift(SampleRecord(4, draws), 100)
    assert np.all(r.statistics["slope"] == 0) and r.p_value == 1.0
    with pytest.raises(ValueError):
        bit_drift(SampleRecord(4, draws[:50]), 100)
    s = sample(pt12, 500_000, 3, NoiseSpec.google(0.37))
    r = bit_drift(s)
    assert np.mean(np.abs(r.statistics["t"]) < 3) >= 0.9


def test_bit_drift_detects_planted(pt12):
    N = 500_000
    s = sample(pt12, N, 4, NoiseSpec.google(0.37))
    rng = np.random.default_rng(0)
    rate = 0.49 + 0.02 * np.arange(N) / N
    bit = (rng.random(N) < rate).astype(np.int64)
    draws = (s.draws & ~np.int64(1 << 5)) | (bit << 5)
    r = bit_drift(SampleRecord(12, draws))
    assert r.statistics["p"][5] < 0.001
    assert r.p_value < 0.001


def test_deviation_asymmetry_null_and_planted(pt12):
    model = apply_noise(pt12, NoiseSpec.google(0.37))
    c = count_occurrences(sample(model, 500_000, 21))
    r = deviation_asymmetry(c, model, R=199, seed=1)
    assert abs(r.statistics["skewness"] - r.null["mean"]) < 3 * r.null["sd"]
    pert = gamma_perturb(model, Distribution("exponential"), 2)
    r2 = deviation_asymmetry(count_occurrences(sample(pert, 500_000, 22)), model, R=199, seed=1)
    assert r2.statistics["skewness"] > 0 and r2.p_value <= 0.005


def test_deviation_asymmetry_zero_deviation():
    t = ProbabilityTable.uniform(2)
    c = OccurrenceCounts(2, np.array([0, 1, 2, 3]))
    r = deviation_asymmetry(c, t, R=19, seed=0)
    assert r.statistics["skewness"] == 0.0
