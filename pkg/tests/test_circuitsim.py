import math

import numpy as np
import pytest
from scipy import stats

from rcskit.circuitsim import (CircuitSpec, GateErrorSpec, TwoGateParams, calibration_drop_ensemble, fsim,
                               grid_patterns, nominal_params, random_calibration, remove_calibration, rz,
                               simulate_ideal, simulate_noisy_trajectories, simulate_state)
from rcskit.estimators import calibration_effect, xeb


def _dense_unitary(circ, params=None):
    """Reference: build the full circuit unitary with Kronecker products."""
    from rcskit.circuitsim import compile_ops
    n = circ.n
    U = np.eye(1 << n, dtype=complex)
    for op in compile_ops(circ, params):
        U = _embed(op.matrix, op.qubits, n) @ U
    return U


def _embed(m, qubits, n):
    M = 1 << n
    out = np.zeros((M, M), dtype=complex)
    k = len(qubits)
    for col in range(M):
        loc = 0
        for q in qubits:
            loc = 2 * loc + ((col >> q) & 1)
        for new in range(1 << k):
            row = col
            for j, q in enumerate(qubits):
                bit = (new >> (k - 1 - j)) & 1
                row = (row & ~(1 << q)) | (bit << q)
            out[row, col] += m[new, loc]
    return out


def test_fsim_structure():
    U = fsim(0.3, 0.7)
    assert np.allclose(U.conj().T @ U, np.eye(4))
    assert U[0, 0] == 1
    assert U[3, 3] == pytest.approx(np.exp(-0.7j))
    assert np.allclose(fsim(0, 0), np.eye(4))


def test_params_unitary_with_z_rotations():
    p = TwoGateParams(1.0, 0.5, (0.1, 0.2), (0.3, 0.4))
    expect = np.kron(rz(0.3), rz(0.4)) @ fsim(1.0, 0.5) @ np.kron(rz(0.1), rz(0.2))
    assert np.allclose(p.unitary(), expect)
    with pytest.raises(ValueError):
        TwoGateParams(float("nan"))


def test_state_matches_dense_reference():
    circ = CircuitSpec.grid(2, 2, 3, "EFGH", seed=4)
    params = random_calibration(circ, 0.5, 1, z_scale=0.3)
    U = _dense_unitary(circ, params)
    assert np.allclose(simulate_state(circ, params), U[:, 0], atol=1e-12)


def test_patterns_are_matchings_and_cover_grid():
    pats = grid_patterns(3, 4)
    all_edges = {p for k in "ABCD" for p in pats[k]}
    assert all_edges == {p for k in "EFGH" for p in pats[k]}
    assert len(all_edges) == 3 * 3 + 2 * 4
    for layer in pats.values():
        used = [q for p in layer for q in p]
        assert len(used) == len(set(used))


def test_gate_counts_for_12_qubit_efgh():
    circ = CircuitSpec.grid(3, 4, 14, "EFGH")
    assert circ.gate_counts == (180, 60)


def test_overlapping_couplers_rejected():
    with pytest.raises(ValueError):
        CircuitSpec(3, 1, (((0, 1), (1, 2)),))
    with pytest.raises(ValueError):
        CircuitSpec(2, 1, (((0, 5),),))


def test_zero_layer_circuit_is_identity():
    circ = CircuitSpec(4, 0, ())
    t = simulate_ideal(circ)
    assert t.probs[0] == 1.0


def test_one_gates_never_repeat():
    circ = CircuitSpec.grid(2, 3, 20, seed=2)
    g = circ.one_gate_layers()
    for q in range(circ.n):
        for a, b in zip(g[:-1, q], g[1:, q]):
            assert not np.allclose(a, b)


def test_patch_factorizes():
    circ = CircuitSpec.grid(2, 4, 10, "EFGH", seed=3, variant="patch", partition=((0, 1, 4, 5), (2, 3, 6, 7)))
    full = simulate_ideal(circ).probs
    pa = simulate_ideal(circ.restrict([0, 1, 4, 5])).probs
    pb = simulate_ideal(circ.restrict([2, 3, 6, 7])).probs
    x = np.arange(256)
    ia = ((x >> 0) & 1) | ((x >> 1) & 1) << 1 | ((x >> 4) & 1) << 2 | ((x >> 5) & 1) << 3
    ib = ((x >> 2) & 1) | ((x >> 3) & 1) << 1 | ((x >> 6) & 1) << 2 | ((x >> 7) & 1) << 3
    assert np.allclose(full, pa[ia] * pb[ib], atol=1e-12)


def test_elided_removes_listed_couplers():
    base = CircuitSpec.grid(2, 3, 4, "EFGH")
    gone = base.layers()[0][0]
    el = CircuitSpec.grid(2, 3, 4, "EFGH", variant="elided", elided=frozenset([gone]))
    assert all(gone not in layer for layer in el.layers())
    assert len(el.occurrences()) < len(base.occurrences())


def test_zero_angle_gates_act_as_identity():
    circ = CircuitSpec.grid(2, 3, 6, seed=5)
    params = [TwoGateParams(0.0, 0.0)] * len(circ.occurrences())
    no2 = CircuitSpec(circ.n, circ.depth, tuple(() for _ in circ.pattern), seed=5)
    assert np.allclose(simulate_state(circ, params), simulate_state(no2), atol=1e-12)


def test_deep_circuit_is_porter_thomas():
    t = simulate_ideal(CircuitSpec.grid(3, 4, 14, "EFGH", seed=1))
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert stats.kstest(t.M * t.probs, "expon").pvalue > 0.001


def test_remove_calibration_modes():
    circ = CircuitSpec.grid(2, 3, 4)
    cal = random_calibration(circ, 0.3, 7, z_scale=0.2)
    assert remove_calibration(cal, "all") == nominal_params(circ)
    one = remove_calibration(cal, 2)
    assert one[2] == TwoGateParams() and one[3] == cal[3]
    two = remove_calibration(cal, "two_gate_only")
    assert all(p.theta == math.pi / 2 and p.z_pre == q.z_pre for p, q in zip(two, cal))
    z = remove_calibration(cal, [0, 1], components="z")
    assert z[0].z_pre == (0.0, 0.0) and z[0].theta == cal[0].theta
    with pytest.raises(ValueError):
        remove_calibration(cal, len(cal))
    nominal = nominal_params(circ)
    assert np.array_equal(simulate_ideal(circ, remove_calibration(nominal)).probs, simulate_ideal(circ).probs)


def test_noiseless_trajectories_follow_ideal_table():
    circ = CircuitSpec.grid(2, 3, 6, seed=8)
    smp, p = simulate_noisy_trajectories(circ, None, GateErrorSpec(0, 0, 0), 20000, 1)
    assert p == 1.0
    table = simulate_ideal(circ)
    obs = np.bincount(smp.draws, minlength=64)
    assert stats.chisquare(obs, 20000 * table.probs).pvalue > 0.001


def test_p_no_err_closed_form():
    circ = CircuitSpec.grid(3, 4, 14, seed=1)
    N = 20000
    _, p = simulate_noisy_trajectories(circ, None, GateErrorSpec(0, 0.01, 0), N, 3)
    expect = 0.99 ** 60
    assert abs(p - expect) < 3 * math.sqrt(expect * (1 - expect) / N)


def test_single_error_trajectory_matches_direct_pauli():
    # one 2-gate always fails with a non-identity Pauli; e2 = 1 on a 1-coupler circuit
    circ = CircuitSpec(2, 1, (((0, 1),),), seed=0)
    smp, p = simulate_noisy_trajectories(circ, None, GateErrorSpec(0, 1.0, 0, "uniform-Pauli"), 3000, 2)
    assert p == 0.0
    assert smp.metadata["distinct_error_configs"] <= 15


def test_p_no_err_monotone_in_error_rate():
    circ = CircuitSpec.grid(2, 3, 6, seed=2)
    ps = [simulate_noisy_trajectories(circ, None, GateErrorSpec(0.001, e2, 0.01), 4000, s)[1]
          for e2 in (0.0, 0.02, 0.05) for s in range(3)]
    means = [np.mean(ps[i:i + 3]) for i in (0, 3, 6)]
    assert means[0] > means[1] > means[2]


def test_trajectory_sampling_is_reproducible():
    circ = CircuitSpec.grid(2, 3, 4, seed=2)
    a, _ = simulate_noisy_trajectories(circ, None, GateErrorSpec(), 500, 11)
    b, _ = simulate_noisy_trajectories(circ, None, GateErrorSpec(), 500, 11)
    assert np.array_equal(a.draws, b.draws)


def test_bad_error_spec():
    with pytest.raises(ValueError):
        GateErrorSpec(e1=1.5)
    with pytest.raises(ValueError):
        GateErrorSpec(error_channel="amplitude")


def test_calibration_drop_follows_process_fidelity():
    # deep circuits entangle the gate's qubits with the rest, so the drop is |Tr V|^2 / 16
    circ = CircuitSpec.grid(3, 4, 14, seed=0)
    g = len(circ.occurrences()) // 2
    p = TwoGateParams(math.pi / 2 + 0.3, math.pi / 6 + 0.3)
    mean, se, _ = calibration_drop_ensemble(circ, {g: p}, g, 30, 20000, 5)
    V = fsim(math.pi / 2, math.pi / 6).conj().T @ p.unitary()
    process = abs(np.trace(V)) ** 2 / 16
    assert abs(mean - process) < 3 * se
    assert (1 - process) == pytest.approx(1.25 * (1 - calibration_effect(p.theta, p.phi)))


def test_xeb_of_ideal_samples_near_one():
    circ = CircuitSpec.grid(3, 4, 14, seed=6)
    t = simulate_ideal(circ)
    smp, _ = simulate_noisy_trajectories(circ, None, GateErrorSpec(0, 0, 0), 20000, 1)
    r = xeb(smp, t)
    target = t.M * float(np.sum(t.probs ** 2)) - 1
    assert abs(r.value - target) < 3 * r.stderr


def test_circuit_dict_round_trip():
    circ = CircuitSpec.grid(2, 3, 5, "ABCD", seed=9, variant="patch", partition=((0, 1, 3, 4), (2, 5)))
    back = CircuitSpec.from_dict(circ.to_dict())
    assert back == circ
    assert np.array_equal(simulate_ideal(back).probs, simulate_ideal(circ).probs)
