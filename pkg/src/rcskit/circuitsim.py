"""Statevector simulation of layered random circuits.

A circuit of depth ``m`` alternates ``m`` cycles of (1-gate layer, 2-gate
layer) and ends with a final 1-gate layer, so it holds ``n * (m + 1)``
1-gates.  Depth 0 is the empty circuit.

Two-gate convention (fSim family): identity on ``|00>``, a rotation by
``theta`` of the ``{|01>, |10>}`` subspace, and a phase ``exp(-i phi)`` on
``|11>``.  Uncalibrated gates sit at ``theta = pi/2, phi = pi/6`` with no
Z-rotations; calibration adds offsets to these and a Z-rotation pair before
and after the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._kernels import apply_1q, apply_2q, apply_op
from .bitspace import DENSE_MAX_QUBITS, ProbabilityTable, SampleRecord, derive_seed

NOMINAL_THETA = math.pi / 2
NOMINAL_PHI = math.pi / 6

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (_I2, _X, _Y, _Z)


def _half_turn(axis: np.ndarray) -> np.ndarray:
    return (_I2 - 1j * axis) / math.sqrt(2)


ONE_GATES = {
    "sqrt_x": _half_turn(_X),
    "sqrt_y": _half_turn(_Y),
    "sqrt_w": _half_turn((_X + _Y) / math.sqrt(2)),
}


def fsim(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1, 0, 0, 0],
                     [0, c, -1j * s, 0],
                     [0, -1j * s, c, 0],
                     [0, 0, 0, np.exp(-1j * phi)]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


@dataclass(frozen=True)
class TwoGateParams:
    theta: float = NOMINAL_THETA
    phi: float = NOMINAL_PHI
    z_pre: tuple[float, float] = (0.0, 0.0)
    z_post: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        vals = (self.theta, self.phi, *self.z_pre, *self.z_post)
        if len(self.z_pre) != 2 or len(self.z_post) != 2 or not all(map(math.isfinite, vals)):
            raise ValueError(f"invalid two-gate parameters: {self}")

    def unitary(self) -> np.ndarray:
        pre = np.kron(rz(self.z_pre[0]), rz(self.z_pre[1]))
        post = np.kron(rz(self.z_post[0]), rz(self.z_post[1]))
        return post @ fsim(self.theta, self.phi) @ pre

    @property
    def is_nominal(self) -> bool:
        return self == TwoGateParams()

    def to_dict(self) -> dict:
        return {"theta": self.theta, "phi": self.phi,
                "z_pre": list(self.z_pre), "z_post": list(self.z_post)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TwoGateParams":
        return cls(float(d.get("theta", NOMINAL_THETA)), float(d.get("phi", NOMINAL_PHI)),
                   tuple(map(float, d.get("z_pre", (0.0, 0.0)))),
                   tuple(map(float, d.get("z_post", (0.0, 0.0)))))


@dataclass(frozen=True)
class GateErrorSpec:
    """Per-gate and per-qubit error probabilities for trajectory simulation.

    ``depolarizing`` replaces the gate output by a uniformly drawn Pauli
    (identity included, so a quarter of 1-gate error events are harmless);
    ``uniform-Pauli`` draws only non-identity Paulis.
    """

    e1: float = 0.0016
    e2: float = 0.0062
    eq: float = 0.038
    error_channel: str = "depolarizing"

    def __post_init__(self):
        for name in ("e1", "e2", "eq"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if self.error_channel not in ("depolarizing", "uniform-Pauli"):
            raise ValueError(f"unknown error channel {self.error_channel!r}")


# -- coupler patterns -------------------------------------------------------

def grid_qubit(r: int, c: int, cols: int) -> int:
    return r * cols + c


def grid_patterns(rows: int, cols: int) -> dict[str, tuple[tuple[int, int], ...]]:
    """Eight coupler sets A-H on a ``rows x cols`` rectangular grid.

    E/F are horizontal couplers starting on even/odd columns and G/H vertical
    couplers starting on even/odd rows; A-D stagger the same directions by
    the parity of ``row + col``.  Each set is a matching, and both {A,B,C,D}
    and {E,F,G,H} cover every coupler.  This is a rectangular-grid stand-in
    for the Sycamore layout, not its actual geometry.
    """
    horiz = [(r, c) for r in range(rows) for c in range(cols - 1)]
    vert = [(r, c) for r in range(rows - 1) for c in range(cols)]

    def h(sel):
        return tuple((grid_qubit(r, c, cols), grid_qubit(r, c + 1, cols)) for r, c in horiz if sel(r, c))

    def v(sel):
        return tuple((grid_qubit(r, c, cols), grid_qubit(r + 1, c, cols)) for r, c in vert if sel(r, c))

    return {
        "A": h(lambda r, c: (r + c) % 2 == 0),
        "B": h(lambda r, c: (r + c) % 2 == 1),
        "C": v(lambda r, c: (r + c) % 2 == 0),
        "D": v(lambda r, c: (r + c) % 2 == 1),
        "E": h(lambda r, c: c % 2 == 0),
        "F": h(lambda r, c: c % 2 == 1),
        "G": v(lambda r, c: r % 2 == 0),
        "H": v(lambda r, c: r % 2 == 1),
    }


def grid_shape(n: int) -> tuple[int, int]:
    """Most square ``rows x cols`` factorisation of ``n`` with rows <= cols."""
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def _haar_su2(rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True)
class CircuitSpec:
    """Layered random circuit description.

    ``pattern`` is a sequence of coupler sets cycled over the depth.  The
    1-gates are drawn per qubit from ``seed``; with the default gate set
    ``sqrt_xyw`` a qubit never repeats its previous gate.  ``variant`` is
    ``full``, ``patch`` (drop couplers crossing ``partition``) or ``elided``
    (drop the couplers listed in ``elided``).
    """

    n: int
    depth: int
    pattern: tuple
    pattern_label: str = "custom"
    seed: int = 0
    gate_set: str = "sqrt_xyw"
    variant: str = "full"
    partition: tuple | None = None
    elided: frozenset = frozenset()
    one_gates: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        pattern = tuple(tuple(tuple(sorted(map(int, p))) for p in layer) for layer in self.pattern)
        if self.depth and not pattern:
            raise ValueError("a circuit with layers needs a non-empty pattern")
        for i, layer in enumerate(pattern):
            used = [q for p in layer for q in p]
            if len(used) != len(set(used)):
                raise ValueError(f"pattern layer {i} has overlapping couplers")
            if any(q < 0 or q >= self.n for q in used) or any(a == b for a, b in layer):
                raise ValueError(f"pattern layer {i} references invalid qubits")
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "elided", frozenset(tuple(sorted(p)) for p in self.elided))
        if self.gate_set not in ("sqrt_xyw", "haar"):
            raise ValueError(f"unknown gate set {self.gate_set!r}")
        if self.variant not in ("full", "patch", "elided"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "patch":
            if self.partition is None:
                raise ValueError("patch variant needs a partition")
            a, b = (tuple(sorted(map(int, blk))) for blk in self.partition)
            if sorted(a + b) != list(range(self.n)) or not a or not b:
                raise ValueError("partition must split all qubits into two non-empty blocks")
            object.__setattr__(self, "partition", (a, b))
        if self.one_gates is not None:
            g = np.asarray(self.one_gates, dtype=complex)
            if g.shape != (self.n_one_gate_layers, self.n, 2, 2):
                raise ValueError(f"one_gates has shape {g.shape}")
            object.__setattr__(self, "one_gates", g)

    @classmethod
    def grid(cls, rows: int, cols: int, depth: int, pattern: str = "EFGH", seed: int = 0,
             **kw) -> "CircuitSpec":
        sets = grid_patterns(rows, cols)
        return cls(rows * cols, depth, tuple(sets[ch] for ch in pattern), pattern_label=pattern,
                   seed=seed, **kw)

    @property
    def n_one_gate_layers(self) -> int:
        return self.depth + 1 if self.depth else 0

    def _dropped(self, pair) -> bool:
        if self.variant == "patch":
            a = set(self.partition[0])
            return (pair[0] in a) != (pair[1] in a)
        if self.variant == "elided":
            return pair in self.elided
        return False

    def layers(self) -> list[tuple]:
        """Coupler set of each cycle after variant removal."""
        out = []
        for c in range(self.depth):
            out.append(tuple(p for p in self.pattern[c % len(self.pattern)] if not self._dropped(p)))
        return out

    def occurrences(self) -> list[tuple[int, int, int]]:
        """All 2-gate occurrences in circuit order as ``(cycle, a, b)``."""
        return [(c, a, b) for c, layer in enumerate(self.layers()) for a, b in layer]

    @property
    def gate_counts(self) -> tuple[int, int]:
        return self.n * self.n_one_gate_layers, len(self.occurrences())

    def one_gate_layers(self) -> np.ndarray:
        """1-gate matrices, shape ``(layers, n, 2, 2)``."""
        if self.one_gates is not None:
            return self.one_gates
        L = self.n_one_gate_layers
        out = np.empty((L, self.n, 2, 2), dtype=complex)
        names = list(ONE_GATES)
        for q in range(self.n):
            rng = np.random.default_rng(derive_seed(self.seed, "one-gate", q))
            prev = -1
            for layer in range(L):
                if self.gate_set == "haar":
                    out[layer, q] = _haar_su2(rng)
                    continue
                choices = [i for i in range(len(names)) if i != prev]
                prev = choices[rng.integers(len(choices))]
                out[layer, q] = ONE_GATES[names[prev]]
        return out

    def restrict(self, qubits: Sequence[int]) -> "CircuitSpec":
        """Sub-circuit on ``qubits`` (relabelled 0..k-1) with the same 1-gates.

        Couplers with an endpoint outside ``qubits`` are dropped, so for a
        patch block this is exactly the block's own circuit.
        """
        qubits = list(qubits)
        relabel = {q: i for i, q in enumerate(qubits)}
        pattern = []
        for c in range(self.depth):
            pattern.append(tuple((relabel[a], relabel[b]) for a, b in self.layers()[c]
                                 if a in relabel and b in relabel))
        gates = self.one_gate_layers()[:, qubits] if self.depth else None
        return CircuitSpec(len(qubits), self.depth, tuple(pattern) or ((),), f"{self.pattern_label}|restricted",
                           self.seed, self.gate_set, one_gates=gates)

    def to_dict(self) -> dict:
        d = {"n": self.n, "depth": self.depth, "pattern_label": self.pattern_label,
             "couplers": [[list(p) for p in layer] for layer in self.pattern],
             "seed": self.seed, "gate_set": self.gate_set, "variant": self.variant}
        if self.partition is not None:
            d["partition"] = [list(b) for b in self.partition]
        if self.elided:
            d["elided"] = sorted(list(p) for p in self.elided)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CircuitSpec":
        if "couplers" in d:
            pattern = tuple(tuple(tuple(p) for p in layer) for layer in d["couplers"])
            label = d.get("pattern_label", "custom")
        else:
            rows, cols = d.get("grid") or grid_shape(int(d["n"]))
            sets = grid_patterns(rows, cols)
            label = d.get("pattern", "EFGH")
            pattern = tuple(sets[ch] for ch in label)
        return cls(int(d["n"]), int(d["depth"]), pattern, label, int(d.get("seed", 0)),
                   d.get("gate_set", "sqrt_xyw"), d.get("variant", "full"),
                   tuple(map(tuple, d["partition"])) if d.get("partition") else None,
                   frozenset(tuple(p) for p in d.get("elided", ())))


# -- parameters and calibration ---------------------------------------------

def nominal_params(circuit: CircuitSpec) -> list[TwoGateParams]:
    return [TwoGateParams()] * len(circuit.occurrences())


def resolve_params(circuit: CircuitSpec, params) -> list[TwoGateParams]:
    """Normalise ``None`` / sequence / ``{k: params}`` into one entry per occurrence."""
    k = len(circuit.occurrences())
    if params is None:
        return nominal_params(circuit)
    if isinstance(params, Mapping):
        out = nominal_params(circuit)
        for idx, p in params.items():
            idx = int(idx)
            if not 0 <= idx < k:
                raise ValueError(f"occurrence {idx} out of range [0, {k})")
            out[idx] = p if isinstance(p, TwoGateParams) else TwoGateParams.from_dict(p)
        return out
    params = list(params)
    if len(params) != k:
        raise ValueError(f"expected {k} two-gate parameter sets, got {len(params)}")
    return params


def remove_calibration(params: Sequence[TwoGateParams], target="all",
                       components: str = "all") -> list[TwoGateParams]:
    """Reset calibrated occurrences to the nominal gate.

    ``target`` is ``"all"``, an occurrence index, an iterable of indices, or
    ``"two_gate_only"`` (all occurrences, keep Z-rotations).  ``components``
    selects what is reset: ``all``, ``two_gate`` (theta/phi) or ``z``.
    """
    params = list(params)
    if target == "two_gate_only":
        target, components = "all", "two_gate"
    if target == "all":
        idx = range(len(params))
    elif isinstance(target, (int, np.integer)):
        idx = [int(target)]
    else:
        idx = [int(i) for i in target]
    for i in idx:
        if not 0 <= i < len(params):
            raise ValueError(f"occurrence {i} out of range [0, {len(params)})")
    if components not in ("all", "two_gate", "z"):
        raise ValueError(f"unknown components {components!r}")
    nominal = TwoGateParams()
    for i in idx:
        p = params[i]
        if components == "all":
            params[i] = nominal
        elif components == "two_gate":
            params[i] = replace(p, theta=nominal.theta, phi=nominal.phi)
        else:
            params[i] = replace(p, z_pre=(0.0, 0.0), z_post=(0.0, 0.0))
    return params


def random_calibration(circuit: CircuitSpec, scale: float, seed: int, z_scale: float = 0.0,
                       occurrences: Iterable[int] | None = None) -> list[TwoGateParams]:
    """Nominal parameters with uniform offsets in ``[-scale, scale]`` on theta and phi.

    Stands in for a calibrated circuit whose adjustments are known exactly.
    """
    rng = np.random.default_rng(seed)
    params = nominal_params(circuit)
    idx = range(len(params)) if occurrences is None else list(occurrences)
    for i in idx:
        dt, dp = rng.uniform(-scale, scale, 2)
        zs = rng.uniform(-z_scale, z_scale, 4) if z_scale else np.zeros(4)
        params[i] = TwoGateParams(NOMINAL_THETA + dt, NOMINAL_PHI + dp, (zs[0], zs[1]), (zs[2], zs[3]))
    return params


# -- simulation ---------------------------------------------------------------

@dataclass(frozen=True)
class _Op:
    qubits: tuple
    matrix: np.ndarray
    two: bool


def compile_ops(circuit: CircuitSpec, params=None) -> list[_Op]:
    params = resolve_params(circuit, params)
    gates = circuit.one_gate_layers()
    ops = []
    k = 0
    layers = circuit.layers()
    for c in range(circuit.n_one_gate_layers):
        for q in range(circuit.n):
            ops.append(_Op((q,), np.ascontiguousarray(gates[c, q]), False))
        if c < circuit.depth:
            for a, b in layers[c]:
                ops.append(_Op((a, b), np.ascontiguousarray(params[k].unitary()), True))
                k += 1
    return ops


def _check_sim_size(n: int) -> None:
    if n > DENSE_MAX_QUBITS:
        raise ValueError(f"statevector simulation is capped at n <= {DENSE_MAX_QUBITS}, got n={n}")


def simulate_state(circuit: CircuitSpec, params=None) -> np.ndarray:
    _check_sim_size(circuit.n)
    state = np.zeros((1, 1 << circuit.n), dtype=complex)
    state[0, 0] = 1.0
    for op in compile_ops(circuit, params):
        apply_op(state, op.qubits, op.matrix)
    return state[0]


def simulate_ideal(circuit: CircuitSpec, params=None) -> ProbabilityTable:
    """Output distribution ``|amplitude|**2`` of the noiseless circuit."""
    amp = simulate_state(circuit, params)
    return ProbabilityTable(circuit.n, (amp.real ** 2 + amp.imag ** 2))


def _apply_pauli(states: np.ndarray, qubits: tuple, code: int) -> None:
    if len(qubits) == 1:
        apply_1q(states, qubits[0], PAULIS[code])
        return
    pa, pb = divmod(code, 4)
    if pa:
        apply_1q(states, qubits[0], PAULIS[pa])
    if pb:
        apply_1q(states, qubits[1], PAULIS[pb])


def _configured_states(ops: list[_Op], n: int, configs: list[tuple], batch: int):
    """Yield ``(config indices, final states)`` for non-empty error configurations.

    Rows are ordered by their first error so that every row shares the ideal
    prefix up to that point and only "active" rows pay for gate applications.
    """
    M = 1 << n
    order = sorted(range(len(configs)), key=lambda i: configs[i][0][0])
    for start in range(0, len(order), batch):
        chunk = order[start:start + batch]
        first = [configs[i][0][0] for i in chunk]
        errs: dict[int, list] = {}
        for row, i in enumerate(chunk):
            for g, code in configs[i]:
                errs.setdefault(g, []).append((row, code))
        states = np.empty((len(chunk), M), dtype=complex)
        ideal = np.zeros((1, M), dtype=complex)
        ideal[0, 0] = 1.0
        active = 0
        for g, op in enumerate(ops):
            if active:
                apply_op(states[:active], op.qubits, op.matrix)
            if active < len(chunk):
                apply_op(ideal, op.qubits, op.matrix)
            while active < len(chunk) and first[active] == g:
                states[active] = ideal[0]
                active += 1
            for row, code in errs.get(g, ()):
                _apply_pauli(states[row:row + 1], op.qubits, code)
        yield chunk, states


def _draw(probs: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    x = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(x, probs.size - 1)


def simulate_noisy_trajectories(circuit: CircuitSpec, params, errors: GateErrorSpec, N: int,
                                seed: int, batch: int = 128) -> tuple[SampleRecord, float]:
    """Sample ``N`` bitstrings from independent noisy trajectories.

    Every gate fails independently with its error probability (``e1`` or
    ``e2``), in which case a Pauli drawn per ``errors.error_channel`` is
    applied after it; each readout bit flips with probability ``eq``.  One
    bitstring is drawn per trajectory.  Returns the sample and the fraction
    of trajectories without any error event (gate or readout).

    Trajectories with identical error configurations share one simulation.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if not isinstance(errors, GateErrorSpec):
        raise TypeError("errors must be a GateErrorSpec")
    _check_sim_size(circuit.n)
    n = circuit.n
    ops = compile_ops(circuit, params)
    rates = np.array([errors.e2 if op.two else errors.e1 for op in ops])
    two = np.array([op.two for op in ops])
    ss = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF)
    rng_gate, rng_ro, rng_draw = (np.random.default_rng(s) for s in ss.spawn(3))
    lo = 0 if errors.error_channel == "depolarizing" else 1

    gate_event = np.zeros(N, dtype=bool)
    groups: dict[tuple, list[int]] = {}
    chunk = 4096
    for t0 in range(0, N, chunk):
        t1 = min(N, t0 + chunk)
        hits = rng_gate.random((t1 - t0, len(ops))) < rates
        rows, cols = np.nonzero(hits)
        codes = np.where(two[cols], rng_gate.integers(lo, 16, cols.size), rng_gate.integers(lo, 4, cols.size))
        gate_event[t0:t1] = hits.any(axis=1)
        bounds = np.searchsorted(rows, np.arange(t1 - t0 + 1))
        for t in range(t1 - t0):
            a, b = bounds[t], bounds[t + 1]
            key = tuple((int(g), int(c)) for g, c in zip(cols[a:b], codes[a:b]) if c)
            groups.setdefault(key, []).append(t0 + t)

    flips = rng_ro.random((N, n)) < errors.eq
    flip_mask = (flips * (1 << np.arange(n))).sum(axis=1).astype(np.int64)
    no_error = ~gate_event & ~flips.any(axis=1)

    draws = np.empty(N, dtype=np.int64)
    clean = groups.pop((), [])
    if clean:
        amp = simulate_state(circuit, params)
        draws[clean] = _draw(amp.real ** 2 + amp.imag ** 2, len(clean), rng_draw)
    keys = list(groups)
    for idx, states in _configured_states(ops, n, keys, batch):
        for row, i in enumerate(idx):
            members = groups[keys[i]]
            amp = states[row]
            draws[members] = _draw(amp.real ** 2 + amp.imag ** 2, len(members), rng_draw)
    draws ^= flip_mask

    p_no_err = float(no_error.mean())
    meta = {"source": "noisy-trajectories", "seed": seed, "p_no_err": p_no_err,
            "noise": {"e1": errors.e1, "e2": errors.e2, "eq": errors.eq,
                      "channel": errors.error_channel},
            "distinct_error_configs": len(keys)}
    return SampleRecord(n, draws, meta), p_no_err


def calibration_drop(circuit: CircuitSpec, calibrated, removed, N: int, seed: int) -> tuple[float, float]:
    """Fidelity ratio when a perfectly calibrated circuit is scored without its calibration.

    Samples ``N`` bitstrings from the calibrated circuit and returns the
    ratio of the XEB against the ``removed`` parameters to the XEB against
    the calibrated ones, with its delta-method standard error.
    """
    p_cal = simulate_ideal(circuit, calibrated).probs
    p_rem = simulate_ideal(circuit, removed).probs
    rng = np.random.default_rng(seed)
    x = _draw(p_cal, N, rng)
    M = p_cal.size
    u, v = M * p_cal[x], M * p_rem[x]
    d, e = u.mean() - 1.0, v.mean() - 1.0
    r = e / d
    cov = np.cov(u, v)
    var = (cov[1, 1] - 2 * r * cov[0, 1] + r * r * cov[0, 0]) / (N * d * d)
    return float(r), float(math.sqrt(max(var, 0.0)))


def calibration_drop_ensemble(circuit: CircuitSpec, calibrated: Mapping[int, TwoGateParams], target,
                              K: int, N: int, seed: int) -> tuple[float, float, np.ndarray]:
    """Mean calibration drop over ``K`` circuits that differ only in their 1-gates.

    ``calibrated`` maps occurrence indices to their calibrated parameters
    (all others nominal); ``target`` is passed to :func:`remove_calibration`.
    Each realisation draws ``N`` samples.  Returns the mean ratio, its
    standard error across realisations and the individual ratios.
    """
    if K < 2:
        raise ValueError("need at least two realisations for a standard error")
    ratios = np.empty(K)
    for r in range(K):
        circ = replace(circuit, seed=derive_seed(seed, "circuit", r), one_gates=None)
        cal = resolve_params(circ, dict(calibrated))
        ratios[r] = calibration_drop(circ, cal, remove_calibration(cal, target), N,
                                     derive_seed(seed, "samples", r))[0]
    return float(ratios.mean()), float(ratios.std(ddof=1) / math.sqrt(K)), ratios
