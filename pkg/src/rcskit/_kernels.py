"""In-place gate kernels over a batch of state vectors, shape ``(k, 2**n)``."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def apply_1q(states, q, u):
    k, M = states.shape
    step = 1 << q
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for r in range(k):
        s = states[r]
        for base in range(0, M, 2 * step):
            for i in range(base, base + step):
                a0 = s[i]
                a1 = s[i + step]
                s[i] = u00 * a0 + u01 * a1
                s[i + step] = u10 * a0 + u11 * a1


@nb.njit(cache=True)
def apply_2q(states, a, b, U):
    # local basis index is 2 * bit_a + bit_b
    k, M = states.shape
    ma = 1 << a
    mb = 1 << b
    for r in range(k):
        s = states[r]
        for i in range(M):
            if i & ma or i & mb:
                continue
            i01 = i | mb
            i10 = i | ma
            i11 = i | ma | mb
            x0 = s[i]
            x1 = s[i01]
            x2 = s[i10]
            x3 = s[i11]
            s[i] = U[0, 0] * x0 + U[0, 1] * x1 + U[0, 2] * x2 + U[0, 3] * x3
            s[i01] = U[1, 0] * x0 + U[1, 1] * x1 + U[1, 2] * x2 + U[1, 3] * x3
            s[i10] = U[2, 0] * x0 + U[2, 1] * x1 + U[2, 2] * x2 + U[2, 3] * x3
            s[i11] = U[3, 0] * x0 + U[3, 1] * x1 + U[3, 2] * x2 + U[3, 3] * x3


def apply_op(states: np.ndarray, qubits: tuple, matrix: np.ndarray) -> None:
    if len(qubits) == 1:
        apply_1q(states, qubits[0], matrix)
    else:
        apply_2q(states, qubits[0], qubits[1], matrix)
