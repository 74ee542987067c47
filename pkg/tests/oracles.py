"""Independent brute-force reference implementations used by the tests.

Nothing here imports the filter or metric code under test; each oracle is the
most literal loop or generic solver that computes the same quantity.
"""

import itertools
import math

import numpy as np
from scipy import optimize


def qp_preliminary_row(a: np.ndarray) -> np.ndarray:
    """Minimum-norm equal-modulus row ``b`` with ``|b a| = 1`` for one column ``a``.

    With common modulus ``rho`` the norm is ``M rho^2`` and the gain constraint
    gives ``rho = 1 / |sum_j e^{i psi_j} a_j|``, so the problem reduces to
    maximizing that magnitude over the phases ``psi``. Coarse grid search over
    the free phases, then Nelder-Mead polish. The global phase is fixed by
    making ``b a`` real and positive.
    """
    M = a.size

    def neg_gain(psi_free):
        psi = np.concatenate([[0.0], psi_free])
        return -abs(np.sum(np.exp(1j * psi) * a))

    grid = np.linspace(-math.pi, math.pi, 73)
    best = min(itertools.product(grid, repeat=M - 1), key=lambda p: neg_gain(np.array(p)))
    res = optimize.minimize(neg_gain, np.array(best), method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    psi = np.concatenate([[0.0], res.x])
    rho = 1.0 / -res.fun
    b = rho * np.exp(1j * psi)
    return b * np.exp(-1j * np.angle(b @ a))


def min_norm_row(a_own, A_null) -> np.ndarray:
    """Minimum-norm ``b`` with ``b a_own = 1`` and ``b A_null = 0`` via least squares."""
    cols = [np.asarray(a_own)[:, None]] + ([np.asarray(A_null)] if np.size(A_null) else [])
    C = np.hstack(cols)
    rhs = np.zeros(C.shape[1], dtype=complex)
    rhs[0] = 1.0
    b, *_ = np.linalg.lstsq(C.T, rhs, rcond=None)
    return b


def null_row(A_null, a_own) -> np.ndarray:
    """Masked-direction row: projection of ``a_own`` away from ``A_null`` (zero if it vanishes)."""
    return min_norm_row(a_own, A_null)


def q_loop(C: np.ndarray, excluded=()) -> float:
    excl = set(excluded)
    best = 0.0
    for i in range(C.shape[0]):
        if i in excl:
            continue
        for j in range(C.shape[1]):
            if j != i and j not in excl:
                best = max(best, abs(C[i, j]))
    return best


def fro_loop(Z) -> float:
    return math.sqrt(sum(abs(z) ** 2 for z in np.ravel(Z)))


def ssfa_loop(B, A) -> float:
    R, M = B.shape
    tot = 0.0
    for i in range(R):
        for k in range(A.shape[1]):
            c = sum(B[i, j] * A[j, k] for j in range(M))
            tot += abs(c - (1.0 if i == k else 0.0)) ** 2
    return math.sqrt(tot)


def _apply(B, v):
    return np.array([sum(B[i, j] * v[j] for j in range(B.shape[1])) for i in range(B.shape[0])])


def nsa_loop(B, N) -> float:
    T = N.shape[1]
    return sum(fro_loop(_apply(B, N[:, t])) for t in range(T)) / T


def esa_loop(B, A, S) -> float:
    T = S.shape[1]
    return sum(fro_loop(_apply(B, _apply(A, S[:, t])) - S[:, t]) for t in range(T)) / T


def ca_loop(B, X, S) -> float:
    T = S.shape[1]
    return sum(fro_loop(_apply(B, X[:, t]) - S[:, t]) for t in range(T)) / T


def energy_loop(B, A, S, N, K):
    R, T = S.shape
    I_sum = N_sum = S_sum = 0.0
    for t in range(T):
        y = _apply(B, _apply(A, S[:, t])) - S[:, t]
        n = _apply(B, N[:, t])
        for i in range(R):
            I_sum += abs(y[i]) ** 2
            N_sum += abs(n[i]) ** 2
            S_sum += abs(S[i, t]) ** 2
    I_bar, N_bar, S_bar = I_sum / (T * R), N_sum / (T * R), S_sum / (T * K)
    db = lambda num, den: 10 * math.log10(num / den)  # noqa: E731
    return I_bar, N_bar, S_bar, db(S_bar, I_bar), db(S_bar, N_bar), db(S_bar, I_bar + N_bar)


def cor_loop(P, true_idx) -> float:
    R, K = len(P), len(true_idx)
    inside = sum(P[i] for i in range(R) if i in set(true_idx))
    outside = sum(P[i] for i in range(R) if i not in set(true_idx))
    return 10 * math.log10((R - K) * inside / (K * outside))


def spectrum_loop(B, X) -> np.ndarray:
    T = X.shape[1]
    out = np.zeros(B.shape[0])
    for t in range(T):
        out += np.abs(_apply(B, X[:, t])) ** 2
    return out / T
