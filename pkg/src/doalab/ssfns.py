"""Spatial signal focusing and noise suppression (SSFNS) DOA estimation.

A spatial filter ``B`` (``R x M``) maps snapshots into the direction domain.
The preliminary filter is the equal-modulus minimum-norm row with unit gain
toward its own direction. Each iteration takes the peak of ``|B X|^2``, adds it
to the masked set and rebuilds every row in the orthogonal complement of the
masked steering vectors. A final filter then gives each masked direction its
own row that nulls only the other masked directions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateDirection, EmptySpectrum, NullspaceRankError
from .manifold import ManifoldMatrix
from .spectrum import SpatialSpectrum

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10
DEGENERATE_NORM = 1e-10
NUMERICAL_FLOOR = 1e-20
STAGES = ("preliminary", "iterated", "final")


@dataclass(frozen=True, eq=False)
class SpatialFilter:
    """Filter matrix plus the bookkeeping needed to check its constraints.

    ``degenerate`` lists rows that were zeroed because their direction fell in
    the span of the masked steering vectors (masked rows themselves excluded).
    """

    B: np.ndarray
    masked_set: tuple[int, ...]
    stage: str
    manifold_fingerprint: str
    degenerate: tuple[int, ...] = ()

    @property
    def R(self) -> int:
        return self.B.shape[0]

    def row_gains(self) -> np.ndarray:
        """Squared row norms, i.e. white-noise power gain of each row."""
        return np.sum(np.abs(self.B) ** 2, axis=1)


@dataclass(frozen=True, eq=False)
class WeightMatrixStats:
    q: float
    q_i: np.ndarray
    excluded: frozenset


@dataclass(frozen=True)
class IterationRecord:
    index: int
    peak: float
    q: float | None = None


@dataclass(frozen=True, eq=False)
class SsfnsResult:
    theta_I: tuple[int, ...]
    final_filter: SpatialFilter
    spectrum: SpatialSpectrum
    estimated_thetas: tuple[int, ...]
    iteration_trace: tuple[IterationRecord, ...]
    stop_reason: str
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = self.spectrum.grid.delta_deg
        ang = lambda i: round(i * d, 10)  # noqa: E731
        return {
            "method": "ssfns",
            "theta_I_deg": [ang(i) for i in self.theta_I],
            "estimated_thetas_deg": [ang(i) for i in self.estimated_thetas],
            "trace": [
                {"i_star_deg": ang(r.index), "peak": r.peak, "q": r.q}
                for r in self.iteration_trace
            ],
            "stop_reason": self.stop_reason,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# filters

def preliminary_filter(manifold: ManifoldMatrix) -> SpatialFilter:
    """Equal-modulus rows ``b_ij = conj(a_ij) / (|a_ij| * sum_j |a_ij|)``."""
    A = manifold.entries
    mag = np.abs(A)
    B = (np.conj(A) / (mag * mag.sum(axis=0, keepdims=True))).T
    return SpatialFilter(np.ascontiguousarray(B), (), "preliminary", manifold.geometry_fingerprint)


def null_basis(Ap: np.ndarray, M: int) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``Ap^H``; identity when ``Ap`` is empty."""
    if Ap.shape[1] == 0:
        return np.eye(M, dtype=complex)
    _, s, vh = np.linalg.svd(Ap.conj().T, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return vh[rank:].conj().T


def _project_rows(A_cols: np.ndarray, Q: np.ndarray):
    """Rows ``a^H Q Q^H / ||a^H Q||^2`` for each column ``a``; degenerate rows zeroed."""
    P = A_cols.conj().T @ Q
    n2 = np.sum(np.abs(P) ** 2, axis=1)
    bad = np.sqrt(n2) < DEGENERATE_NORM
    scale = np.zeros_like(n2)
    scale[~bad] = 1.0 / n2[~bad]
    return (P @ Q.conj().T) * scale[:, None], bad


def _dedupe(indices, R: int) -> tuple[int, ...]:
    out: list[int] = []
    for i in indices:
        i = int(i)
        if not 0 <= i < R:
            raise IndexError(f"grid index {i} outside [0, {R})")
        if i not in out:
            out.append(i)
    return tuple(out)


def _masked(manifold: ManifoldMatrix, masked_set):
    A = manifold.entries
    M, R = A.shape
    mask = _dedupe(masked_set, R)
    if M - len(mask) <= 0:
        raise NullspaceRankError(f"cannot null {len(mask)} directions with M={M} sensors")
    Q = null_basis(A[:, list(mask)], M)
    if Q.shape[1] == 0:
        raise NullspaceRankError("masked steering vectors span the whole sensor space")
    B, bad = _project_rows(A, Q)
    bad[list(mask)] = False
    B[list(mask)] = 0.0
    degenerate = tuple(np.flatnonzero(bad).tolist())
    filt = SpatialFilter(B, mask, "iterated", manifold.geometry_fingerprint, degenerate)
    return filt, Q


def masked_filter(manifold: ManifoldMatrix, masked_set=()) -> SpatialFilter:
    """Minimum-norm filter with unit own-direction gain and nulls on ``masked_set``.

    Rows of masked directions come out as zero vectors. Any other row whose
    steering vector has no component outside the masked span is zeroed too and
    reported through a ``DegenerateDirection`` warning.

    Raises:
        NullspaceRankError: if the mask leaves no null space (``|mask| >= M``).
    """
    filt, _ = _masked(manifold, masked_set)
    if filt.degenerate:
        warnings.warn(f"{len(filt.degenerate)} grid directions are degenerate with the masked set",
                      DegenerateDirection, stacklevel=2)
    return filt


def final_filter(manifold: ManifoldMatrix, theta_I=()) -> SpatialFilter:
    """Rows outside ``theta_I`` null all of ``theta_I``; row ``i`` in ``theta_I`` nulls ``theta_I - {i}``."""
    A = manifold.entries
    M, R = A.shape
    theta = _dedupe(theta_I, R)
    if len(theta) >= M:
        raise NullspaceRankError(f"|theta_I|={len(theta)} must be below M={M}")
    B, bad = _project_rows(A, null_basis(A[:, list(theta)], M))
    for i in theta:
        others = [k for k in theta if k != i]
        row, row_bad = _project_rows(A[:, [i]], null_basis(A[:, others], M))
        B[i] = row[0]
        bad[i] = row_bad[0]
    degenerate = tuple(np.flatnonzero(bad).tolist())
    if degenerate:
        warnings.warn(f"{len(degenerate)} grid directions are degenerate in the final filter",
                      DegenerateDirection, stacklevel=2)
    return SpatialFilter(B, theta, "final", manifold.geometry_fingerprint, degenerate)


def constraint_violation(filt: SpatialFilter, manifold: ManifoldMatrix) -> float:
    """Largest deviation of ``filt`` from the equality constraints of its stage.

    preliminary: ``| |b_i a_i| - 1 |`` and the spread of ``|b_ij|`` within a row.
    iterated: ``|b_i a_i - 1|`` on unmasked rows, ``|b_i a_k|`` for masked ``k``.
    final: ``|b_i a_i - 1|`` on every row, ``|b_i a_k|`` for masked ``k != i``.
    Degenerate rows are skipped.
    """
    A = manifold.entries
    B = filt.B
    R = B.shape[0]
    own = np.einsum("ij,ji->i", B, A)
    keep = np.ones(R, dtype=bool)
    keep[list(filt.degenerate)] = False
    worst = 0.0
    if filt.stage == "preliminary":
        worst = float(np.max(np.abs(np.abs(own[keep]) - 1.0)))
        mod = np.abs(B[keep])
        worst = max(worst, float(np.max(mod.max(axis=1) - mod.min(axis=1))))
        return worst
    mask = list(filt.masked_set)
    unit_rows = keep.copy()
    if filt.stage == "iterated":
        unit_rows[mask] = False
    if unit_rows.any():
        worst = float(np.max(np.abs(own[unit_rows] - 1.0)))
    if mask:
        cross = np.abs(B @ A[:, mask])
        if filt.stage == "final":
            for col, k in enumerate(mask):
                cross[k, col] = 0.0
        worst = max(worst, float(cross[keep].max()))
    return worst


# ---------------------------------------------------------------------------
# spectra and diagnostics

def spectrum(filt: SpatialFilter, X: np.ndarray, grid=None, method: str = "ssfns") -> SpatialSpectrum:
    """Snapshot-averaged power ``mean_t |b_i X_t|^2``."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    Y = filt.B @ X
    power = np.mean(Y.real ** 2 + Y.imag ** 2, axis=1)
    if grid is None:
        from .manifold import GridSpec
        grid = GridSpec(360.0 / filt.R)
    return SpatialSpectrum(power, grid, X.shape[1], method)


def weight_stats(filt: SpatialFilter, manifold: ManifoldMatrix, excluded=(),
                 chunk: int = 256) -> WeightMatrixStats:
    """Worst off-diagonal magnitude of ``C = B A`` over non-excluded rows and columns."""
    A = manifold.entries
    R = A.shape[1]
    excl = frozenset(int(i) for i in excluded)
    col_ok = np.ones(R, dtype=bool)
    col_ok[list(excl)] = False
    q_i = np.zeros(R)
    for start in range(0, R, chunk):
        rows = np.arange(start, min(start + chunk, R))
        C = np.abs(filt.B[rows] @ A)
        C[:, ~col_ok] = 0.0
        C[np.arange(rows.size), rows] = 0.0
        q_i[rows] = C.max(axis=1)
    q_i[~col_ok] = 0.0
    return WeightMatrixStats(float(q_i.max()) if R else 0.0, q_i, excl)


def residual_noise_var(Q: np.ndarray, X: np.ndarray) -> float:
    """Per-dimension noise variance of ``X`` in the subspace spanned by ``Q``'s columns."""
    d = Q.shape[1]
    if d == 0:
        return float("nan")
    Y = Q.conj().T @ X
    return float(np.sum(Y.real ** 2 + Y.imag ** 2)) / (d * X.shape[1])


def detection_ratio(T: int, dof: int, false_alarm: float, R: int) -> float:
    """Critical value of ``(row power / row gain) / noise variance`` under white noise.

    The normalized power of one row is ``s2 * chi2(2T) / 2T`` and the residual
    variance estimate is ``s2 * chi2(2 dof T) / (2 dof T)``, so their ratio is
    ``F(2T, 2 dof T)``; the level is Bonferroni-corrected over the ``R`` cells.
    """
    return float(stats.f.isf(false_alarm / R, 2 * T, 2 * dof * T))


# ---------------------------------------------------------------------------
# the iteration

def _argmax_free(power: np.ndarray, masked) -> int:
    p = power.copy()
    if masked:
        p[list(masked)] = -np.inf
    return int(np.argmax(p))


def run_ssfns(manifold: ManifoldMatrix, X: np.ndarray, max_iterations: int | None = None,
              threshold: float | None = None, known_K: int | None = None, *,
              selection: str = "detect", gamma: float = 0.5, false_alarm: float = 1e-3,
              track_q: bool = False) -> SsfnsResult:
    """Estimate source directions from snapshots ``X`` (``M x T``).

    Args:
        manifold: steering matrix over the search grid.
        X: snapshot matrix, one column per snapshot.
        max_iterations: cap ``I`` on masking steps, must be below ``M``.
            Defaults to ``known_K`` if given, else ``min(M - 1, 15)``.
        threshold: stop once the spectrum peak power falls below this value.
            ``None`` selects the automatic rule: iterate up to ``I`` steps, then
            keep the masked set up to the last candidate whose peak passes a
            white-noise F test against the residual outside the masked span.
            ``0`` runs exactly ``I`` steps.
        known_K: number of sources if known; sets ``I = K`` and disables the threshold.
        selection: ``"detect"`` keeps masked directions whose final-spectrum power
            passes the same noise test; ``"relative"`` keeps those with power at
            least ``gamma`` times the spectrum maximum.
        gamma: relative level for ``selection="relative"``.
        false_alarm: family-wise false-alarm rate of the automatic tests.
        track_q: compute the worst cross-gain ``q`` after every iteration (costs
            an ``R x R`` product per step).
    """
    A = manifold.entries
    M, R = A.shape
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != M:
        raise ValueError(f"X has {X.shape[0]} rows, manifold has M={M}")
    T = X.shape[1]
    if known_K is not None:
        if not 0 <= known_K < M:
            raise ValueError(f"known_K must lie in [0, M), got {known_K}")
        if max_iterations is None:
            max_iterations = known_K
        threshold = 0.0
    if max_iterations is None:
        max_iterations = min(M - 1, 15)
    if not 0 <= max_iterations < M:
        raise ValueError(f"max_iterations must lie in [0, M={M}), got {max_iterations}")
    if selection not in ("detect", "relative"):
        raise ValueError(f"unknown selection rule {selection!r}")
    auto = threshold is None

    filt = preliminary_filter(manifold)
    power = spectrum(filt, X, manifold.grid).power
    gains = filt.row_gains()
    if not np.any(gains > 0):
        raise EmptySpectrum("every filter row is degenerate")
    first_peak = float(power.max())
    theta: list[int] = []
    trace: list[IterationRecord] = []
    passed: list[bool] = []
    i_star = _argmax_free(power, theta)
    stop_reason = "max_iterations"
    t = 1
    while t <= max_iterations:
        peak = float(power[i_star])
        if gains[i_star] == 0 or i_star in theta:
            stop_reason = "exhausted"
            break
        if not auto and peak < threshold:
            stop_reason = "threshold"
            break
        if auto and peak <= NUMERICAL_FLOOR * first_peak:
            stop_reason = "numerical_zero"
            break
        z = peak / gains[i_star]
        theta.append(i_star)
        filt, Q = _masked(manifold, theta)
        if filt.degenerate:
            log.info("iteration %d: %d degenerate rows skipped", t, len(filt.degenerate))
        if auto:
            s2 = residual_noise_var(Q, X)
            crit = detection_ratio(T, Q.shape[1], false_alarm, R)
            passed.append(z >= crit * s2 and z > 0)
        q = weight_stats(filt, manifold, excluded=theta).q if track_q else None
        trace.append(IterationRecord(i_star, peak, q))
        power = spectrum(filt, X, manifold.grid).power
        gains = filt.row_gains()
        if not np.any(gains > 0):
            raise EmptySpectrum("every filter row is degenerate")
        i_star = _argmax_free(power, theta)
        t += 1

    if auto:
        keep = max((k + 1 for k, ok in enumerate(passed) if ok), default=0)
        if keep < len(theta):
            log.info("noise test keeps %d of %d masked directions", keep, len(theta))
        theta = theta[:keep]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDirection)
        final = final_filter(manifold, theta)
    final_spec = spectrum(final, X, manifold.grid)
    estimated = select_sources(manifold, final, final_spec.power, X, selection, gamma, false_alarm)
    cfg = {
        "max_iterations": max_iterations,
        "threshold": "auto" if auto else threshold,
        "known_K": known_K,
        "selection": selection,
        "gamma": gamma,
        "false_alarm": false_alarm,
        "delta_deg": manifold.grid.delta_deg,
        "M": M,
        "T": T,
    }
    return SsfnsResult(tuple(theta), final, final_spec, estimated, tuple(trace), stop_reason, cfg)


def select_sources(manifold, final: SpatialFilter, power, X, rule="detect", gamma=0.5,
                   false_alarm=1e-3) -> tuple[int, ...]:
    """Pick the members of the final masked set that carry a source."""
    theta = list(final.masked_set)
    if not theta:
        return ()
    if rule == "relative":
        top = power.max()
        return tuple(i for i in theta if top > 0 and power[i] >= gamma * top)
    M, R = manifold.entries.shape
    X = X if X.ndim == 2 else X[:, None]
    gains = final.row_gains()
    z = np.array([power[i] / gains[i] if gains[i] > 0 else 0.0 for i in theta])
    Q = null_basis(manifold.entries[:, theta], M)
    s2 = residual_noise_var(Q, X)
    crit = detection_ratio(X.shape[1], Q.shape[1], false_alarm, R)
    level = max(crit * s2, 1e-10 * float(z.max()))
    return tuple(i for i, zi in zip(theta, z) if zi > 0 and zi >= level)
