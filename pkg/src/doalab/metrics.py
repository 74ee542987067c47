"""Figures of merit for spatial filters and spectra.

All distance metrics use Frobenius norms per snapshot, averaged over snapshots.
Decibel ratios whose denominator vanishes are reported as a +300 dB sentinel
(or -300 dB for a vanishing numerator) and flagged rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .manifold import ManifoldMatrix

DB_CAP = 300.0


def _mat(filt) -> np.ndarray:
    return filt.B if hasattr(filt, "B") else np.asarray(filt)


def _manifold(m) -> np.ndarray:
    return m.entries if isinstance(m, ManifoldMatrix) else np.asarray(m)


def _cols(Z) -> np.ndarray:
    Z = np.asarray(Z)
    return Z[:, None] if Z.ndim == 1 else Z


def ratio_db(num: float, den: float, flags: dict | None = None, name: str = "") -> float:
    """``10 log10(num/den)`` clamped to ``[-300, 300]`` dB; clamping is recorded in ``flags``."""
    if den <= 0 or num <= 0:
        if flags is not None:
            flags[name] = "capped"
        if den <= 0 and num <= 0:
            return 0.0
        return DB_CAP if den <= 0 else -DB_CAP
    val = 10.0 * math.log10(num / den)
    if abs(val) > DB_CAP:
        if flags is not None:
            flags[name] = "capped"
        val = math.copysign(DB_CAP, val)
    return val


def ssfa(filt, manifold, chunk: int = 256) -> float:
    """Focusing error ``||B A - E||_F``; evaluated in row blocks to bound memory."""
    B = _mat(filt)
    A = _manifold(manifold)
    R = B.shape[0]
    total = 0.0
    for start in range(0, R, chunk):
        rows = np.arange(start, min(start + chunk, R))
        C = B[rows] @ A
        C[np.arange(rows.size), rows] -= 1.0
        total += float(np.sum(C.real ** 2 + C.imag ** 2))
    return math.sqrt(total)


def nsa(filt, N) -> float:
    """Noise suppression ``mean_t ||B N_t||``."""
    Y = _mat(filt) @ _cols(N)
    return float(np.mean(np.linalg.norm(Y, axis=0)))


def esa(filt, manifold, S) -> float:
    """Signal extraction error ``mean_t ||B A S_t - S_t||``."""
    S = _cols(S)
    Y = _mat(filt) @ (_manifold(manifold) @ S) - S
    return float(np.mean(np.linalg.norm(Y, axis=0)))


def ca(filt, X, S) -> float:
    """Combined error ``mean_t ||B X_t - S_t||``."""
    S = _cols(S)
    Y = _mat(filt) @ _cols(X) - S
    return float(np.mean(np.linalg.norm(Y, axis=0)))


@dataclass(frozen=True)
class EnergyRatios:
    I_bar: float
    N_bar: float
    S_bar: float
    SIR_B_db: float
    SNR_B_db: float
    SNIR_B_db: float
    flags: dict = field(default_factory=dict)


def energy_ratios(filt, manifold, S, N, K: int | None = None) -> EnergyRatios:
    """Mean interference, noise and signal energy per direction and their dB ratios.

    Interference and noise energies are averaged over all ``R`` directions and
    ``T`` snapshots; signal energy over the ``K`` source rows (nonzero rows of
    ``S`` unless ``K`` is given).
    """
    B = _mat(filt)
    S = _cols(S)
    N = _cols(N)
    R, T = S.shape
    if K is None:
        K = int(np.count_nonzero(np.any(S != 0, axis=1)))
    interf = B @ (_manifold(manifold) @ S) - S
    I_bar = float(np.sum(np.abs(interf) ** 2)) / (T * R)
    N_bar = float(np.sum(np.abs(B @ N) ** 2)) / (T * R)
    S_bar = float(np.sum(np.abs(S) ** 2)) / (T * K) if K else 0.0
    flags: dict = {}
    return EnergyRatios(
        I_bar, N_bar, S_bar,
        ratio_db(S_bar, I_bar, flags, "SIR_B_db"),
        ratio_db(S_bar, N_bar, flags, "SNR_B_db"),
        ratio_db(S_bar, I_bar + N_bar, flags, "SNIR_B_db"),
        flags,
    )


def correct_set(true_indices, R: int, tolerance: int = 0) -> np.ndarray:
    """Boolean mask of grid cells within ``tolerance`` cells (circularly) of a true index."""
    hit = np.zeros(R, dtype=bool)
    for i in true_indices:
        for w in range(-tolerance, tolerance + 1):
            hit[(int(i) + w) % R] = True
    return hit


def cor(power, true_indices, tolerance: int = 0, flags: dict | None = None) -> float:
    """Mean spectrum power on the true directions over mean power elsewhere, in dB.

    With ``tolerance = 0`` this is ``10 log10((R-K) sum_in P / (K sum_out P))``.
    A positive ``tolerance`` widens each true direction to ``2w+1`` cells and
    uses the widened set in both means.
    """
    P = np.asarray(getattr(power, "power", power), dtype=float)
    R = P.shape[0]
    hit = correct_set(true_indices, R, tolerance)
    k = int(hit.sum())
    if not 0 < k < R:
        raise ValueError(f"need 0 < K < R correct cells, got {k}")
    inside = float(P[hit].sum())
    outside = float(P[~hit].sum())
    return ratio_db((R - k) * inside, k * outside, flags, "COR_db")


@dataclass(frozen=True)
class MetricsReport:
    q: float
    SSFA: float
    NSA: float
    ESA: float
    CA: float
    I_bar: float
    N_bar: float
    S_bar: float
    SIR_B_db: float
    SNR_B_db: float
    SNIR_B_db: float
    COR_db: float
    flags: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def metrics_report(filt, manifold: ManifoldMatrix, scene, q: float | None = None,
                   excluded=(), tolerance: int = 0) -> MetricsReport:
    """Every metric for one filter on one scene (``q`` computed if not supplied)."""
    from .ssfns import spectrum, weight_stats

    if q is None:
        q = weight_stats(filt, manifold, excluded).q
    er = energy_ratios(filt, manifold, scene.S, scene.N, scene.K)
    flags = dict(er.flags)
    cor_db = -DB_CAP
    if scene.K:
        cor_db = cor(spectrum(filt, scene.X, manifold.grid).power, scene.source_indices,
                     tolerance, flags)
    else:
        flags["COR_db"] = "undefined_without_sources"
    return MetricsReport(
        float(q), ssfa(filt, manifold), nsa(filt, scene.N), esa(filt, manifold, scene.S),
        ca(filt, scene.X, scene.S), er.I_bar, er.N_bar, er.S_bar,
        er.SIR_B_db, er.SNR_B_db, er.SNIR_B_db, cor_db, flags,
    )
