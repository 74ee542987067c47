"""Reference estimators: conventional beamforming, MVDR, MUSIC and a group-Lasso sparse fit."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadSourceCount, NonConvergence, SingularCovariance
from .manifold import ManifoldMatrix
from .spectrum import SpatialSpectrum

log = logging.getLogger(__name__)

MUSIC_FLOOR = 1e-12


def _as_snapshots(X) -> np.ndarray:
    X = np.asarray(X)
    return X[:, None] if X.ndim == 1 else X


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    R_hat: np.ndarray
    T_used: int
    loading_eps: float

    @property
    def loaded(self) -> np.ndarray:
        return self.R_hat + self.loading_eps * np.eye(self.R_hat.shape[0])


def sample_covariance(X, loading_eps: float = 0.0) -> CovarianceEstimate:
    """``X X^H / T``, symmetrized to remove rounding asymmetry."""
    X = _as_snapshots(X)
    Rh = X @ X.conj().T / X.shape[1]
    Rh = 0.5 * (Rh + Rh.conj().T)
    return CovarianceEstimate(Rh, X.shape[1], float(loading_eps))


def default_loading(R_hat: np.ndarray) -> float:
    return 1e-3 * float(np.trace(R_hat).real) / R_hat.shape[0]


def cbf_spectrum(manifold: ManifoldMatrix, X) -> SpatialSpectrum:
    """Delay-and-sum power ``mean_t |a_i^H x_t|^2 / M^2``."""
    A = manifold.entries
    X = _as_snapshots(X)
    Y = A.conj().T @ X
    power = np.mean(np.abs(Y) ** 2, axis=1) / A.shape[0] ** 2
    return SpatialSpectrum(power, manifold.grid, X.shape[1], "cbf")


def mvdr_spectrum(manifold: ManifoldMatrix, X, loading_eps: float | None = None) -> SpatialSpectrum:
    """Capon power ``1 / (a_i^H (R + eps I)^-1 a_i)``.

    ``loading_eps=None`` applies ``1e-3 * trace(R)/M``. With ``loading_eps=0``
    a rank-deficient covariance raises ``SingularCovariance``. The returned
    flags record the loading used and whether ``R`` was rank deficient.
    """
    A = manifold.entries
    M = A.shape[0]
    X = _as_snapshots(X)
    cov = sample_covariance(X)
    eps = default_loading(cov.R_hat) if loading_eps is None else float(loading_eps)
    rank = int(np.linalg.matrix_rank(cov.R_hat, hermitian=True))
    rank_deficient = rank < M
    if eps == 0 and rank_deficient:
        raise SingularCovariance(f"sample covariance has rank {rank} < M={M}; use loading")
    Rl = cov.R_hat + eps * np.eye(M)
    W = np.linalg.solve(Rl, A)
    denom = np.einsum("ij,ij->j", A.conj(), W).real
    power = 1.0 / np.maximum(denom, np.finfo(float).tiny)
    flags = {"loading_eps": eps, "rank_deficient": bool(rank_deficient), "rank": rank}
    if rank_deficient:
        log.info("MVDR: covariance rank %d < M=%d (T=%d)", rank, M, X.shape[1])
    return SpatialSpectrum(power, manifold.grid, X.shape[1], "mvdr", flags)


def music_spectrum(manifold: ManifoldMatrix, X, K_known: int) -> SpatialSpectrum:
    """MUSIC pseudo-spectrum ``1 / ||E_n^H a_i||^2`` with the ``M - K`` weakest eigenvectors."""
    A = manifold.entries
    M = A.shape[0]
    if not (isinstance(K_known, (int, np.integer)) and 1 <= K_known < M):
        raise BadSourceCount(f"MUSIC needs 1 <= K < M={M}, got {K_known}")
    X = _as_snapshots(X)
    cov = sample_covariance(X)
    w, V = np.linalg.eigh(cov.R_hat)
    En = V[:, : M - K_known]
    proj = np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)
    power = 1.0 / np.maximum(proj, MUSIC_FLOOR)
    flags = {"K": int(K_known), "eigenvalues": w[::-1].tolist()}
    return SpatialSpectrum(power, manifold.grid, X.shape[1], "music", flags)


def _mad_sigma(manifold: ManifoldMatrix, X: np.ndarray) -> float:
    """Noise std per complex entry from the median absolute deviation of the CBF residual."""
    A = manifold.entries
    M = A.shape[0]
    i = int(np.argmax(np.sum(np.abs(A.conj().T @ X) ** 2, axis=1)))
    a = A[:, i : i + 1]
    resid = X - a @ (a.conj().T @ X) / M
    parts = np.concatenate([resid.real.ravel(), resid.imag.ravel()])
    mad = np.median(np.abs(parts - np.median(parts)))
    return float(1.4826 * mad * math.sqrt(2))


def default_lambda(manifold: ManifoldMatrix, X) -> float:
    """Universal-threshold style weight ``2 sqrt(M) sigma sqrt(2 log R) sqrt(T)``."""
    X = _as_snapshots(X)
    M, R = manifold.entries.shape
    sigma = _mad_sigma(manifold, X)
    return 2.0 * math.sqrt(M) * sigma * math.sqrt(2 * math.log(R)) * math.sqrt(X.shape[1])


def group_lasso_objective(A, X, S, lam) -> float:
    r = A @ S - X
    return float(np.sum(np.abs(r) ** 2) + lam * np.sum(np.linalg.norm(S, axis=1)))


def _group_shrink(V: np.ndarray, tau: float) -> np.ndarray:
    nrm = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.maximum(0.0, 1.0 - tau / np.maximum(nrm, np.finfo(float).tiny))
    return V * scale


def l1_spectrum(manifold: ManifoldMatrix, X, lambda_reg: float | None = None,
                max_iter: int = 500, tol: float = 1e-6, return_history: bool = False):
    """Row-sparse fit ``min ||A S - X||_F^2 + lambda * sum_i ||S_i||_2`` by proximal gradient.

    Uses backtracking on the quadratic upper bound, so the objective never
    increases. The spectrum is ``||S_i||^2 / T``. If ``max_iter`` is reached
    before the relative change drops below ``tol`` a ``NonConvergence`` warning
    is emitted and the last (also best) iterate is returned with
    ``flags["converged"] = False``.
    """
    A = manifold.entries
    X = _as_snapshots(X)
    M, R = A.shape
    T = X.shape[1]
    lam = default_lambda(manifold, X) if lambda_reg is None else float(lambda_reg)
    if lam <= 0:
        raise ValueError("lambda_reg must be positive")
    lip = 2.0 * float(np.linalg.eigvalsh(A @ A.conj().T).max())
    step = 2.0 / lip
    S = np.zeros((R, T), dtype=complex)
    fval = group_lasso_objective(A, X, S, lam)
    history = [fval]
    converged = False
    for _ in range(max_iter):
        resid = A @ S - X
        smooth = float(np.sum(np.abs(resid) ** 2))
        grad = 2.0 * (A.conj().T @ resid)
        while True:
            S_new = _group_shrink(S - step * grad, step * lam)
            d = S_new - S
            r_new = A @ S_new - X
            smooth_new = float(np.sum(np.abs(r_new) ** 2))
            bound = smooth + float(np.real(np.vdot(grad, d))) \
                + float(np.sum(np.abs(d) ** 2)) / (2.0 * step)
            if smooth_new <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            step *= 0.5
        f_new = smooth_new + lam * float(np.sum(np.linalg.norm(S_new, axis=1)))
        if f_new > fval:
            # bound held only up to rounding; keep the previous iterate, shorten the step
            history.append(fval)
            step *= 0.5
            continue
        history.append(f_new)
        rel = abs(fval - f_new) / max(abs(fval), np.finfo(float).tiny)
        S, fval = S_new, f_new
        if rel < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"group lasso did not reach tol={tol} in {max_iter} iterations",
                      NonConvergence, stacklevel=2)
    power = np.sum(np.abs(S) ** 2, axis=1) / T
    flags = {"lambda": lam, "converged": converged, "iterations": len(history) - 1,
             "objective": fval}
    spec = SpatialSpectrum(power, manifold.grid, T, "l1", flags)
    if return_history:
        return spec, history
    return spec
