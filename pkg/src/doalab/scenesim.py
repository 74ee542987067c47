"""Synthetic narrowband scenes ``X = A S + N`` on the manifold grid."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, RaggedRows, TooManySources
from .manifold import ManifoldMatrix


@dataclass(frozen=True, eq=False)
class SceneGroundTruth:
    """A generated scene.

    ``S`` is ``R x T`` and zero outside ``source_indices``; ``N`` and ``X`` are
    ``M x T``. ``noise_var`` is the per-sensor complex noise variance actually used.
    """

    source_indices: tuple[int, ...]
    S: np.ndarray
    N: np.ndarray
    X: np.ndarray
    snr_db: float
    coherent: bool
    T: int
    seed: int | None
    noise_var: float

    @property
    def K(self) -> int:
        return len(self.source_indices)

    def manifest(self, delta_deg: float) -> dict:
        return {
            "seed": self.seed,
            "K": self.K,
            "theta_s_deg": [round(i * delta_deg, 10) for i in self.source_indices],
            "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
            "noise_off": math.isinf(self.snr_db),
            "coherent": self.coherent,
            "T": self.T,
        }

    def write_manifest(self, path, delta_deg: float) -> None:
        Path(path).write_text(json.dumps(self.manifest(delta_deg), indent=2) + "\n")


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def simulate_scene(manifold: ManifoldMatrix, source_indices, T: int = 1,
                   snr_db: float = 20.0, coherent: bool = False,
                   seed: int | None = 0) -> SceneGroundTruth:
    """Draw source waveforms and white noise for a fixed set of grid directions.

    Waveforms have unit average power. Coherent sources share one base waveform,
    each rotated by a fixed random phase. Noise variance is chosen so that the
    mean received signal power per sensor over noise variance equals ``snr_db``;
    ``snr_db=inf`` disables noise. With no sources the noise has unit variance.

    Raises:
        TooManySources: if ``len(source_indices) >= M``.
    """
    A = manifold.entries
    M, R = A.shape
    idx = tuple(int(i) for i in source_indices)
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate source indices")
    if any(i < 0 or i >= R for i in idx):
        raise ValueError(f"source index outside [0, {R})")
    K = len(idx)
    if K >= M:
        raise TooManySources(f"K={K} sources need at least K+1 sensors, have M={M}")
    if T < 1:
        raise ValueError("T must be >= 1")

    rng = np.random.default_rng(seed)
    S = np.zeros((R, T), dtype=complex)
    if K:
        if coherent:
            base = _cgauss(rng, (1, T))
            phases = np.exp(2j * np.pi * rng.random((K, 1)))
            S[list(idx)] = phases * base
        else:
            S[list(idx)] = _cgauss(rng, (K, T))

    clean = A[:, list(idx)] @ S[list(idx)] if K else np.zeros((M, T), dtype=complex)
    if math.isinf(snr_db) and snr_db > 0:
        noise_var = 0.0
        N = np.zeros((M, T), dtype=complex)
    else:
        p_sig = float(np.sum(np.abs(clean) ** 2)) / (M * T)
        noise_var = p_sig / 10 ** (snr_db / 10) if K else 1.0
        N = math.sqrt(noise_var) * _cgauss(rng, (M, T))
    X = clean + N
    for arr in (S, N, X):
        arr.setflags(write=False)
    return SceneGroundTruth(idx, S, N, X, float(snr_db), bool(coherent), int(T), seed, noise_var)


def random_source_indices(R: int, K: int, rng, min_separation: int = 1) -> list[int]:
    """Pick ``K`` distinct grid indices at least ``min_separation`` cells apart (circularly)."""
    chosen: list[int] = []
    attempts = 0
    while len(chosen) < K:
        attempts += 1
        if attempts > 10000 * max(K, 1):
            raise ValueError("cannot place sources with the requested separation")
        c = int(rng.integers(R))
        if all(min(abs(c - o), R - abs(c - o)) >= min_separation for o in chosen):
            chosen.append(c)
    return sorted(chosen)


def snapshots_csv_text(X: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(X):
        out = []
        for v in row:
            out += [repr(float(v.real)), repr(float(v.imag))]
        w.writerow(out)
    return buf.getvalue()


def load_snapshots_csv(path, expected_M: int | None = None) -> np.ndarray:
    """Read an ``M x T`` complex snapshot matrix stored as interleaved ``re,im`` columns.

    Raises:
        ParseError: empty file, odd column count or non-numeric field.
        RaggedRows: rows of unequal length, or row count different from ``expected_M``.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no snapshot rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise RaggedRows(f"{path}: rows have differing column counts")
    if width % 2:
        raise ParseError(f"{path}: {width} columns is not an even re,im interleaving")
    try:
        vals = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"{path}: non-finite value")
    if expected_M is not None and vals.shape[0] != expected_M:
        raise RaggedRows(f"{path}: {vals.shape[0]} rows but the geometry has M={expected_M}")
    return vals[:, 0::2] + 1j * vals[:, 1::2]
