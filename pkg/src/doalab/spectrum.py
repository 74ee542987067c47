"""Spatial power spectrum container shared by SSFNS and the baselines."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .manifold import GridSpec


@dataclass(frozen=True, eq=False)
class SpatialSpectrum:
    power: np.ndarray
    grid: GridSpec
    snapshots_averaged: int
    method: str = "ssfns"
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if p.ndim != 1 or p.shape[0] != self.grid.R:
            raise ValueError(f"spectrum must have length R={self.grid.R}, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("spectrum entries must be finite and nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "power", p)

    @property
    def R(self) -> int:
        return self.power.shape[0]

    def argmax(self) -> int:
        return int(np.argmax(self.power))

    def peaks(self, n: int | None = None) -> list[int]:
        """Circular local maxima, strongest first (ties broken by lower index)."""
        p = self.power
        left, right = np.roll(p, 1), np.roll(p, -1)
        idx = np.flatnonzero((p >= left) & (p > right) & (p > 0))
        order = sorted(idx.tolist(), key=lambda i: (-p[i], i))
        return order if n is None else order[:n]

    def normalized(self) -> np.ndarray:
        m = self.power.max()
        return self.power / m if m > 0 else self.power.copy()

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle_deg", "power"])
        for ang, val in zip(self.grid.angles_deg(), self.power):
            w.writerow([repr(float(ang)), repr(float(val))])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text(), encoding="utf-8", newline="")
