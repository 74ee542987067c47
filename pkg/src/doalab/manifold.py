"""Plane-wave steering vectors over a uniform azimuth grid.

Grid index ``i`` is azimuth ``i * delta_deg`` degrees, measured from the +x axis
toward +y. Steering entries are ``exp(-1j * omega0 * tau)`` with ideal unit gains.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridNotIntegral, InvalidLayoutParams
from .geometry import ArrayGeometry


@dataclass(frozen=True)
class WaveConfig:
    speed_c: float = 1500.0
    frequency_f: float = 100.0

    def __post_init__(self):
        if not (self.speed_c > 0 and self.frequency_f > 0):
            raise ValueError("speed_c and frequency_f must be positive")

    @property
    def omega0(self) -> float:
        return 2 * math.pi * self.frequency_f

    @property
    def wavelength(self) -> float:
        return self.speed_c / self.frequency_f


@dataclass(frozen=True)
class GridSpec:
    delta_deg: float = 0.1
    elevation_phi: float = 0.0

    def __post_init__(self):
        if not (0 < self.delta_deg <= 360):
            raise GridNotIntegral(f"delta must lie in (0, 360], got {self.delta_deg}")
        ratio = 360.0 / self.delta_deg
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise GridNotIntegral(f"360/delta = {ratio} is not an integer")

    @property
    def R(self) -> int:
        return int(round(360.0 / self.delta_deg))

    def angles_deg(self) -> np.ndarray:
        return np.arange(self.R) * self.delta_deg

    def angles_rad(self) -> np.ndarray:
        return np.deg2rad(self.angles_deg())

    def index_of(self, angle_deg: float) -> int:
        """Nearest grid index for an azimuth in degrees (wraps modulo 360)."""
        return int(round((angle_deg % 360.0) / self.delta_deg)) % self.R

    def angle_of(self, index: int) -> float:
        return float(index) * self.delta_deg


def delay(x, y, theta, phi=0.0, speed_c=1500.0):
    """Propagation delay in seconds of a plane wave at sensor ``(x, y)``, ``z = 0``.

    Broadcasts over array inputs.
    """
    return (x * np.cos(theta) * np.cos(phi) + y * np.sin(theta) * np.cos(phi)) / speed_c


@dataclass(frozen=True, eq=False)
class ManifoldMatrix:
    """Dense ``M x R`` steering matrix for one geometry, wave and grid."""

    entries: np.ndarray
    grid: GridSpec
    wave: WaveConfig
    geometry_fingerprint: str

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def R(self) -> int:
        return self.entries.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i % self.R]

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor", "dir_index", "re", "im"])
        for j in range(self.M):
            for i in range(self.R):
                v = self.entries[j, i]
                w.writerow([j, i, repr(float(v.real)), repr(float(v.imag))])
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def steering(geometry: ArrayGeometry, wave: WaveConfig, theta, phi=0.0) -> np.ndarray:
    """Steering vectors for arbitrary azimuths; returns shape ``(M, len(theta))``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    tau = delay(geometry.x[:, None], geometry.y[:, None], theta[None, :], phi, wave.speed_c)
    return np.exp(-1j * wave.omega0 * tau)


def build_manifold(geometry: ArrayGeometry, wave: WaveConfig | None = None,
                   grid: GridSpec | None = None) -> ManifoldMatrix:
    wave = wave or WaveConfig()
    grid = grid or GridSpec()
    if geometry.M < 1:
        raise InvalidLayoutParams("empty geometry")
    A = steering(geometry, wave, grid.angles_rad(), grid.elevation_phi)
    A.setflags(write=False)
    return ManifoldMatrix(A, grid, wave, geometry.fingerprint())
