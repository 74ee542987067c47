"""Sensor layouts: the six synthetic arrangements plus CSV-loaded external arrays.

Coordinates are meters in a local plane centered on the array. Random layouts are
drawn on a unit scale and multiplied by the aperture, so the same seed gives the
same shape at every aperture.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateSensorId, InvalidLayoutParams, ParseError

LAYOUTS = (
    "uniform_random_2d",
    "normal_random_2d",
    "uniform_circle",
    "concentric_circles",
    "spiral",
    "uniform_linear",
)
EXTERNAL = "external"

SPIRAL_ARMS = 8
RING_SIZE = 8
DEFAULT_SPIRAL_C = 0.5


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Immutable sensor layout.

    Attributes:
        sensors: (M, 2) array of x, y coordinates in meters.
        aperture_V: nominal aperture in meters.
        layout_kind: one of ``LAYOUTS`` or ``"external"``.
        seed: RNG seed for random layouts, ``None`` otherwise.
        ids: sensor identifiers (only meaningful for external arrays).
    """

    sensors: np.ndarray
    aperture_V: float
    layout_kind: str
    seed: int | None = None
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        xy = np.array(self.sensors, dtype=float).reshape(-1, 2)
        if xy.shape[0] < 1:
            raise InvalidLayoutParams("geometry needs at least one sensor")
        if not np.all(np.isfinite(xy)):
            raise InvalidLayoutParams("sensor coordinates must be finite")
        xy.setflags(write=False)
        object.__setattr__(self, "sensors", xy)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(str(i) for i in range(len(xy))))

    @property
    def M(self) -> int:
        return self.sensors.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.sensors[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.sensors[:, 1]

    def fingerprint(self) -> str:
        """Short hash of the coordinates, used to tie manifolds and filters to a geometry."""
        return hashlib.sha256(np.ascontiguousarray(self.sensors).tobytes()).hexdigest()[:16]

    def summary(self) -> dict:
        ext = np.ptp(self.sensors, axis=0)
        return {
            "layout_kind": self.layout_kind,
            "M": self.M,
            "aperture_V": self.aperture_V,
            "seed": self.seed,
            "extent_x_m": float(ext[0]),
            "extent_y_m": float(ext[1]),
            "fingerprint": self.fingerprint(),
        }

    def to_csv(self, path) -> None:
        Path(path).write_text(geometry_csv_text(self), encoding="utf-8", newline="")


def _ring(radius: float, n: int) -> np.ndarray:
    ang = 2 * np.pi * np.arange(n) / n
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


def generate(layout_kind: str, M: int, V: float, seed: int | None = 0,
             spiral_c: float = DEFAULT_SPIRAL_C) -> ArrayGeometry:
    """Build one of the six synthetic layouts.

    Args:
        layout_kind: name from ``LAYOUTS``.
        M: number of sensors.
        V: aperture in meters (square side, circle diameter or line length).
        seed: seed for the two random layouts; ignored by the deterministic ones.
        spiral_c: angular tightness of the spiral arms, radians per meter.

    Raises:
        InvalidLayoutParams: unknown layout, ``M < 1``, ``V <= 0``, or ``M`` not a
            multiple of 8 for the ring and spiral layouts.
    """
    if layout_kind not in LAYOUTS:
        raise InvalidLayoutParams(f"unknown layout {layout_kind!r}; expected one of {LAYOUTS}")
    if int(M) != M or M < 1:
        raise InvalidLayoutParams(f"M must be a positive integer, got {M}")
    M = int(M)
    if not (V > 0 and math.isfinite(V)):
        raise InvalidLayoutParams(f"aperture V must be positive, got {V}")
    if layout_kind in ("concentric_circles", "spiral") and M % 8:
        raise InvalidLayoutParams(f"{layout_kind} needs M divisible by 8, got M={M}")

    rng_seed = None
    if layout_kind == "uniform_random_2d":
        rng_seed = seed
        unit = np.random.default_rng(seed).random((M, 2)) - 0.5
        xy = unit * V
    elif layout_kind == "normal_random_2d":
        rng_seed = seed
        # sigma = V/6 puts ~99.7% of the sensors inside the aperture; outliers are kept
        unit = np.random.default_rng(seed).standard_normal((M, 2)) / 6.0
        xy = unit * V
    elif layout_kind == "uniform_circle":
        xy = _ring(V / 2, M)
    elif layout_kind == "concentric_circles":
        n_rings = M // RING_SIZE
        spacing = 4.0 * V / M
        xy = np.vstack([_ring(spacing * (k + 1), RING_SIZE) for k in range(n_rings)])
    elif layout_kind == "spiral":
        per_arm = M // SPIRAL_ARMS
        radii = (V / 2) * np.arange(1, per_arm + 1) / per_arm
        pts = []
        for k in range(SPIRAL_ARMS):
            ang = 2 * np.pi * k / SPIRAL_ARMS + spiral_c * radii
            pts.append(np.column_stack([radii * np.cos(ang), radii * np.sin(ang)]))
        xy = np.vstack(pts)
    else:  # uniform_linear
        y = np.linspace(-V / 2, V / 2, M) if M > 1 else np.zeros(1)
        xy = np.column_stack([np.zeros(M), y])

    return ArrayGeometry(xy, float(V), layout_kind, rng_seed)


def coordinate_extent(xy: np.ndarray) -> float:
    """Largest coordinate span (x or y) of a point set."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return float(np.max(np.ptp(xy, axis=0)))


def geometry_csv_text(geom: ArrayGeometry) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "x_m", "y_m"])
    for sid, (x, y) in zip(geom.ids, geom.sensors):
        w.writerow([sid, repr(float(x)), repr(float(y))])
    return buf.getvalue()


def load_geometry_csv(path) -> ArrayGeometry:
    """Read a ``id,x_m,y_m`` sensor table.

    The header row is optional. Aperture is the largest coordinate extent.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and [c.strip().lower() for c in rows[0]] == ["id", "x_m", "y_m"]:
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no sensor rows")
    ids, xy = [], []
    for n, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise ParseError(f"{path}: row {n} has {len(row)} fields, expected 3")
        sid = row[0].strip()
        try:
            x, y = float(row[1]), float(row[2])
        except ValueError as exc:
            raise ParseError(f"{path}: row {n}: {exc}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(f"{path}: row {n}: non-finite coordinate")
        ids.append(sid)
        xy.append((x, y))
    seen = set()
    for sid in ids:
        if sid in seen:
            raise DuplicateSensorId(f"{path}: sensor id {sid!r} appears twice")
        seen.add(sid)
    xy = np.asarray(xy)
    return ArrayGeometry(xy, coordinate_extent(xy), EXTERNAL, None, tuple(ids))
