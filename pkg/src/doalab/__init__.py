"""Direction-of-arrival estimation by spatial signal focusing and noise suppression."""

__version__ = "0.1.0"

from .errors import (BadSourceCount, DegenerateDirection, DoaError, DuplicateSensorId,
                     EmptySpectrum, GridNotIntegral, InvalidLayoutParams, NonConvergence,
                     NullspaceRankError, ParseError, RaggedRows, SingularCovariance,
                     TooManySources)
from .geometry import ArrayGeometry, generate, load_geometry_csv
from .manifold import GridSpec, ManifoldMatrix, WaveConfig, build_manifold, delay
from .scenesim import SceneGroundTruth, load_snapshots_csv, simulate_scene
from .spectrum import SpatialSpectrum
from .ssfns import (SpatialFilter, SsfnsResult, WeightMatrixStats, final_filter,
                    masked_filter, preliminary_filter, run_ssfns, spectrum, weight_stats)
from .baselines import cbf_spectrum, l1_spectrum, music_spectrum, mvdr_spectrum
from .metrics import MetricsReport, ca, cor, energy_ratios, esa, metrics_report, nsa, ssfa

__all__ = [
    "ArrayGeometry", "BadSourceCount", "DegenerateDirection", "DoaError", "DuplicateSensorId",
    "EmptySpectrum", "GridNotIntegral", "GridSpec", "InvalidLayoutParams", "ManifoldMatrix",
    "MetricsReport", "NonConvergence", "NullspaceRankError", "ParseError", "RaggedRows",
    "SceneGroundTruth", "SingularCovariance", "SpatialFilter", "SpatialSpectrum",
    "SsfnsResult", "TooManySources", "WaveConfig", "WeightMatrixStats", "build_manifold",
    "ca", "cbf_spectrum", "cor", "delay", "energy_ratios", "esa", "final_filter",
    "generate", "l1_spectrum", "load_geometry_csv", "load_snapshots_csv", "masked_filter",
    "metrics_report", "music_spectrum", "mvdr_spectrum", "nsa", "preliminary_filter",
    "run_ssfns", "simulate_scene", "spectrum", "ssfa", "weight_stats",
]
