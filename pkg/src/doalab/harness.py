"""Command-line experiment runner.

Every subcommand reads an optional JSON config, applies flag overrides, writes
its CSV/JSON artifacts into ``output_dir`` and finally a ``manifest.json``
holding the full resolved config. Exit codes: 0 success, 2 configuration or
input error, 3 numerical failure. ``DOALAB_THREADS`` caps worker threads.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import cbf_spectrum, l1_spectrum, music_spectrum, mvdr_spectrum
from .errors import (BadSourceCount, DoaError, EmptySpectrum, GridNotIntegral,
                     InvalidLayoutParams, NullspaceRankError, ParseError,
                     SingularCovariance, TooManySources)
from .geometry import LAYOUTS, generate, geometry_csv_text, load_geometry_csv
from .manifold import GridSpec, WaveConfig, build_manifold
from .metrics import ca, cor, energy_ratios, esa, nsa, ssfa
from .scenesim import load_snapshots_csv, random_source_indices, simulate_scene
from .ssfns import masked_filter, preliminary_filter, run_ssfns, spectrum, weight_stats

log = logging.getLogger("doalab")

METHODS = ("ssfns", "preliminary", "cbf", "mvdr", "music", "l1")
AXES = ("snr", "snapshots", "K", "iterations", "aperture", "M")
LONG_HEADER = ["method", "axis_name", "axis_value", "seed", "metric_name", "metric_value"]


class ConfigError(DoaError, ValueError):
    pass


CONFIG_ERRORS = (ConfigError, InvalidLayoutParams, GridNotIntegral, TooManySources,
                 BadSourceCount, ParseError, FileNotFoundError, json.JSONDecodeError)
NUMERICAL_ERRORS = (SingularCovariance, EmptySpectrum, NullspaceRankError,
                    np.linalg.LinAlgError, FloatingPointError)


class ExactRecoveryFailed(DoaError, ArithmeticError):
    pass


@dataclass
class ExperimentConfig:
    layout_kind: str = "uniform_random_2d"
    M: int = 16
    aperture_V: float = 8000.0
    delta_deg: float = 0.1
    elevation_phi: float = 0.0
    speed_c: float = 1500.0
    frequency_f: float = 100.0
    K: int = 3
    angles_deg: list | None = None
    min_separation_deg: float = 1.0
    T: int = 1
    snr_db: float = 20.0
    noise_off: bool = False
    coherent: bool = False
    methods: list = field(default_factory=lambda: ["ssfns", "cbf", "mvdr", "music"])
    I: int | None = None
    P: float | None = None
    gamma: float = 0.5
    selection: str = "detect"
    false_alarm: float = 1e-3
    seeds: list = field(default_factory=lambda: list(range(20)))
    output_dir: str = "doalab_out"
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)
    layouts: list = field(default_factory=lambda: list(LAYOUTS))
    M_list: list = field(default_factory=lambda: [8, 16, 32, 64])
    apertures: list = field(default_factory=lambda: [15.0, 500.0, 2000.0, 8000.0])
    geometry_csv: str | None = None
    snapshots_csv: str | None = None
    loading_eps: float | None = None
    l1_lambda: float | None = None
    l1_max_iter: int = 300
    cor_tolerance: int = 0
    track_q: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isinf(d["snr_db"]):
            d["snr_db"] = None
            d["noise_off"] = True
        return d

    @property
    def effective_snr(self) -> float:
        return math.inf if self.noise_off else float(self.snr_db)

    def grid(self) -> GridSpec:
        return GridSpec(float(self.delta_deg), float(self.elevation_phi))

    def wave(self) -> WaveConfig:
        return WaveConfig(float(self.speed_c), float(self.frequency_f))

    def validate(self) -> None:
        self.grid()
        try:
            self.wave()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.layout_kind not in LAYOUTS:
            raise InvalidLayoutParams(f"unknown layout {self.layout_kind!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.selection not in ("detect", "relative"):
            raise ConfigError(f"unknown selection rule {self.selection!r}")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        n_src = len(self.angles_deg) if self.angles_deg is not None else self.K
        if self.geometry_csv is None and n_src >= self.M:
            raise TooManySources(f"K={n_src} must be below M={self.M}")
        if self.I is not None and self.geometry_csv is None and not 0 <= self.I < self.M:
            raise ConfigError(f"I={self.I} must lie in [0, M={self.M})")
        if not self.seeds:
            raise ConfigError("seed list is empty")


# ---------------------------------------------------------------------------
# small helpers

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DOALAB_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _sub_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, outputs: list[str],
                    extra: dict | None = None) -> None:
    doc = {"command": command, "version": __version__, "config": cfg.to_dict(),
           "outputs": sorted(outputs)}
    if extra:
        doc.update(extra)
    _write(out / "manifest.json", _json(doc))


def _geometry(cfg: ExperimentConfig, seed: int, *, M=None, V=None, layout=None):
    if cfg.geometry_csv:
        return load_geometry_csv(cfg.geometry_csv)
    return generate(layout or cfg.layout_kind, int(M or cfg.M), float(V or cfg.aperture_V), int(seed))


def _sources(cfg: ExperimentConfig, grid: GridSpec, seed: int, K=None) -> list[int]:
    if cfg.angles_deg is not None and K is None:
        idx = [grid.index_of(a) for a in cfg.angles_deg]
        if len(set(idx)) != len(idx):
            raise ConfigError("source angles collide on the grid")
        return idx
    K = cfg.K if K is None else K
    sep = max(1, int(round(cfg.min_separation_deg / grid.delta_deg)))
    return random_source_indices(grid.R, int(K), np.random.default_rng(seed), sep)


# ---------------------------------------------------------------------------
# estimation core shared by `estimate` and `sweep`

def _estimate_methods(cfg, manifold, X, K_hint, methods, *, I=None, known_K=None):
    """Run each method; return {method: (SpatialSpectrum, extra dict, filter or None)}."""
    out = {}
    for m in methods:
        if m == "ssfns":
            res = run_ssfns(manifold, X, I if I is not None else cfg.I, cfg.P, known_K,
                            selection=cfg.selection, gamma=cfg.gamma,
                            false_alarm=cfg.false_alarm, track_q=cfg.track_q)
            out[m] = (res.spectrum, {"result": res}, res.final_filter)
        elif m == "preliminary":
            f = preliminary_filter(manifold)
            out[m] = (spectrum(f, X, manifold.grid, "preliminary"), {}, f)
        elif m == "cbf":
            out[m] = (cbf_spectrum(manifold, X), {}, None)
        elif m == "mvdr":
            out[m] = (mvdr_spectrum(manifold, X, cfg.loading_eps), {}, None)
        elif m == "music":
            if not K_hint:
                log.warning("music skipped: number of sources unknown or zero")
                continue
            out[m] = (music_spectrum(manifold, X, int(K_hint)), {}, None)
        elif m == "l1":
            out[m] = (l1_spectrum(manifold, X, cfg.l1_lambda, cfg.l1_max_iter), {}, None)
    return out


def _baseline_json(spec, K_hint, cfg) -> dict:
    d = spec.grid.delta_deg
    n = int(K_hint) if K_hint else 5
    return {
        "method": spec.method,
        "peaks_deg": [round(i * d, 10) for i in spec.peaks(n)],
        "flags": spec.flags,
        "config": cfg.to_dict(),
    }


# ---------------------------------------------------------------------------
# subcommands

def cmd_geometry(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    geom = _geometry(cfg, cfg.seeds[0])
    _write(out / "geometry.csv", geometry_csv_text(geom))
    _write(out / "summary.json", _json(geom.summary()))
    _write_manifest(out, "geometry", cfg, ["geometry.csv", "summary.json"])
    return 0


def cmd_estimate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.seeds[0])
    _, src_seed, scene_seed = _sub_seeds(seed, 3)
    geom = _geometry(cfg, seed)
    grid, wave = cfg.grid(), cfg.wave()
    manifold = build_manifold(geom, wave, grid)
    outputs = []
    truth = None
    if cfg.snapshots_csv:
        X = load_snapshots_csv(cfg.snapshots_csv, expected_M=geom.M)
        K_hint = cfg.K if cfg.angles_deg is None else len(cfg.angles_deg)
    else:
        src = _sources(cfg, grid, src_seed)
        if len(src) >= geom.M:
            raise TooManySources(f"K={len(src)} must be below M={geom.M}")
        scene = simulate_scene(manifold, src, cfg.T, cfg.effective_snr, cfg.coherent, scene_seed)
        X = scene.X
        truth = set(src)
        K_hint = len(src)
        _write(out / "scene.json", _json(scene.manifest(grid.delta_deg)))
        outputs.append("scene.json")
    results = _estimate_methods(cfg, manifold, X, K_hint, cfg.methods)
    extra = {}
    for name, (spec, info, _filt) in results.items():
        _write(out / f"spectrum_{name}.csv", spec.csv_text())
        if name == "ssfns":
            doc = info["result"].to_json()
            doc["config"] = {"run": doc["config"], "experiment": cfg.to_dict()}
            if truth is not None:
                doc["true_thetas_deg"] = sorted(round(i * grid.delta_deg, 10) for i in truth)
                exact = set(info["result"].estimated_thetas) == truth
                doc["exact_recovery"] = exact
                extra["exact_recovery"] = exact
        else:
            doc = _baseline_json(spec, K_hint, cfg)
        _write(out / f"result_{name}.json", _json(doc))
        outputs += [f"spectrum_{name}.csv", f"result_{name}.json"]
    _write_manifest(out, "estimate", cfg, outputs, {"geometry": geom.summary()})
    if cfg.noise_off and truth is not None and "ssfns" in results and not extra.get("exact_recovery"):
        raise ExactRecoveryFailed("noise-free scene was not recovered exactly")
    return 0


def _sweep_cell(cfg: ExperimentConfig, axis: str, value, seed: int) -> list[list]:
    """All long-format rows for one (axis value, seed) cell."""
    _, src_seed, scene_seed = _sub_seeds(seed, 3)
    M, V, T, snr, K = cfg.M, cfg.aperture_V, cfg.T, cfg.effective_snr, None
    I, known_K = cfg.I, None
    if axis == "M":
        M = int(value)
    elif axis == "aperture":
        V = float(value)
    elif axis == "snapshots":
        T = int(value)
    elif axis == "snr":
        snr = float(value)
    elif axis == "K":
        K = int(value)
    geom = _geometry(cfg, seed, M=M, V=V)
    grid, wave = cfg.grid(), cfg.wave()
    manifold = build_manifold(geom, wave, grid)
    src = _sources(cfg, grid, src_seed, K)
    if len(src) >= geom.M:
        raise TooManySources(f"K={len(src)} must be below M={geom.M}")
    scene = simulate_scene(manifold, src, T, snr, cfg.coherent, scene_seed)
    rows = []

    def emit(method, name, val):
        rows.append([method, axis, value, seed, name, float(val)])

    def filter_metrics(method, filt, q_excl=None, q_filter=None):
        if q_excl is not None:
            emit(method, "q", weight_stats(q_filter or filt, manifold, q_excl).q)
        emit(method, "ESA", esa(filt, manifold, scene.S))
        emit(method, "NSA", nsa(filt, scene.N))
        emit(method, "CA", ca(filt, scene.X, scene.S))
        er = energy_ratios(filt, manifold, scene.S, scene.N, scene.K)
        emit(method, "SIR_B_db", er.SIR_B_db)
        emit(method, "SNR_B_db", er.SNR_B_db)
        emit(method, "SNIR_B_db", er.SNIR_B_db)

    if axis == "iterations":
        t = int(value)
        if not 0 <= t < geom.M:
            raise ConfigError(f"iteration count {t} must lie in [0, M={geom.M})")
        res = run_ssfns(manifold, scene.X, t, 0.0, selection=cfg.selection,
                        gamma=cfg.gamma, false_alarm=cfg.false_alarm)
        theta = list(res.theta_I)
        it_filter = masked_filter(manifold, theta) if theta else preliminary_filter(manifold)
        filter_metrics("ssfns", res.final_filter, q_excl=theta, q_filter=it_filter)
        emit("ssfns", "COR_db", cor(res.spectrum.power, src, cfg.cor_tolerance))
        return rows

    if axis == "K" and I is None:
        known_K = min(len(src), geom.M - 1)
    results = _estimate_methods(cfg, manifold, scene.X, len(src), cfg.methods, I=I, known_K=known_K)
    for name, (spec, info, filt) in results.items():
        emit(name, "COR_db", cor(spec.power, src, cfg.cor_tolerance) if src else -300.0)
        if name == "ssfns":
            res = info["result"]
            emit(name, "n_estimated", len(res.estimated_thetas))
            emit(name, "exact_recovery", float(set(res.estimated_thetas) == set(src)))
            filter_metrics(name, filt)
        elif name == "preliminary":
            filter_metrics(name, filt)
        elif name == "mvdr":
            emit(name, "rank_deficient", float(spec.flags["rank_deficient"]))
    return rows


def cmd_sweep(cfg: ExperimentConfig) -> int:
    axis = cfg.sweep_axis
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
    if not cfg.sweep_values:
        raise ConfigError("sweep value list is empty")
    if axis == "K" and max(cfg.sweep_values) >= cfg.M:
        raise TooManySources(f"K values must stay below M={cfg.M}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(v, s) for v in cfg.sweep_values for s in cfg.seeds]
    chunks = _pmap(lambda c: _sweep_cell(cfg, axis, c[0], int(c[1])), cells)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LONG_HEADER)
    for rows in chunks:
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    _write(out / "sweep.csv", buf.getvalue())
    _write_manifest(out, "sweep", cfg, ["sweep.csv"])
    return 0


def _array_cell(cfg: ExperimentConfig, layout: str, M: int, V: float, seed: int) -> list:
    geom = generate(layout, M, V, seed)
    manifold = build_manifold(geom, cfg.wave(), cfg.grid())
    filt = preliminary_filter(manifold)
    q = weight_stats(filt, manifold).q
    rng = np.random.default_rng(_sub_seeds(seed, 1)[0])
    N = (rng.standard_normal((M, cfg.T)) + 1j * rng.standard_normal((M, cfg.T))) / math.sqrt(2)
    return [layout, M, float(V), seed, q, ssfa(filt, manifold), nsa(filt, N)]


def cmd_array_study(cfg: ExperimentConfig) -> int:
    bad = [lay for lay in cfg.layouts if lay not in LAYOUTS]
    if bad:
        raise InvalidLayoutParams(f"unknown layouts {bad}")
    if not (cfg.layouts and cfg.M_list and cfg.apertures):
        raise ConfigError("array study needs non-empty layouts, M_list and apertures")
    for lay in cfg.layouts:
        for M in cfg.M_list:
            if lay in ("concentric_circles", "spiral") and M % 8:
                raise InvalidLayoutParams(f"{lay} needs M divisible by 8, got {M}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    random_layouts = ("uniform_random_2d", "normal_random_2d")
    cells = []
    for lay in cfg.layouts:
        for M in cfg.M_list:
            for V in cfg.apertures:
                for s in (cfg.seeds if lay in random_layouts else cfg.seeds[:1]):
                    cells.append((lay, int(M), float(V), int(s)))
    rows = _pmap(lambda c: _array_cell(cfg, *c), cells)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layout", "M", "aperture", "seed", "q", "SSFA", "NSA"])
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    _write(out / "array_study.csv", buf.getvalue())
    _write_manifest(out, "array-study", cfg, ["array_study.csv"])
    return 0


COMMANDS = {
    "geometry": cmd_geometry,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "array-study": cmd_array_study,
}


# ---------------------------------------------------------------------------
# argument parsing

def _num_list(text: str) -> list[float]:
    """``"1,2,5"`` or inclusive ranges ``"start:stop:step"``, mixed with commas."""
    vals: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [float(b) for b in part.split(":")]
            if len(bits) != 3 or bits[2] == 0:
                raise argparse.ArgumentTypeError(f"bad range {part!r}; use start:stop:step")
            start, stop, step = bits
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals += [start + k * step for k in range(max(n, 0))]
        else:
            vals.append(float(part))
    return [int(v) if float(v).is_integer() else v for v in vals]


def _int_list(text: str) -> list[int]:
    vals: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            vals += list(range(int(a), int(b) + 1))
        else:
            vals.append(int(part))
    return vals


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _threshold(text: str):
    return None if text.lower() == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doalab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
        sp.add_argument("--out", dest="output_dir", default=S)
        sp.add_argument("--layout", dest="layout_kind", default=S)
        sp.add_argument("--M", type=int, default=S)
        sp.add_argument("--aperture", dest="aperture_V", type=float, default=S)
        sp.add_argument("--delta", dest="delta_deg", type=float, default=S)
        sp.add_argument("--phi", dest="elevation_phi", type=float, default=S)
        sp.add_argument("--speed", dest="speed_c", type=float, default=S)
        sp.add_argument("--freq", dest="frequency_f", type=float, default=S)
        sp.add_argument("--K", type=int, default=S)
        sp.add_argument("--angles", dest="angles_deg", type=_num_list, default=S)
        sp.add_argument("--T", type=int, default=S)
        sp.add_argument("--snr", dest="snr_db", type=float, default=S)
        sp.add_argument("--noise-off", dest="noise_off", action="store_true", default=S)
        sp.add_argument("--coherent", action="store_true", default=S)
        sp.add_argument("--methods", type=_str_list, default=S)
        sp.add_argument("--I", type=int, default=S)
        sp.add_argument("--P", type=_threshold, default=S, help="peak threshold or 'auto'")
        sp.add_argument("--gamma", type=float, default=S)
        sp.add_argument("--selection", default=S, choices=["detect", "relative"])
        sp.add_argument("--false-alarm", dest="false_alarm", type=float, default=S)
        sp.add_argument("--seeds", type=_int_list, default=S)
        sp.add_argument("--geometry-csv", dest="geometry_csv", default=S)
        sp.add_argument("--snapshots", dest="snapshots_csv", default=S)
        sp.add_argument("--loading-eps", dest="loading_eps", type=float, default=S)
        sp.add_argument("--l1-lambda", dest="l1_lambda", type=float, default=S)
        sp.add_argument("--l1-max-iter", dest="l1_max_iter", type=int, default=S)
        sp.add_argument("--cor-tolerance", dest="cor_tolerance", type=int, default=S)
        sp.add_argument("--track-q", dest="track_q", action="store_true", default=S)
        if name == "sweep":
            sp.add_argument("--axis", dest="sweep_axis", default=S)
            sp.add_argument("--values", dest="sweep_values", type=_num_list, default=S)
        if name == "array-study":
            sp.add_argument("--layouts", type=_str_list, default=S)
            sp.add_argument("--M-list", dest="M_list", type=_int_list, default=S)
            sp.add_argument("--apertures", type=_num_list, default=S)
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")}
    base.update(overrides)
    if base.get("snr_db") is None and "snr_db" in base:
        base["snr_db"] = math.inf
        base["noise_off"] = True
    try:
        cfg = ExperimentConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.geometry_csv:
        cfg.M = load_geometry_csv(cfg.geometry_csv).M
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except CONFIG_ERRORS as exc:
        print(f"doalab: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS + (ExactRecoveryFailed,) as exc:
        print(f"doalab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
