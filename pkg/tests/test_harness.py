import csv
import json

import pytest

from doalab import build_manifold, generate, simulate_scene
from doalab.harness import LONG_HEADER, ExperimentConfig, main
from doalab.scenesim import snapshots_csv_text


def run(tmp_path, *args):
    return main([args[0], "--out", str(tmp_path), *args[1:]])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_geometry_command(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "geometry", "--layout", "uniform_circle", "--M", "8", "--aperture", "100") == 0
    assert run(b, "geometry", "--layout", "uniform_circle", "--M", "8", "--aperture", "100") == 0
    rows = read_rows(a / "geometry.csv")
    assert rows[0] == ["id", "x_m", "y_m"] and len(rows) == 9
    assert (a / "geometry.csv").read_bytes() == (b / "geometry.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["layout_kind"] == "uniform_circle" and man["config"]["M"] == 8


def test_geometry_bad_layout_exit_2(tmp_path, capsys):
    assert run(tmp_path, "geometry", "--layout", "spiral", "--M", "15") == 2
    assert "InvalidLayoutParams" in capsys.readouterr().err


def test_estimate_worked_example(tmp_path):
    code = run(tmp_path, "estimate", "--M", "16", "--T", "1", "--snr", "20", "--delta", "0.1",
               "--freq", "100", "--speed", "1500", "--angles", "89.9,180.2,270.5",
               "--methods", "ssfns,mvdr,cbf", "--seeds", "0")
    assert code == 0
    res = json.loads((tmp_path / "result_ssfns.json").read_text())
    assert {89.9, 180.2, 270.5} <= set(res["estimated_thetas_deg"])
    mvdr = json.loads((tmp_path / "result_mvdr.json").read_text())
    assert mvdr["flags"]["rank_deficient"] is True
    lines = (tmp_path / "spectrum_mvdr.csv").read_text().splitlines()
    assert lines[0] == "angle_deg,power" and len(lines) == 3601
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert "result_ssfns.json" in man["outputs"] and man["config"]["angles_deg"] == [89.9, 180.2, 270.5]


def test_estimate_noise_off_exact(tmp_path):
    assert run(tmp_path, "estimate", "--noise-off", "--angles", "89.9,180.2,270.5",
               "--methods", "ssfns", "--seeds", "0") == 0
    res = json.loads((tmp_path / "result_ssfns.json").read_text())
    assert res["exact_recovery"] is True


def test_estimate_noise_off_failure_exit_3(tmp_path, monkeypatch):
    import doalab.harness as h
    real = h.run_ssfns

    def blind(*a, **kw):
        kw["known_K"] = None
        return real(a[0], a[1], 0, 0.0)

    monkeypatch.setattr(h, "run_ssfns", blind)
    assert run(tmp_path, "estimate", "--noise-off", "--K", "2", "--methods", "ssfns") == 3
    assert (tmp_path / "manifest.json").exists()


def test_estimate_singular_covariance_exit_3(tmp_path):
    assert run(tmp_path, "estimate", "--methods", "mvdr", "--loading-eps", "0", "--T", "1") == 3


def test_estimate_external_inputs(tmp_path):
    g = generate("uniform_random_2d", 25, 3000.0, 2)
    geo = tmp_path / "g.csv"
    g.to_csv(geo)
    sc = simulate_scene(build_manifold(g), [100, 2000], T=4, snr_db=15.0, seed=1)
    snap = tmp_path / "x.csv"
    snap.write_text(snapshots_csv_text(sc.X))
    out = tmp_path / "o"
    assert run(out, "estimate", "--geometry-csv", str(geo), "--snapshots", str(snap),
               "--K", "2", "--methods", "ssfns,music") == 0
    res = json.loads((out / "result_ssfns.json").read_text())
    assert set(res["estimated_thetas_deg"]) == {10.0, 200.0}
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0\n")
    assert run(tmp_path / "p", "estimate", "--geometry-csv", str(geo), "--snapshots", str(bad)) == 2


def test_sweep_snr_schema_and_reproducibility(tmp_path, monkeypatch):
    args = ["sweep", "--axis", "snr", "--values=-25:25:5", "--methods", "ssfns,mvdr,music,cbf",
            "--seeds", "0-1"]
    assert run(tmp_path / "a", *args) == 0
    monkeypatch.setenv("DOALAB_THREADS", "4")
    assert run(tmp_path / "b", *args) == 0
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    rows = read_rows(tmp_path / "a" / "sweep.csv")
    assert rows[0] == LONG_HEADER
    cor_rows = [r for r in rows[1:] if r[4] == "COR_db"]
    assert {r[0] for r in cor_rows} == {"ssfns", "mvdr", "music", "cbf"}
    assert sorted({int(r[2]) for r in cor_rows}) == list(range(-25, 30, 5))
    assert len(cor_rows) == 4 * 11 * 2


def test_sweep_iterations(tmp_path):
    assert run(tmp_path, "sweep", "--axis", "iterations", "--values", "0:10:1", "--K", "4",
               "--seeds", "0") == 0
    rows = read_rows(tmp_path / "sweep.csv")[1:]
    got = {(r[2], r[4]) for r in rows}
    for t in range(11):
        for name in ("q", "ESA", "NSA", "CA"):
            assert (str(t), name) in got


def test_sweep_errors(tmp_path):
    assert run(tmp_path, "sweep", "--axis", "snr", "--values", "") == 2
    assert run(tmp_path, "sweep", "--axis", "bogus", "--values", "1") == 2
    assert run(tmp_path, "sweep", "--axis", "K", "--values", "3,16") == 2
    assert run(tmp_path, "sweep", "--axis", "iterations", "--values", "16") == 2


@pytest.mark.parametrize("axis,values", [("snapshots", "1,4"), ("K", "1,2"),
                                         ("aperture", "100,8000"), ("M", "8,16")])
def test_sweep_other_axes(tmp_path, axis, values):
    assert run(tmp_path, "sweep", "--axis", axis, "--values", values, "--seeds", "0",
               "--methods", "ssfns,cbf") == 0
    rows = read_rows(tmp_path / "sweep.csv")[1:]
    assert {r[1] for r in rows} == {axis}


def test_array_study(tmp_path):
    args = ["array-study", "--M-list", "8,16", "--apertures", "15,8000", "--seeds", "0,1"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    text = (tmp_path / "a" / "array_study.csv").read_bytes()
    assert text == (tmp_path / "b" / "array_study.csv").read_bytes()
    rows = read_rows(tmp_path / "a" / "array_study.csv")
    assert rows[0] == ["layout", "M", "aperture", "seed", "q", "SSFA", "NSA"]
    ula = [r for r in rows[1:] if r[0] == "uniform_linear"]
    assert ula and all(float(r[4]) > 0.99 for r in ula)
    assert {float(r[2]) for r in rows[1:]} == {15.0, 8000.0}


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"layout_kind": "uniform_circle", "M": 8, "aperture_V": 50.0}))
    out = tmp_path / "o"
    assert main(["geometry", "--config", str(cfg), "--out", str(out), "--M", "16"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["M"] == 16 and man["config"]["aperture_V"] == 50.0
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["geometry", "--config", str(cfg), "--out", str(out)]) == 2
    cfg.write_text("{broken")
    assert main(["geometry", "--config", str(cfg), "--out", str(out)]) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(K=16, M=16).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(delta_deg=0.7).validate()
    ExperimentConfig().validate()


def test_bad_flag_exit_2(tmp_path):
    assert main(["estimate", "--M", "many"]) == 2
    assert main(["nope"]) == 2
