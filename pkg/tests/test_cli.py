import csv
import json
import math

import numpy as np
import pytest

from piezomodal.cli import RunConfig, load_config, loglog_svg, main
from piezomodal.errors import ConfigError

FAST = ["--grid.n", "16", "--modes.J", "8"]


def _report(out, command):
    (path,) = out.glob(f"{command}-*-report.json")
    return json.loads(path.read_text())


def _checks(report):
    return {c["name"]: c for c in report["checks"]}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------- config


def test_defaults_and_overrides():
    cfg = load_config(overrides={"grid.n": "64", "damping.shape": "smooth-ramp", "damping.eps": "0.05"})
    assert cfg["grid.n"] == 64
    assert cfg["params.alpha"] == 2.0
    assert cfg.profile().shape == "smooth-ramp"
    assert load_config(overrides={"damping.d0": "0"}).profile() is None


def test_ini_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[grid]\nn = 24\n\n[modes]\nJ = 3\n\n[params]\ngamma = 0.25\n")
    cfg = load_config(ini)
    assert (cfg["grid.n"], cfg["modes.J"], cfg["params.gamma"]) == (24, 3, 0.25)
    assert cfg.fingerprint() != RunConfig().fingerprint()


@pytest.mark.parametrize(
    "overrides,key",
    [
        ({"grid.nn": "3"}, "grid.nn"),
        ({"grid.n": "1"}, "grid.n"),
        ({"grid.n": "2.5"}, "grid.n"),
        ({"time.dt": "-1"}, "time.dt"),
        ({"params.alpha": "0.1"}, "params.alpha"),
        ({"damping.shape": "box"}, "damping.shape"),
        ({"analysis.fit_t2": "5"}, "analysis.fit_t2"),
        ({"bogus.key": "1"}, "bogus.key"),
    ],
)
def test_config_errors_name_the_key(overrides, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(overrides=overrides)


def test_fingerprint_stable():
    assert RunConfig().fingerprint() == RunConfig().fingerprint()
    a = load_config(overrides={"run.seed": "1"})
    assert a.fingerprint() != RunConfig().fingerprint()


# -------------------------------------------------------------------- simulate


def test_simulate_default_physics_monotone(tmp_path):
    # default physics, grid and mode count; shortened horizon
    code = main(["--out", str(tmp_path), "simulate", "--time.T", "5"])
    assert code == 0
    (path,) = tmp_path.glob("simulate-*[0-9a-f].csv")
    rows = _rows(path)
    assert rows[0] == ["t", "E", "P"]
    E = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(E) <= 0)
    meta = json.loads(next(tmp_path.glob("simulate-*-metadata.json")).read_text())
    assert meta["config"]["time"]["T"] == 5.0
    assert _checks(_report(tmp_path, "simulate"))["energy_monotone"]["status"] == "pass"


def test_simulate_undamped_constant(tmp_path):
    assert main(["--out", str(tmp_path), "simulate", *FAST, "--time.T", "3", "--damping.d0", "0"]) == 0
    (path,) = tmp_path.glob("simulate-*[0-9a-f].csv")
    E = np.array([float(r[1]) for r in _rows(path)[1:]])
    assert np.max(np.abs(E - E[0])) <= 1e-9 * E[0]


def test_malformed_key_exit_2(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "simulate", "--grid.nn", "3"])
    assert code == 2
    assert "grid.nn" in capsys.readouterr().err
    rep = _report(tmp_path, "simulate")
    assert rep["exit_code"] == 2 and "grid.nn" in rep["error"]


def test_malformed_ini_exit_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[time]\ndt = fast\n")
    assert main(["--config", str(ini), "--out", str(tmp_path / "o"), "simulate"]) == 2
    assert "time.dt" in capsys.readouterr().err


def test_stray_argument_exit_2(tmp_path):
    assert main(["--out", str(tmp_path), "simulate", "oops"]) == 2


# -------------------------------------------------------------------- spectrum


def test_spectrum_rows_and_sign(tmp_path):
    assert main(["--out", str(tmp_path), "spectrum", "--grid.n", "16", "--modes.j_max", "32"]) == 0
    (path,) = tmp_path.glob("spectrum-*.csv")
    rows = _rows(path)
    assert rows[0] == ["j", "abscissa", "min_abs_real"]
    assert len(rows) - 1 == 33
    assert all(float(r[1]) < 0 for r in rows[1:])


def test_spectrum_undamped_zero(tmp_path):
    assert main(["--out", str(tmp_path), "spectrum", "--grid.n", "16", "--modes.j_max", "6", "--damping.d0", "0"]) == 0
    (path,) = tmp_path.glob("spectrum-*.csv")
    assert all(abs(float(r[1])) <= 1e-10 for r in _rows(path)[1:])


def test_spectrum_deterministic_across_workers(tmp_path):
    args = ["spectrum", "--grid.n", "12", "--modes.j_max", "6"]
    assert main(["--out", str(tmp_path / "a"), "--workers", "1", *args]) == 0
    assert main(["--out", str(tmp_path / "b"), "--workers", "3", *args]) == 0
    for suffix in (".csv", ".json"):
        (fa,) = (tmp_path / "a").glob(f"spectrum-*[0-9a-f]{suffix}")
        fb = tmp_path / "b" / fa.name
        assert fa.read_bytes() == fb.read_bytes()


# ------------------------------------------------------------------- resolvent


def test_resolvent_outputs(tmp_path):
    code = main(["--out", str(tmp_path), "resolvent", "--grid.n", "8", "--analysis.lambda_min", "1", "--analysis.lambda_max", "100"])
    assert code == 0
    (path,) = tmp_path.glob("resolvent-*.csv")
    rows = _rows(path)
    assert rows[0] == ["lambda", "sup_resolvent_norm", "argmax_mode"]
    assert len(rows) - 1 == 13
    data = json.loads(next(tmp_path.glob("resolvent-*[0-9a-f].json")).read_text())
    assert math.isfinite(data["exponent"]) and data["exponent_stderr"] > 0
    svg = next(tmp_path.glob("resolvent-*.svg")).read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_resolvent_two_point_grid(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "resolvent", "--grid.n", "8", "--analysis.lambda_points", "2"]) == 2
    assert "lambda_points" in capsys.readouterr().err


def test_resolvent_tail_audit_failure(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "resolvent", "--grid.n", "8", "--analysis.j_cap", "1"])
    assert code == 3
    assert "ModeCutoffSuspect" in capsys.readouterr().err
    assert _checks(_report(tmp_path, "resolvent"))["ModeCutoffSuspect"]["status"] == "fail"


# ----------------------------------------------------------------------- decay


def _synthetic(tmp_path):
    t = np.linspace(0, 200, 2001)
    path = tmp_path / "series.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "E", "P"])
        for a, b in zip(t, 1 / (1 + t)):
            w.writerow([repr(float(a)), repr(float(b)), "0.0"])
    return path


def test_decay_from_file(tmp_path):
    src = _synthetic(tmp_path)
    assert main(["--out", str(tmp_path / "o"), "decay", "--series-from-file", str(src)]) == 0
    data = json.loads(next((tmp_path / "o").glob("decay-*[0-9a-f].json")).read_text())
    assert data["kappa"] == pytest.approx(1.0, abs=0.01)
    assert data["source"] == "file"


def test_decay_window_outside_data(tmp_path):
    src = _synthetic(tmp_path)
    assert main(["--out", str(tmp_path / "o"), "decay", "--series-from-file", str(src), "--analysis.fit_t2", "1000"]) == 2


def test_decay_simulated_short(tmp_path):
    code = main(["--out", str(tmp_path), "decay", *FAST, "--time.T", "20", "--analysis.fit_t1", "1", "--analysis.fit_t2", "20"])
    assert code == 0
    data = json.loads(next(tmp_path.glob("decay-*[0-9a-f].json")).read_text())
    assert data["kappa"] > 0
    assert next(tmp_path.glob("decay-*-series.csv")).exists()


# ----------------------------------------------------------------------- check


def test_check_small_grid_skips_convergence(tmp_path):
    main(["--out", str(tmp_path), "check", "--grid.n", "2"])
    checks = _checks(_report(tmp_path, "check"))
    conv = checks["convergence_order"]
    assert conv["status"] == "skip" and "grid.n=2" in conv["detail"]
    for name in ("dissipation_identity", "conservation_undamped", "energy_budget"):
        assert checks[name]["status"] == "pass"


def test_check_small_grid_others_pass(tmp_path):
    main(["--out", str(tmp_path), "check", "--grid.n", "2"])
    checks = _checks(_report(tmp_path, "check"))
    failed = [n for n, c in checks.items() if c["status"] == "fail"]
    assert failed == []


def test_check_default_all_pass(tmp_path):
    code = main(["--out", str(tmp_path), "check"])
    checks = _checks(_report(tmp_path, "check"))
    assert [n for n, c in checks.items() if c["status"] != "pass"] == []
    assert code == 0


def test_check_fault_injection(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "check", "--grid.n", "2", "--inject-fault", "dd"])
    assert code == 3
    assert "dissipation_identity" in capsys.readouterr().err
    assert _checks(_report(tmp_path, "check"))["dissipation_identity"]["status"] == "fail"


# ---------------------------------------------------------------------- output


def test_files_named_by_fingerprint(tmp_path):
    main(["--out", str(tmp_path), "spectrum", "--grid.n", "8", "--modes.j_max", "2"])
    rep = _report(tmp_path, "spectrum")
    prefix = rep["fingerprint"][:16]
    for f in rep["files"]:
        assert prefix in f
    assert rep["version"]
    assert "eig" in rep["timings"]


def test_refuses_to_overwrite_other_fingerprint(tmp_path):
    args = ["--out", str(tmp_path), "spectrum", "--grid.n", "8", "--modes.j_max", "2"]
    assert main(args) == 0
    manifest = tmp_path / "manifest.json"
    data = json.loads(manifest.read_text())
    name = next(k for k in data if k.endswith(".csv"))
    data[name] = "0" * 64
    manifest.write_text(json.dumps(data))
    assert main(args) == 2


def test_svg_writer(tmp_path):
    x = np.geomspace(1, 100, 10)
    p = loglog_svg(x, 3 * x**2, tmp_path / "p.svg", fit=(3.0, 2.0))
    text = p.read_text()
    assert text.count("<polyline") == 2 and "slope 2.000" in text
