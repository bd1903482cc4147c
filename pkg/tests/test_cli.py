import copy
import json
from importlib import resources

import numpy as np
import pytest
import yaml

from mockdisp import CauchyDispersion
from tflnpair import cli
from tflnpair.config import DEFAULTS, ConfigError, build, default_config_text, load_config
from tflnpair.qpm import spectra as spectra_mod
from tflnpair.qpm.tolerance import SlopeFit

DATA = resources.files("tflnpair") / "data"


def run(args, tmp_path, capsys=None):
    code = cli.main(list(args) + ["--out", str(tmp_path)])
    return code


def envelope(tmp_path, command):
    return json.loads((tmp_path / f"{command}.json").read_text())


def write_cfg(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


# ------------------------------------------------------------------ config

def test_bundled_default_config_matches_defaults():
    assert yaml.safe_load(default_config_text()) == DEFAULTS
    cfg = load_config()
    assert cfg.geometry.base_width_nm == pytest.approx(1346.41, abs=0.01)
    assert cfg.power_chain.transmission == pytest.approx(0.3247, abs=1e-4)
    assert cfg.grid("sfg_telecom_nm").size == 501
    assert cfg.grid("tuning_temperatures_C").tolist() == [25.0, 27.5, 30.0, 32.5, 35.0]


def test_config_hash_tracks_content(tmp_path):
    a = load_config()
    b = load_config(write_cfg(tmp_path, "process:\n  pump_nm: 533\n"))
    assert a.sha256() != b.sha256()
    assert a.sha256() == load_config().sha256()


@pytest.mark.parametrize("text,where", [
    ("geometry:\n  film_thickness_nm: 600\n  colour: red\n", "geometry.colour (line 3)"),
    ("process:\n  pump_nm: fast\n", "process.pump_nm (line 2)"),
    ("geometry:\n  etch_depth_nm: 900\n", "geometry"),
    ("materials:\n  core: unobtainium\n", "materials.core (line 2)"),
    ("solver:\n  sfg_axis_scaling: diagonal\n", "solver.sfg_axis_scaling (line 2)"),
    ("counts:\n  g2_truncation: 10\n", "counts.g2_truncation (line 2)"),
    ("simulation:\n  eta_signal: 1.5\n", "simulation.eta_signal (line 2)"),
    ("grids:\n  idler_nm: {start: 1600, stop: 1500, step: 1}\n", "grids.idler_nm (line 2)"),
    ("format_version: 7\n", "format_version (line 1)"),
    ("geometry: [1, 2]\n", "geometry"),
    ("geometry:\n  film_thickness_nm: 600\n   bad_indent: 1\n", "line 3"),
])
def test_config_errors_name_key_and_line(tmp_path, text, where):
    with pytest.raises(ConfigError) as info:
        load_config(write_cfg(tmp_path, text))
    assert where in str(info.value)


def test_config_error_exit_code(tmp_path, capsys):
    code = run(["design", "--config", write_cfg(tmp_path, "geometry:\n  wdith_um: 1\n")], tmp_path)
    assert code == 2
    report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert report["error"] == "config" and "line 2" in report["message"]


def test_missing_config_file(tmp_path):
    assert run(["design", "--config", str(tmp_path / "nope.yaml")], tmp_path) == 2


def test_material_override_path_is_relative_to_config(tmp_path):
    (tmp_path / "mat.yaml").write_text("materials:\n  - tag: silica\n    kind: constant\n"
                                       "    coefficients: {n: 1.45}\n")
    cfg = load_config(write_cfg(tmp_path, "materials:\n  overrides_file: mat.yaml\n"))
    assert cfg.materials.cladding.kind == "constant"


# ------------------------------------------------------------------ fit

def test_fit_ideal_sample(tmp_path):
    assert run(["fit", str(DATA / "sample_idler_spectrum_ideal.csv")], tmp_path) == 0
    env = envelope(tmp_path, "fit")
    assert env["results"]["length_ratio"] == pytest.approx(1.0, abs=0.005)
    assert env["inputs"]["sample_idler_spectrum_ideal.csv"]
    assert env["config"]["source"] == "<defaults>" and len(env["config"]["sha256"]) == 64
    assert env["format_version"] == 1 and env["tool"] == "tflnpair"


def test_fit_dispersion_free(tmp_path):
    assert run(["fit", str(DATA / "sample_idler_spectrum_ideal.csv"), "--dispersion-free"], tmp_path) == 0
    res = envelope(tmp_path, "fit")["results"]
    assert res["L_eff_mm"] is None and res["width_per_nm"] > 0


def test_fit_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["fit", str(DATA / "sample_idler_spectrum_broadened.csv")], d) == 0
    assert (a / "fit.json").read_bytes() == (b / "fit.json").read_bytes()


@pytest.mark.parametrize("content", ["", "wavelength_nm,intensity\n", "x,y\n1,2,3\n"])
def test_fit_bad_input_exit_4(tmp_path, content):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    assert run(["fit", str(p)], tmp_path) == 4


def test_fit_missing_file_exit_4(tmp_path):
    assert run(["fit", str(tmp_path / "none.csv")], tmp_path) == 4


# ------------------------------------------------------------------ counts

def test_counts_bundled(tmp_path):
    assert run(["counts", str(DATA / "sample_counts.csv")], tmp_path) == 0
    res = envelope(tmp_path, "counts")["results"]
    assert len(res["records"]) == 7 and res["rejected"] == []
    assert set(res["power_slopes"]) == {"idler_singles", "signal_singles", "twofolds", "threefolds"}
    assert res["brightness_at_max_power"]["P_in_W"] == pytest.approx(1.675e-6, rel=1e-3)
    table = np.loadtxt(tmp_path / "counts_table.csv", delimiter=",", skiprows=1)
    assert table.shape == (7, 8)


def test_counts_row_rejection(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# comment\npower_W,t_int_s,tau_c_s,N_s,N_1,N_2,C_s1,C_s2,C_s12\n"
                 "1e-7,1,1e-9,100,50,50,50,50,0\n"
                 "2e-7,1,1e-9,100,50,50,50,50,60\n")
    assert run(["counts", str(p), "--format", "json"], tmp_path) == 0
    env = envelope(tmp_path, "counts")
    assert env["results"]["rejected"][0]["line"] == 4
    assert "C_s12" in env["results"]["rejected"][0]["reason"]
    assert any("line 4" in w for w in env["warnings"])
    rec = env["results"]["records"][0]
    assert rec["eta_signal"]["value"] == 1.0 and rec["eta_idler"]["value"] == 1.0
    assert rec["g2_measured"]["value"] == 0.0
    assert not (tmp_path / "counts_table.csv").exists()


def test_counts_without_input(tmp_path):
    assert run(["counts"], tmp_path) == 4


def test_counts_all_rows_bad(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("power_W,t_int_s,tau_c_s,N_s,N_1,N_2,C_s1,C_s2,C_s12\n1e-7,1,1e-9,1,1,1,5,5,5\n")
    assert run(["counts", str(p)], tmp_path) == 4


def test_counts_simulation_is_seeded(tmp_path):
    cfg = write_cfg(tmp_path, "simulation:\n  trials: 200000\n  mean_photon_numbers: [0.01, 0.05]\n")
    outs = []
    for sub, seed in (("a", "3"), ("b", "3"), ("c", "4")):
        assert run(["counts", "--simulate", "--config", cfg, "--seed", seed], tmp_path / sub) == 0
        outs.append((tmp_path / sub / "counts.json").read_bytes())
    assert outs[0] == outs[1] != outs[2]
    res = json.loads(outs[0])["results"]
    assert len(res["records"]) == 2
    for r in res["records"]:
        assert abs(r["z_eta_signal_vs_expected"]) < 5


# ------------------------------------------------------------------ spectra and design (mock dispersion)

@pytest.fixture
def mock_physics(monkeypatch):
    monkeypatch.setattr(cli, "_dispersion", lambda cfg, T=None: CauchyDispersion(T=cfg.process["temperature_C"] if T is None else T))
    monkeypatch.setattr(spectra_mod, "ModalDispersion", CauchyDispersion)


def test_spectrum_pdc_layout(tmp_path, mock_physics):
    assert run(["spectrum", "pdc"], tmp_path) == 0
    res = envelope(tmp_path, "spectrum_pdc")["results"]
    peaks = [s["peak_signal_nm"] for s in res["spectra"]]
    assert len(peaks) == 5 and all(b < a for a, b in zip(peaks, peaks[1:]))
    assert len(list(tmp_path.glob("pdc_signal_*.csv"))) == 5
    assert res["idler_bandwidth"]["fwhm_GHz"] > 0


def test_spectrum_sfg_dimensions(tmp_path, mock_physics):
    assert run(["spectrum", "sfg"], tmp_path) == 0
    res = envelope(tmp_path, "spectrum_sfg")["results"]
    assert res["shape"] == [7, 501]
    assert res["axis_scaling"] == "window"
    assert np.loadtxt(tmp_path / "sfg_map.csv", delimiter=",", skiprows=1).shape == (7 * 501, 3)


def test_spectrum_tune_rows(tmp_path, mock_physics):
    assert run(["spectrum", "tune"], tmp_path) == 0
    res = envelope(tmp_path, "spectrum_tune")["results"]
    assert [r["temperature_C"] for r in res["table"]] == [25.0, 27.5, 30.0, 32.5, 35.0]
    assert res["slope_signal_nm_per_K"] < 0 < res["slope_idler_nm_per_K"]


def test_numerical_failure_exit_3(tmp_path, mock_physics):
    cfg = write_cfg(tmp_path, "process:\n  spectrum_period_um: 40.0\n")
    assert run(["spectrum", "tune", "--config", cfg], tmp_path) == 3


def _stub_slope(geometry, parameter, *args, **kw):
    slope = {"w": -320.2e3, "h": 332.9e3, "a": -2.3e3, "t": -2.2e6}[parameter]
    x = np.array([0.0, 1.0, 2.0])
    return SlopeFit(parameter, slope, 0.0, x, slope * x, 0.0)


def test_design_wide_rib_warns_multimode(tmp_path, monkeypatch, mock_physics):
    monkeypatch.setattr(cli, "tolerance_slope", _stub_slope)
    cfg = write_cfg(tmp_path, "geometry:\n  top_width_um: 5.0\n")
    assert run(["design", "--config", cfg], tmp_path) == 0
    env = envelope(tmp_path, "design")
    idler = env["results"]["modes"]["idler"]
    assert idler["guided_quasi_te_modes"] > 1
    assert any("multimode" in w for w in env["warnings"])
    res = env["results"]
    assert res["slope_signs"] == {"w": -1, "h": 1, "a": -1, "t": -1}
    assert res["phase_mismatch_sum_per_m"] == pytest.approx(-54230.0)
    lit, cor = res["period_range_um"]["literal"], res["period_range_um"]["corner_scan"]
    assert cor[0] <= lit[0] and cor[1] >= lit[1]
    assert len(res["candidate_periods_um"]) == 5


def test_guided_modes_counts_wide_rib():
    raw = copy.deepcopy(DEFAULTS)
    raw["geometry"]["top_width_um"] = 5.0
    gm = cli.guided_modes(build(raw), 1550.0)
    assert gm["count"] > 1 and all(n > gm["cutoff"] for n in gm["n_eff"])


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert "tflnpair" in capsys.readouterr().out
