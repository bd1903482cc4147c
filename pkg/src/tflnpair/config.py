"""Project configuration: one YAML file, units spelled out in every key name."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .materials import BUILTIN_MODELS, MaterialSet, load_overrides
from .photonstats import PowerChain
from .qpm.dispersion import SolverSettings
from .qpm.spectra import wavelength_grid
from .qpm.tolerance import ToleranceSpec
from .waveguide import WaveguideGeometry

FORMAT_VERSION = 1

DEFAULTS = {
    "format_version": 1,
    "geometry": {
        "film_thickness_nm": 607.0,
        "etch_depth_nm": 300.0,
        "top_width_um": 1.0,
        "sidewall_angle_deg": 30.0,
        "cladding_thickness_nm": 1000.0,
    },
    "materials": {
        "core": "ln_e",
        "cladding": "silica",
        "substrate": "silica",
        "top": "air",
        "overrides_file": None,
    },
    "process": {
        "design_pump_nm": 532.0,
        "design_signal_nm": 810.0,
        "pump_nm": 534.0,
        "signal_nm": 815.0,
        "temperature_C": 25.0,
        "poled_length_mm": 3.0,
        "reference_period_um": None,
        "spectrum_period_um": None,
        "poling_periods_um": [3.266, 3.310, 3.353, 3.397, 3.443],
    },
    "tolerances": {
        "top_width_um": 0.1,
        "etch_depth_um": 0.1,
        "sidewall_angle_deg": 5.0,
        "film_thickness_um": 0.02,
    },
    "power_chain": {
        "facet_reflectivity": 0.1454,
        "lens_reflectivity": 0.05,
        "coupling_efficiency": 0.40,
    },
    "counts": {
        "bandwidth_GHz": 2104.0,
        "subtract_accidentals": False,
        "g2_truncation": 200,
    },
    "simulation": {
        "trials": 10_000_000,
        "mean_photon_numbers": [0.002, 0.005, 0.01, 0.02, 0.05],
        "eta_signal": 0.3,
        "eta_idler": 0.2,
        "coincidence_window_s": 1e-9,
    },
    "grids": {
        "signal_nm": {"start": 710.0, "stop": 900.0, "step": 0.05},
        "idler_nm": {"start": 1450.0, "stop": 1650.0, "step": 0.1},
        "sfg_visible_nm": {"start": 795.0, "stop": 825.0, "step": 5.0},
        "sfg_telecom_nm": {"start": 1500.0, "stop": 1600.0, "step": 0.2},
        "tuning_temperatures_C": {"start": 25.0, "stop": 35.0, "step": 2.5},
    },
    "solver": {
        "pitch_nm": 20.0,
        "half_width_nm": 3000.0,
        "substrate_depth_nm": 1500.0,
        "air_height_nm": 1500.0,
        "refine": False,
        "convergence": 2e-4,
        "cheb_nodes": 6,
        "sfg_axis_scaling": "window",
        "workers": 4,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the key and, when known, the line."""

    def __init__(self, msg, where: str = ""):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where


def _key_lines(node, prefix=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def _merge(defaults, given, path, lines):
    if not isinstance(given, dict):
        raise ConfigError("expected a mapping", _where(path, lines))
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        here = path + (k,)
        if k not in defaults:
            raise ConfigError(f"unknown key {k!r}", _where(here, lines))
        d = defaults[k]
        if isinstance(d, dict):
            out[k] = _merge(d, v, here, lines)
        else:
            out[k] = v
    return out


def _where(path, lines):
    name = ".".join(map(str, path)) or "<root>"
    line = lines.get(tuple(path))
    return f"{name} (line {line})" if line else name


def _num(cfg, path, lines, positive=False, allow_none=False, integer=False):
    node = cfg
    for k in path:
        node = node[k]
    if node is None and allow_none:
        return None
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"expected a number, got {node!r}", _where(path, lines))
    if integer and int(node) != node:
        raise ConfigError(f"expected an integer, got {node!r}", _where(path, lines))
    if not np.isfinite(node) or (positive and node <= 0):
        raise ConfigError(f"expected a {'positive ' if positive else ''}finite number, got {node!r}",
                          _where(path, lines))
    return int(node) if integer else float(node)


@dataclass
class ProjectConfig:
    raw: dict
    geometry: WaveguideGeometry
    materials: MaterialSet
    settings: SolverSettings
    tolerances: ToleranceSpec
    power_chain: PowerChain
    source: str = "<defaults>"

    @property
    def process(self) -> dict:
        return self.raw["process"]

    def grid(self, name: str) -> np.ndarray:
        g = self.raw["grids"][name]
        return wavelength_grid(g["start"], g["stop"], g["step"])

    def sha256(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_config_text() -> str:
    return resources.files("tflnpair").joinpath("data/default_config.yaml").read_text()


def load_config(path=None) -> ProjectConfig:
    """Read, merge over the defaults and validate.  ``path=None`` gives the defaults."""
    if path is None:
        text, source = default_config_text(), "<defaults>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
        source = str(path)
    try:
        given = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text)) if given else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from exc
    given = given or {}
    raw = _merge(DEFAULTS, given, (), lines)
    if raw["format_version"] != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {raw['format_version']!r}",
                          _where(("format_version",), lines))
    return build(raw, lines, source, base_dir=Path(path).parent if path else None)


def build(raw: dict, lines=None, source="<dict>", base_dir=None) -> ProjectConfig:
    lines = lines or {}
    try:
        geometry = WaveguideGeometry(
            t=_num(raw, ("geometry", "film_thickness_nm"), lines, positive=True),
            h=_num(raw, ("geometry", "etch_depth_nm"), lines),
            w=_num(raw, ("geometry", "top_width_um"), lines, positive=True),
            a=_num(raw, ("geometry", "sidewall_angle_deg"), lines),
            c=_num(raw, ("geometry", "cladding_thickness_nm"), lines),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), _where(("geometry",), lines)) from exc

    m = raw["materials"]
    models = dict(BUILTIN_MODELS)
    if m["overrides_file"]:
        p = Path(m["overrides_file"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        try:
            models = load_overrides(p, models)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc), _where(("materials", "overrides_file"), lines)) from exc
    chosen = {}
    for role in ("core", "cladding", "substrate", "top"):
        tag = m[role]
        if tag not in models:
            raise ConfigError(f"unknown material {tag!r}; known: {sorted(models)}",
                              _where(("materials", role), lines))
        chosen[role] = models[tag]
    materials = MaterialSet(**chosen)

    p = raw["process"]
    for key in ("design_pump_nm", "design_signal_nm", "pump_nm", "signal_nm", "poled_length_mm"):
        _num(raw, ("process", key), lines, positive=True)
    _num(raw, ("process", "temperature_C"), lines)
    for key in ("reference_period_um", "spectrum_period_um"):
        _num(raw, ("process", key), lines, positive=True, allow_none=True)
    if not (p["design_pump_nm"] < p["design_signal_nm"] and p["pump_nm"] < p["signal_nm"]):
        raise ConfigError("signal wavelength must exceed the pump wavelength", _where(("process",), lines))
    periods = p["poling_periods_um"]
    if not isinstance(periods, list) or not periods or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in periods):
        raise ConfigError("expected a non-empty list of positive periods",
                          _where(("process", "poling_periods_um"), lines))

    tol = ToleranceSpec(
        dw=_num(raw, ("tolerances", "top_width_um"), lines),
        dh=_num(raw, ("tolerances", "etch_depth_um"), lines),
        da=_num(raw, ("tolerances", "sidewall_angle_deg"), lines),
        dt=_num(raw, ("tolerances", "film_thickness_um"), lines),
    )
    try:
        chain = PowerChain(**{k: _num(raw, ("power_chain", k), lines) for k in raw["power_chain"]})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), _where(("power_chain",), lines)) from exc

    _num(raw, ("counts", "bandwidth_GHz"), lines, positive=True)
    if _num(raw, ("counts", "g2_truncation"), lines, integer=True) < 50:
        raise ConfigError("must be >= 50", _where(("counts", "g2_truncation"), lines))
    if not isinstance(raw["counts"]["subtract_accidentals"], bool):
        raise ConfigError("expected true or false", _where(("counts", "subtract_accidentals"), lines))

    sim = raw["simulation"]
    _num(raw, ("simulation", "trials"), lines, positive=True, integer=True)
    _num(raw, ("simulation", "coincidence_window_s"), lines, positive=True)
    for key in ("eta_signal", "eta_idler"):
        if not 0 < _num(raw, ("simulation", key), lines) <= 1:
            raise ConfigError("efficiency must lie in (0, 1]", _where(("simulation", key), lines))
    if not isinstance(sim["mean_photon_numbers"], list) or not all(
            isinstance(x, (int, float)) and x > 0 for x in sim["mean_photon_numbers"]):
        raise ConfigError("expected a list of positive numbers",
                          _where(("simulation", "mean_photon_numbers"), lines))

    for name, spec in raw["grids"].items():
        for key in ("start", "stop", "step"):
            _num(raw, ("grids", name, key), lines, positive=(key == "step"))
        if spec["stop"] <= spec["start"]:
            raise ConfigError("stop must exceed start", _where(("grids", name), lines))

    s = raw["solver"]
    if s["sfg_axis_scaling"] not in ("window", "nm"):
        raise ConfigError("expected 'window' or 'nm'", _where(("solver", "sfg_axis_scaling"), lines))
    if not isinstance(s["refine"], bool):
        raise ConfigError("expected true or false", _where(("solver", "refine"), lines))
    _num(raw, ("solver", "workers"), lines, positive=True, integer=True)
    try:
        settings = SolverSettings(
            pitch=_num(raw, ("solver", "pitch_nm"), lines, positive=True),
            half_width=_num(raw, ("solver", "half_width_nm"), lines, positive=True),
            substrate_depth=_num(raw, ("solver", "substrate_depth_nm"), lines, positive=True),
            air_height=_num(raw, ("solver", "air_height_nm"), lines, positive=True),
            refine=s["refine"],
            convergence=_num(raw, ("solver", "convergence"), lines, positive=True),
            cheb_nodes=_num(raw, ("solver", "cheb_nodes"), lines, positive=True, integer=True),
        )
        settings.grid  # validates the grid
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), _where(("solver",), lines)) from exc
    return ProjectConfig(raw, geometry, materials, settings, tol, chain, source)
