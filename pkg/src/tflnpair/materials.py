"""Temperature dependent refractive indices for the thin-film LN stack.

Lithium niobate (5 mol% MgO doped, congruent) uses the extended Sellmeier form
of Gayer et al., Appl. Phys. B 91, 343 (2008)::

    n^2 = a1 + b1 f + (a2 + b2 f) / (lam^2 - (a3 + b3 f)^2)
             + (a4 + b4 f) / (lam^2 - a5^2) - a6 lam^2
    f   = (T - 24.5) (T + 570.82)

with lam in micrometres and T in degrees Celsius.  Fused silica uses the
three-term Malitson (1965) Sellmeier equation without temperature dependence
and air is exactly 1.

Coefficient sets live in a small built-in table.  Users may override or add
materials with a YAML file of the form::

    format_version: 1
    materials:
      - tag: ln_e
        kind: gayer            # gayer | sellmeier3 | constant
        source: "my fit, 2025"
        coefficients: {a1: 5.756, ..., b4: 1.516e-4}
        wavelength_range_um: [0.5, 4.0]
        temperature_range_C: [20, 200]

Any key omitted from an override falls back to the built-in entry with the
same tag.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np
import yaml

T_REF = 24.5
# second root of the thermal factor; f(T) = (T - T_REF)(T - T_ROOT2)
T_ROOT2 = -570.82

TABLE_VERSION = "1"

MATERIAL_TAGS = ("ln_e", "ln_o", "silica", "air")


class MaterialDomainError(ValueError):
    """Raised when a wavelength or temperature lies outside a model's range."""


def thermal_factor(T):
    """Gayer temperature parameter f = (T - 24.5)(T + 570.82)."""
    T = np.asarray(T, dtype=float)
    return (T - T_REF) * (T - T_ROOT2)


@dataclass(frozen=True)
class DispersionModel:
    material_tag: str
    kind: str
    coefficients: Mapping[str, float]
    valid_wavelength_range: tuple[float, float]
    valid_temperature_range: tuple[float, float] = (20.0, 200.0)
    reference_temperature: float = T_REF
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coefficients", MappingProxyType(dict(self.coefficients)))
        if self.kind not in ("gayer", "sellmeier3", "constant"):
            raise ValueError(f"unknown dispersion kind {self.kind!r}")
        lo, hi = self.valid_wavelength_range
        if not 0 < lo < hi:
            raise ValueError(f"bad wavelength range {self.valid_wavelength_range}")

    def __hash__(self):
        return hash((self.material_tag, self.kind, tuple(sorted(self.coefficients.items())),
                     self.valid_wavelength_range, self.valid_temperature_range))

    def __eq__(self, other):
        if not isinstance(other, DispersionModel):
            return NotImplemented
        return hash(self) == hash(other) and dict(self.coefficients) == dict(other.coefficients)

    def check_domain(self, wl_um, T):
        wl = np.asarray(wl_um, dtype=float)
        lo, hi = self.valid_wavelength_range
        if np.any(~np.isfinite(wl)) or np.any(wl < lo) or np.any(wl > hi):
            raise MaterialDomainError(
                f"{self.material_tag}: wavelength {wl_um} um outside valid range [{lo}, {hi}] um")
        if self.kind == "gayer":
            T_arr = np.asarray(T, dtype=float)
            tlo, thi = self.valid_temperature_range
            if np.any(~np.isfinite(T_arr)) or np.any(T_arr < tlo) or np.any(T_arr > thi):
                raise MaterialDomainError(
                    f"{self.material_tag}: temperature {T} C outside valid range [{tlo}, {thi}] C")

    def n_squared(self, wl_um, T, f=None):
        c = self.coefficients
        wl = np.asarray(wl_um, dtype=float)
        if self.kind == "constant":
            return np.full_like(wl, c["n"] ** 2)
        l2 = wl ** 2
        if self.kind == "sellmeier3":
            return (1.0 + c["B1"] * l2 / (l2 - c["C1"]) + c["B2"] * l2 / (l2 - c["C2"])
                    + c["B3"] * l2 / (l2 - c["C3"]))
        if f is None:
            f = thermal_factor(T)
        return (c["a1"] + c["b1"] * f
                + (c["a2"] + c["b2"] * f) / (l2 - (c["a3"] + c["b3"] * f) ** 2)
                + (c["a4"] + c["b4"] * f) / (l2 - c["a5"] ** 2)
                - c["a6"] * l2)


_GAYER_RANGE = (0.5, 4.0)

BUILTIN_MODELS: dict[str, DispersionModel] = {
    "ln_e": DispersionModel(
        "ln_e", "gayer",
        dict(a1=5.756, a2=0.0983, a3=0.2020, a4=189.32, a5=12.52, a6=1.32e-2,
             b1=2.860e-6, b2=4.700e-8, b3=6.113e-8, b4=1.516e-4),
        _GAYER_RANGE,
        source="Gayer et al., Appl. Phys. B 91, 343 (2008), 5% MgO:CLN, n_e",
    ),
    "ln_o": DispersionModel(
        "ln_o", "gayer",
        dict(a1=5.653, a2=0.1185, a3=0.2091, a4=89.61, a5=10.85, a6=1.97e-2,
             b1=7.941e-7, b2=3.134e-8, b3=-4.641e-9, b4=-2.188e-6),
        _GAYER_RANGE,
        source="Gayer et al., Appl. Phys. B 91, 343 (2008), 5% MgO:CLN, n_o",
    ),
    "silica": DispersionModel(
        "silica", "sellmeier3",
        dict(B1=0.6961663, B2=0.4079426, B3=0.8974794,
             C1=0.0684043 ** 2, C2=0.1162414 ** 2, C3=9.896161 ** 2),
        (0.21, 3.71),
        source="Malitson, JOSA 55, 1205 (1965), fused silica at 20 C",
    ),
    "air": DispersionModel("air", "constant", dict(n=1.0), (0.1, 100.0), source="n = 1 exactly"),
}


def refractive_index(model: DispersionModel, wl_um, T=T_REF):
    """Refractive index n(lam, T); ``wl_um`` in micrometres, ``T`` in Celsius.

    Accepts scalars or arrays and raises :class:`MaterialDomainError` outside
    the model's validity window.
    """
    model.check_domain(wl_um, T)
    n = np.sqrt(model.n_squared(wl_um, T))
    return float(n) if np.ndim(n) == 0 else n


# step for the central differences below, in micrometres
DERIV_STEP_UM = 1e-3


def index_derivative(model: DispersionModel, wl_um: float, T: float = T_REF, order: int = 1,
                     step: float = DERIV_STEP_UM) -> float:
    """d^k n / d lam^k in um^-k by fourth-order central differences.

    The five-point stencil needs two steps of margin on each side of ``wl_um``
    inside the valid range.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    lo, hi = model.valid_wavelength_range
    if not (lo + 2 * step < wl_um < hi - 2 * step):
        raise MaterialDomainError(
            f"{model.material_tag}: wavelength {wl_um} um needs a margin of {2 * step} um "
            f"inside [{lo}, {hi}] um")
    h = step
    x = wl_um + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    n = np.sqrt(model.n_squared(x, T))
    if order == 1:
        return float(((n[0] - n[4]) + 8 * (n[3] - n[1])) / (12 * h))
    d = n - n[2]
    return float((16 * (d[1] + d[3]) - (d[0] + d[4])) / (12 * h * h))


def group_index(model: DispersionModel, wl_um: float, T: float = T_REF) -> float:
    return refractive_index(model, wl_um, T) - wl_um * index_derivative(model, wl_um, T)


@dataclass(frozen=True)
class MaterialSet:
    """Indices used to paint a cross-section: core film, cladding, substrate, top."""

    core: DispersionModel = BUILTIN_MODELS["ln_e"]
    cladding: DispersionModel = BUILTIN_MODELS["silica"]
    substrate: DispersionModel = BUILTIN_MODELS["silica"]
    top: DispersionModel = BUILTIN_MODELS["air"]

    def indices(self, wl_um, T):
        return {
            "core": refractive_index(self.core, wl_um, T),
            "cladding": refractive_index(self.cladding, wl_um, T),
            "substrate": refractive_index(self.substrate, wl_um, T),
            "top": refractive_index(self.top, wl_um, T),
        }


def load_overrides(path, base: Mapping[str, DispersionModel] | None = None) -> dict[str, DispersionModel]:
    """Merge a YAML override file into a copy of ``base`` (default: built-ins)."""
    models = dict(BUILTIN_MODELS if base is None else base)
    raw = yaml.safe_load(Path(path).read_text())
    if (not isinstance(raw, dict) or not isinstance(raw.get("materials"), list)
            or not all(isinstance(e, dict) and "tag" in e for e in raw["materials"])):
        raise ValueError(f"{path}: expected a mapping with a 'materials' list of entries with a 'tag'")
    if int(raw.get("format_version", 1)) != 1:
        raise ValueError(f"{path}: unsupported format_version {raw.get('format_version')}")
    allowed = {"tag", "kind", "source", "coefficients", "wavelength_range_um", "temperature_range_C"}
    for i, entry in enumerate(raw["materials"]):
        unknown = set(entry) - allowed
        if unknown:
            raise ValueError(f"{path}: materials[{i}] has unknown keys {sorted(unknown)}")
        tag = entry["tag"]
        old = models.get(tag)
        if old is None and "kind" not in entry:
            raise ValueError(f"{path}: new material {tag!r} needs a 'kind'")
        coeffs = dict(old.coefficients) if old is not None and entry.get("kind", old.kind) == old.kind else {}
        coeffs.update({k: float(v) for k, v in entry.get("coefficients", {}).items()})
        kw = dict(
            material_tag=tag,
            kind=entry.get("kind", old.kind if old else None),
            coefficients=coeffs,
            valid_wavelength_range=tuple(entry.get("wavelength_range_um",
                                                   old.valid_wavelength_range if old else (0.1, 10.0))),
            valid_temperature_range=tuple(entry.get("temperature_range_C",
                                                    old.valid_temperature_range if old else (20.0, 200.0))),
            source=entry.get("source", f"override from {Path(path).name}"),
        )
        models[tag] = DispersionModel(**kw)
    return models
