"""Fabrication-tolerance budget: phase-mismatch slopes and poling-period ranges."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from ..modesolver import NotGuidedError
from .dispersion import ModalDispersion, SolverSettings
from .process import (conjugate_wavelength, grating_vector, material_mismatch,
                      phase_matched_idler_fixed_signal, phase_matched_signal)

PARAMETERS = ("w", "h", "a", "t")

# per-parameter sampling defaults (geometry units) and conversion to slope units:
# w in um already, h and t in nm -> um, a in degrees
UNIT_SCALE = {"w": 1.0, "h": 1e-3, "a": 1.0, "t": 1e-3}
SLOPE_UNITS = {"w": "1/(m um)", "h": "1/(m um)", "a": "1/(m deg)", "t": "1/(m um)"}


def default_samples(geometry, parameter: str) -> np.ndarray:
    """Sample values bracketing the nominal value by the default tolerance."""
    nominal = getattr(geometry, parameter)
    if parameter == "w":
        return np.round(np.arange(0.8, 1.2001, 0.1), 10) + (nominal - 1.0)
    span = {"h": (100.0, 50.0), "a": (5.0, 2.5), "t": (20.0, 10.0)}[parameter]
    return nominal + np.arange(-span[0], span[0] + 1e-9, span[1])


class ToleranceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToleranceSpec:
    """Signed fabrication deviations: dw, dh, dt in um, da in degrees."""

    dw: float = 0.1
    dh: float = 0.1
    da: float = 5.0
    dt: float = 0.02


@dataclass
class SlopeFit:
    parameter: str
    slope: float                 # 1/m per um (or per degree)
    intercept: float
    samples: np.ndarray          # parameter values in slope units
    delta_beta: np.ndarray       # 1/m
    residual_rms: float

    @property
    def units(self) -> str:
        return SLOPE_UNITS[self.parameter]


@dataclass
class SlopeSet:
    """d(delta_beta)/d(parameter) for top width, etch depth, sidewall angle, film thickness."""

    dbeta_dw: float
    dbeta_dh: float
    dbeta_da: float
    dbeta_dt: float
    fits: dict = field(default_factory=dict)

    def __post_init__(self):
        if not all(np.isfinite([self.dbeta_dw, self.dbeta_dh, self.dbeta_da, self.dbeta_dt])):
            raise ValueError("slopes must be finite")

    @classmethod
    def from_fits(cls, fits: dict) -> "SlopeSet":
        return cls(fits["w"].slope, fits["h"].slope, fits["a"].slope, fits["t"].slope, dict(fits))

    def as_dict(self):
        return dict(w=self.dbeta_dw, h=self.dbeta_dh, a=self.dbeta_da, t=self.dbeta_dt)


# reference device slopes, used to check the budget arithmetic
REFERENCE_SLOPES = SlopeSet(dbeta_dw=-320.2e3, dbeta_dh=332.9e3, dbeta_da=-2.3e3, dbeta_dt=-2.2e6)


def tolerance_slope(geometry, parameter: str, period_ref_um: float, wl_pump: float,
                    wl_signal: float, samples=None, T: float = 25.0,
                    settings: SolverSettings | None = None, materials=None) -> SlopeFit:
    """Linear fit of delta_beta at a fixed period against one geometry parameter.

    The three wavelengths are held fixed; every other parameter stays at its
    nominal value.  The intercept is fitted freely.
    """
    if parameter not in PARAMETERS:
        raise ValueError(f"parameter must be one of {PARAMETERS}")
    samples = default_samples(geometry, parameter) if samples is None else np.asarray(samples, float)
    if samples.size < 3:
        raise ValueError("need at least three samples")
    wl_idler = float(conjugate_wavelength(wl_pump, wl_signal))
    K = grating_vector(period_ref_um)
    # three fixed wavelengths per sample: direct solves beat building band fits
    settings = replace(settings or SolverSettings(), interpolate=False)
    dks, failed = [], []
    for v in samples:
        g = geometry.with_(**{parameter: float(v)})
        disp = ModalDispersion(g, T, settings, materials)
        try:
            dks.append(float(material_mismatch(disp, wl_pump, wl_signal, wl_idler)) - K)
        except NotGuidedError as exc:
            failed.append((float(v), str(exc)))
    if failed:
        raise ToleranceError(f"cutoff at samples {failed}")
    x = samples * UNIT_SCALE[parameter]
    dks = np.array(dks)
    # centred normal equations: exact zero slope for parameter-independent data
    xc, yc = x - x.mean(), dks - dks.mean()
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(dks.mean() - slope * x.mean())
    resid = yc - slope * xc
    return SlopeFit(parameter, float(slope), float(intercept), x, dks,
                    float(np.sqrt(np.mean(resid ** 2))))


def phase_mismatch_sum(slopes: SlopeSet, deltas: ToleranceSpec) -> float:
    """Signed linear budget sum_k slope_k * delta_k, summed in the order w, h, a, t."""
    total = slopes.dbeta_dw * deltas.dw
    total += slopes.dbeta_dh * deltas.dh
    total += slopes.dbeta_da * deltas.da
    total += slopes.dbeta_dt * deltas.dt
    return total


def poling_period_range(dbeta0: float, dbeta_sum: float = 0.0, mode: str = "literal",
                        slopes: SlopeSet | None = None, box: ToleranceSpec | None = None):
    """(min, max) period in um from 2 pi / (dbeta0 +- dbeta_sum).

    ``dbeta0`` is the nominal mismatch without the grating term, i.e.
    2 pi / nominal period.  ``mode="corner_scan"`` takes the extreme budget
    over all 16 sign corners of ``box`` instead of the single signed sum.
    """
    if mode == "literal":
        lo_dk, hi_dk = dbeta0 - abs(dbeta_sum), dbeta0 + abs(dbeta_sum)
    elif mode == "corner_scan":
        if slopes is None or box is None:
            raise ValueError("corner_scan needs slopes and a tolerance box")
        sums = [phase_mismatch_sum(slopes, ToleranceSpec(sw * box.dw, sh * box.dh,
                                                          sa * box.da, st * box.dt))
                for sw, sh, sa, st in itertools.product((-1, 1), repeat=4)]
        lo_dk, hi_dk = dbeta0 + min(sums), dbeta0 + max(sums)
    else:
        raise ValueError("mode must be 'literal' or 'corner_scan'")
    if lo_dk <= 0:
        raise ToleranceError(f"period range undefined: denominator {lo_dk:.6g} 1/m <= 0")
    return 2 * np.pi / hi_dk * 1e6, 2 * np.pi / lo_dk * 1e6


def candidate_periods(range_um, count: int = 5) -> np.ndarray:
    return np.linspace(range_um[0], range_um[1], count)


def thickness_shift(geometry, period_um: float, wl_pump: float, wl_signal: float,
                    dt_nm: float = 1.0, hold: str = "signal", T: float = 25.0,
                    settings: SolverSettings | None = None, materials=None) -> float:
    """Shift (nm) of the phase-matched idler when the film grows by ``dt_nm``.

    ``hold="signal"`` keeps the signal wavelength fixed and lets the pump
    follow; ``hold="pump"`` keeps the pump fixed.  ``period_um`` is the
    period phase matching the nominal geometry.
    """
    out = []
    for g in (geometry, geometry.with_(t=geometry.t + dt_nm)):
        disp = ModalDispersion(g, T, settings, materials)
        if hold == "signal":
            out.append(phase_matched_idler_fixed_signal(disp, period_um, wl_signal)[1])
        elif hold == "pump":
            out.append(phase_matched_signal(disp, period_um, wl_pump)[1])
        else:
            raise ValueError("hold must be 'signal' or 'pump'")
    return out[1] - out[0]
