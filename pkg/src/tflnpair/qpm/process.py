"""Quasi-phase-matching condition, poling period and phase-matched wavelengths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..modesolver import NotGuidedError
from .dispersion import ModalDispersion

# root tolerance on wavelengths, nm
WL_XTOL_NM = 1e-3


class PhaseMatchingError(RuntimeError):
    pass


def conjugate_wavelength(wl_pump_nm, wl_nm):
    """Partner wavelength from energy conservation 1/lp = 1/ls + 1/li (nm)."""
    return 1.0 / (1.0 / np.asarray(wl_pump_nm, float) - 1.0 / np.asarray(wl_nm, float))


def sum_wavelength(wl_a_nm, wl_b_nm):
    """Generated wavelength of sum-frequency mixing of two inputs (nm)."""
    return 1.0 / (1.0 / np.asarray(wl_a_nm, float) + 1.0 / np.asarray(wl_b_nm, float))


@dataclass(frozen=True)
class QpmProcess:
    """Three-wave process: wavelengths in nm, T in C, period in um, length in mm."""

    wl_pump: float
    wl_signal: float
    wl_idler: float
    T: float = 25.0
    period: float = np.inf
    length: float = 3.0

    def __post_init__(self):
        mismatch = 1 / self.wl_pump - 1 / self.wl_signal - 1 / self.wl_idler
        if abs(mismatch) > 1e-9:
            raise ValueError(f"energy conservation violated by {mismatch:.3g} 1/nm")
        if not self.wl_pump < self.wl_signal <= self.wl_idler:
            raise ValueError("need pump < signal <= idler wavelengths")

    @classmethod
    def from_pump_signal(cls, wl_pump, wl_signal, **kw):
        return cls(wl_pump, wl_signal, float(conjugate_wavelength(wl_pump, wl_signal)), **kw)


def _beta(disp: ModalDispersion, wl_nm, field: str):
    try:
        return disp.beta(wl_nm)
    except NotGuidedError as exc:
        raise NotGuidedError(f"{field} field not guided: {exc}", exc.wavelength_um) from exc


def material_mismatch(disp: ModalDispersion, wl_pump, wl_signal, wl_idler):
    """beta_p - beta_s - beta_i in 1/m (no grating term)."""
    return (_beta(disp, wl_pump, "pump") - _beta(disp, wl_signal, "signal")
            - _beta(disp, wl_idler, "idler"))


def grating_vector(period_um: float) -> float:
    return 0.0 if np.isinf(period_um) else 2 * np.pi / (period_um * 1e-6)


def delta_beta(process: QpmProcess, disp: ModalDispersion) -> float:
    """Phase mismatch beta_p - beta_s - beta_i - 2 pi / period in 1/m."""
    return float(material_mismatch(disp, process.wl_pump, process.wl_signal, process.wl_idler)
                 - grating_vector(process.period))


def poling_period(disp: ModalDispersion, wl_pump: float, wl_signal: float) -> float:
    """Period (um) that phase matches pump -> signal + idler."""
    wl_idler = float(conjugate_wavelength(wl_pump, wl_signal))
    dk = float(material_mismatch(disp, wl_pump, wl_signal, wl_idler))
    if not np.isfinite(dk) or dk <= 0:
        raise PhaseMatchingError(f"phase matching impossible: material mismatch {dk:.6g} 1/m")
    return 2 * np.pi / dk * 1e6


def _bracket_root(f, lo, hi, n_scan=41):
    xs = np.linspace(lo, hi, n_scan)
    fs = np.array([f(x) for x in xs])
    sign_change = np.nonzero(np.sign(fs[:-1]) * np.sign(fs[1:]) <= 0)[0]
    if sign_change.size == 0:
        return None
    # the change closest to the window centre
    i = sign_change[np.argmin(np.abs(sign_change - n_scan / 2))]
    return xs[i], xs[i + 1]


def phase_matched_signal(disp: ModalDispersion, period_um: float, wl_pump: float,
                         window=(760.0, 880.0)) -> tuple[float, float]:
    """(signal, idler) in nm phase matched for a fixed pump and period.

    Bracketed Brent search on the signal wavelength inside ``window``; the
    window is clipped so the idler stays inside the telecom band.
    """
    K = grating_vector(period_um)
    bands = disp.settings.bands if disp.settings.interpolate else None
    lo, hi = window
    if bands:
        tele = max(bands, key=lambda b: b[0])
        # idler inside the long-wavelength band
        lo = max(lo, float(conjugate_wavelength(wl_pump, 1e3 * tele[1])) + 1e-6)
        hi = min(hi, float(conjugate_wavelength(wl_pump, 1e3 * tele[0])) - 1e-6)

    def f(ws):
        return float(material_mismatch(disp, wl_pump, ws, conjugate_wavelength(wl_pump, ws))) - K

    br = _bracket_root(f, lo, hi)
    if br is None:
        raise PhaseMatchingError(f"no phase matching for pump {wl_pump} nm, period {period_um} um "
                                 f"with signal in [{lo:.1f}, {hi:.1f}] nm")
    ws = brentq(f, *br, xtol=WL_XTOL_NM)
    return ws, float(conjugate_wavelength(wl_pump, ws))


def phase_matched_idler_fixed_signal(disp: ModalDispersion, period_um: float, wl_signal: float,
                                     window=(1350.0, 1800.0)) -> tuple[float, float]:
    """(pump, idler) in nm phase matched for a fixed signal wavelength and period."""
    K = grating_vector(period_um)

    def f(wi):
        wp = float(1.0 / (1.0 / wl_signal + 1.0 / wi))
        return float(material_mismatch(disp, wp, wl_signal, wi)) - K

    br = _bracket_root(f, *window)
    if br is None:
        raise PhaseMatchingError(f"no phase matching for signal {wl_signal} nm, period {period_um} um")
    wi = brentq(f, *br, xtol=WL_XTOL_NM)
    return float(1.0 / (1.0 / wl_signal + 1.0 / wi)), wi
