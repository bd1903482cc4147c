"""PDC spectra, temperature tuning and SFG phase-matching maps."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dispersion import ModalDispersion, SolverSettings
from .process import (PhaseMatchingError, WL_XTOL_NM, conjugate_wavelength, grating_vector,
                      material_mismatch, phase_matched_signal, sum_wavelength)

C_LIGHT = 299_792_458.0


def sinc2(x):
    """(sin x / x)^2 with the removable singularity filled in."""
    return np.sinc(np.asarray(x, float) / np.pi) ** 2


@dataclass
class Spectrum:
    wavelength: np.ndarray          # nm, strictly increasing
    intensity: np.ndarray
    axis_label: str = "signal"

    def __post_init__(self):
        self.wavelength = np.asarray(self.wavelength, float)
        self.intensity = np.asarray(self.intensity, float)
        if self.wavelength.shape != self.intensity.shape or self.wavelength.ndim != 1:
            raise ValueError("wavelength and intensity must be 1D arrays of equal length")
        if self.wavelength.size and np.any(np.diff(self.wavelength) <= 0):
            raise ValueError("wavelength axis must be strictly increasing")
        if not np.all(np.isfinite(self.intensity)):
            raise ValueError("intensities must be finite")
        if self.axis_label not in ("signal", "idler", "sfg"):
            raise ValueError(f"unknown axis label {self.axis_label!r}")

    @property
    def peak_wavelength(self) -> float:
        return float(self.wavelength[np.argmax(self.intensity)])

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.wavelength, self.intensity]), delimiter=",",
                   header=f"{self.axis_label}_wavelength_nm,intensity", comments="", fmt="%.10g")

    @classmethod
    def from_csv(cls, path, axis_label="idler"):
        """Two-column CSV with a one-line header."""
        with open(path) as fh:
            header = fh.readline()
            if not header.strip():
                raise ValueError(f"{path}: empty file")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)   # empty body is reported below
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0 or data.shape[1] != 2:
            raise ValueError(f"{path}: expected two numeric columns below the header")
        order = np.argsort(data[:, 0])
        return cls(data[order, 0], data[order, 1], axis_label)


def wavelength_grid(start, stop, step):
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def pdc_spectrum(disp: ModalDispersion, period_um: float, length_mm: float, wl_pump: float,
                 grid, axis: str = "signal") -> Spectrum:
    """Normalised sinc^2(delta_beta L / 2) phase-matching spectrum for a cw pump.

    ``grid`` is a wavelength array (nm) for the arm named by ``axis``; the
    partner wavelength follows from energy conservation at each point.
    """
    wl = np.asarray(grid, float)
    partner = conjugate_wavelength(wl_pump, wl)
    if axis == "signal":
        dk = material_mismatch(disp, wl_pump, wl, partner)
    elif axis == "idler":
        dk = material_mismatch(disp, wl_pump, partner, wl)
    else:
        raise ValueError("axis must be 'signal' or 'idler'")
    dk = dk - grating_vector(period_um)
    inten = sinc2(dk * length_mm * 1e-3 / 2)
    peak = inten.max()
    if peak <= 0:
        raise PhaseMatchingError("spectrum is identically zero")
    return Spectrum(wl, inten / peak, axis)


def fwhm(spec: Spectrum, frequency: bool = False) -> float:
    """Full width at half maximum of the main peak, in nm or (``frequency``) in GHz."""
    wl, y = spec.wavelength, spec.intensity
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    j = i
    while j > 0 and y[j] > half:
        j -= 1
    k = i
    while k < y.size - 1 and y[k] > half:
        k += 1
    if y[j] > half or y[k] > half:
        raise ValueError("half-maximum not reached inside the spectrum window")
    left = np.interp(half, [y[j], y[j + 1]], [wl[j], wl[j + 1]])
    right = np.interp(half, [y[k], y[k - 1]], [wl[k], wl[k - 1]])
    if frequency:
        return float(C_LIGHT / (left * 1e-9) - C_LIGHT / (right * 1e-9)) * 1e-9
    return float(right - left)


@dataclass
class TuningResult:
    temperatures: np.ndarray
    signal: np.ndarray
    idler: np.ndarray
    slope_signal: float          # nm/K
    slope_idler: float           # nm/K
    slope_inv_signal: float      # d(1/ls)/dT, 1/(nm K)
    slope_inv_idler: float

    def rows(self):
        return [dict(temperature_C=float(t), signal_nm=float(s), idler_nm=float(i))
                for t, s, i in zip(self.temperatures, self.signal, self.idler)]


def temperature_tuning(geometry, period_um: float, wl_pump: float, temperatures,
                       settings: SolverSettings | None = None, materials=None,
                       window=(760.0, 880.0)) -> TuningResult:
    """Phase-matched (signal, idler) peaks versus temperature and their linear slopes."""
    temps = np.asarray(temperatures, float)
    if temps.size < 3:
        raise ValueError("temperature tuning needs at least three temperatures")
    sig, idl = [], []
    for T in temps:
        disp = ModalDispersion(geometry, T, settings, materials)
        try:
            s, i = phase_matched_signal(disp, period_um, wl_pump, window)
        except PhaseMatchingError as exc:
            raise PhaseMatchingError(f"phase matching lost at T = {T} C: {exc}") from exc
        sig.append(s)
        idl.append(i)
    sig, idl = np.array(sig), np.array(idl)
    return TuningResult(temps, sig, idl,
                        float(np.polyfit(temps, sig, 1)[0]), float(np.polyfit(temps, idl, 1)[0]),
                        float(np.polyfit(temps, 1 / sig, 1)[0]), float(np.polyfit(temps, 1 / idl, 1)[0]))


@dataclass
class SfgMap:
    wl_vis: np.ndarray
    wl_telecom: np.ndarray
    intensity: np.ndarray            # shape (n_vis, n_telecom)
    delta_beta: np.ndarray           # 1/m, same shape
    locus: np.ndarray                # (n, 2) points (vis, telecom) with delta_beta = 0
    angle_deg: float
    angle_nm_deg: float
    axis_scaling: str = "window"

    def to_csv(self, path):
        vv, tt = np.meshgrid(self.wl_vis, self.wl_telecom, indexing="ij")
        np.savetxt(path, np.column_stack([vv.ravel(), tt.ravel(), self.intensity.ravel()]),
                   delimiter=",", header="vis_wavelength_nm,telecom_wavelength_nm,intensity",
                   comments="", fmt="%.10g")


def ridge_angle(points, scale=(1.0, 1.0)) -> float:
    """Orientation (degrees) of the total-least-squares line through (vis, telecom) points.

    The telecom wavelength is the abscissa and the visible one the ordinate;
    each axis is divided by its entry in ``scale`` first.
    """
    p = np.asarray(points, float)
    x = p[:, 1] / scale[1]
    y = p[:, 0] / scale[0]
    X = np.column_stack([x - x.mean(), y - y.mean()])
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    dx, dy = vt[0]
    if dx < 0:
        dx, dy = -dx, -dy
    return float(np.degrees(np.arctan2(dy, dx)))


def sfg_map(disp: ModalDispersion, period_um: float, length_mm: float, wl_vis, wl_telecom,
            axis_scaling: str = "window") -> SfgMap:
    """Sum-frequency phase-matching map sinc^2(delta_beta L / 2) over two input grids.

    The ridge angle is the orientation of the delta_beta = 0 locus with the
    telecom axis horizontal.  ``axis_scaling="window"`` measures it with both
    axes normalised to their scan windows (a square plot of the scan);
    ``"nm"`` uses raw nanometres on both axes.  Both values are returned.
    """
    wv = np.asarray(wl_vis, float)
    wt = np.asarray(wl_telecom, float)
    K = grating_vector(period_um)
    VV, TT = np.meshgrid(wv, wt, indexing="ij")
    gen = sum_wavelength(VV, TT)
    dk = disp.beta(gen) - disp.beta(VV) - disp.beta(TT) - K
    inten = sinc2(dk * length_mm * 1e-3 / 2)

    locus = []
    for v in wv:
        def f(t, v=v):
            return float(disp.beta(sum_wavelength(v, t)) - disp.beta(v) - disp.beta(t)) - K
        row = np.array([f(t) for t in wt]) if wt.size <= 64 else None
        if row is None:
            # the row of dk on the grid is already known
            row = dk[np.searchsorted(wv, v)]
        idx = np.nonzero(np.sign(row[:-1]) * np.sign(row[1:]) <= 0)[0]
        for i in idx:
            locus.append((v, brentq(f, wt[i], wt[i + 1], xtol=WL_XTOL_NM)))
    if len(locus) < 2:
        raise PhaseMatchingError("no phasematching in window")
    locus = np.array(locus)
    win = (np.ptp(wv), np.ptp(wt))
    a_win = ridge_angle(locus, win)
    a_nm = ridge_angle(locus)
    angle = {"window": a_win, "nm": a_nm}[axis_scaling]
    return SfgMap(wv, wt, inten, dk, locus, angle, a_nm, axis_scaling)
