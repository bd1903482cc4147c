"""Sinc^2 fits of measured phase-matching spectra and the effective poled length.

Around the centre wavelength the mismatch is linearised,
delta_beta(lambda) ~= kappa * (lambda - center), so the model is

    I(lambda) = A * sinc^2(kappa * (lambda - center) * L / 2) + offset

with ``kappa`` in 1/(m nm) taken from the dispersion engine.  Without a
dispersion engine only the product kappa * L is identifiable; the fit then
reports the width coefficient and leaves L_eff undefined.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .dispersion import ModalDispersion
from .process import conjugate_wavelength, material_mismatch
from .spectra import Spectrum, fwhm, sinc2

XTOL = 1e-8
MIN_POINTS = 20


class FitError(RuntimeError):
    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


@dataclass
class SincFit:
    center: float                # nm
    amplitude: float
    offset: float
    width: float                 # kappa * L / 2, 1/nm
    L_eff: float | None          # mm; None in dispersion-free mode
    kappa: float | None          # 1/(m nm)
    uncertainties: dict = field(default_factory=dict)
    residual_rms: float = 0.0
    nfev: int = 0
    nominal_length: float | None = None

    @property
    def length_ratio(self) -> float | None:
        if self.L_eff is None or not self.nominal_length:
            return None
        return self.L_eff / self.nominal_length

    def as_dict(self):
        out = dict(center_nm=self.center, amplitude=self.amplitude, offset=self.offset,
                   width_per_nm=self.width, L_eff_mm=self.L_eff, kappa_per_m_nm=self.kappa,
                   residual_rms=self.residual_rms, nfev=self.nfev,
                   nominal_length_mm=self.nominal_length, length_ratio=self.length_ratio)
        out["uncertainties"] = dict(self.uncertainties)
        return out


def mismatch_slope(disp: ModalDispersion, wl_pump: float, center_nm: float,
                   axis: str = "idler", step_nm: float = 0.05) -> float:
    """d(delta_beta)/d(lambda) along one arm at fixed pump, in 1/(m nm)."""
    wl = np.array([center_nm - step_nm, center_nm + step_nm])
    partner = conjugate_wavelength(wl_pump, wl)
    if axis == "idler":
        dk = material_mismatch(disp, wl_pump, partner, wl)
    elif axis == "signal":
        dk = material_mismatch(disp, wl_pump, wl, partner)
    else:
        raise ValueError("axis must be 'signal' or 'idler'")
    return float((dk[1] - dk[0]) / (2 * step_nm))


def sinc_model(wl, center, width, amplitude, offset):
    return amplitude * sinc2(width * (np.asarray(wl, float) - center)) + offset


def fit_sinc(measured: Spectrum, center: float, length_mm: float, kappa: float | None = None,
             max_nfev: int = 2000) -> SincFit:
    """Levenberg-Marquardt fit of the sinc^2 model to ``measured``.

    ``center`` (nm) and ``length_mm`` seed the fit; ``length_mm`` is also
    the nominal length the result is compared with.  ``kappa`` (1/(m nm))
    is the linearised mismatch slope along the measured arm; pass None for
    the dispersion-free mode, in which the initial width comes from the
    half-maximum of the data instead.
    """
    wl, y = measured.wavelength, measured.intensity
    if wl.size < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points, got {wl.size}")
    if length_mm <= 0:
        raise ValueError("nominal length must be positive")
    # sinc^2 half maximum at |x| = 1.39156
    try:
        width_data = 2 * 1.39156 / fwhm(measured)
    except ValueError as exc:
        raise ValueError(f"spectrum does not contain a full main lobe: {exc}") from exc
    if wl[-1] - wl[0] < 2 * (2 * 1.39156 / width_data):
        raise ValueError("spectrum must span at least two nominal FWHM")

    if kappa is not None:
        if kappa == 0 or not np.isfinite(kappa):
            raise ValueError("kappa must be finite and nonzero")
        k = abs(kappa) * 1e-3 / 2          # width per mm of length
        p0 = [center, length_mm, y.max() - y.min(), y.min()]
        to_width = lambda p: k * p[1]      # noqa: E731
    else:
        p0 = [center, width_data, y.max() - y.min(), y.min()]
        to_width = lambda p: p[1]          # noqa: E731

    trace = []

    def resid(p):
        trace.append(np.array(p))
        return sinc_model(wl, p[0], to_width(p), p[2], p[3]) - y

    res = least_squares(resid, p0, method="lm", xtol=XTOL, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_nfev, x_scale=np.abs(p0) + 1e-3)
    if res.status <= 0:
        raise FitError(f"sinc fit did not converge: {res.message}", trace)
    p = res.x
    dof = max(wl.size - p.size, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(p.size, np.nan)
    names = ["center_nm", "L_eff_mm" if kappa is not None else "width_per_nm",
             "amplitude", "offset"]
    unc = dict(zip(names, map(float, err)))
    if kappa is not None:
        if p[1] <= 0:
            raise FitError(f"fit converged to a non-physical length {p[1]:.4g} mm", trace)
        L_eff = float(p[1])
    else:
        L_eff = None
    return SincFit(center=float(p[0]), amplitude=float(p[2]), offset=float(p[3]),
                   width=float(abs(to_width(p))), L_eff=L_eff, kappa=kappa, uncertainties=unc,
                   residual_rms=float(np.sqrt(np.mean(res.fun ** 2))), nfev=int(res.nfev),
                   nominal_length=float(length_mm))
