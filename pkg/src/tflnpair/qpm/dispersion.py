"""Modal dispersion of one waveguide at one temperature.

Spectra, maps and root searches need thousands of propagation constants, so
the fundamental-mode index is solved on a handful of Chebyshev nodes per
wavelength band and interpolated in between.  Wavelengths outside every
band are solved directly.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C

from ..materials import MaterialSet
from ..modesolver import NotGuidedError, fundamental_n_eff, n_eff as converged_n_eff
from ..waveguide import GridSpec, WaveguideGeometry

DEFAULT_BANDS = ((0.50, 0.56), (0.66, 0.92), (1.30, 2.20))


@dataclass(frozen=True)
class SolverSettings:
    """How effective indices are obtained.

    ``refine=False`` uses one grid of ``pitch`` nm everywhere; differential
    quantities (slopes, bandwidths, tuning rates) are insensitive to the
    residual grid error, which is smooth in wavelength and temperature.
    ``refine=True`` runs the pitch-halving convergence loop per node.
    """

    pitch: float = 20.0
    half_width: float = 3000.0
    substrate_depth: float = 1500.0
    air_height: float = 1500.0
    refine: bool = False
    convergence: float = 2e-4
    interpolate: bool = True
    cheb_nodes: int = 6
    bands: tuple = DEFAULT_BANDS

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.pitch, self.half_width, self.substrate_depth, self.air_height)

    def grid_for(self, geometry: WaveguideGeometry) -> GridSpec:
        """The configured grid, widened for ribs too broad for its window."""
        return self.grid.fitted(geometry)


class ModalDispersion:
    """n_eff(lambda) and beta(lambda) of the fundamental quasi-TE mode."""

    def __init__(self, geometry: WaveguideGeometry, T: float = 25.0,
                 settings: SolverSettings | None = None, materials: MaterialSet | None = None):
        self.geometry = geometry
        self.T = float(T)
        self.settings = settings or SolverSettings()
        self.materials = materials or MaterialSet()
        self._fits = {}
        self._lock = threading.Lock()

    def _solve(self, wl_um: float) -> float:
        s = self.settings
        if s.refine:
            return converged_n_eff(self.geometry, wl_um, self.T, s.convergence, s.grid_for(self.geometry),
                                   self.materials)
        val = fundamental_n_eff(self.geometry, wl_um, self.T, s.grid_for(self.geometry), self.materials)
        if val is None:
            raise NotGuidedError(f"fundamental mode below cutoff at {wl_um * 1e3:.2f} nm", wl_um)
        return val

    def _band_of(self, wl_um):
        for band in self.settings.bands:
            if band[0] <= wl_um <= band[1]:
                return band
        return None

    def _band_fit(self, band):
        with self._lock:
            if band in self._fits:
                return self._fits[band]
        k = self.settings.cheb_nodes
        nodes = np.cos(np.pi * (np.arange(k) + 0.5) / k)[::-1]
        lo, hi = band
        wl = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
        vals = np.array([self._solve(w) for w in wl])
        coef = C.chebfit(nodes, vals, k - 1)
        with self._lock:
            self._fits[band] = coef
        return coef

    def n_eff(self, wl_um):
        """Effective index at vacuum wavelength(s) in um."""
        wl = np.asarray(wl_um, dtype=float)
        out = np.empty(wl.shape)
        flat = wl.ravel()
        res = out.ravel()
        for i, w in enumerate(flat):
            band = self._band_of(w) if self.settings.interpolate else None
            if band is None:
                res[i] = self._solve(float(w))
            else:
                lo, hi = band
                res[i] = C.chebval((2 * w - lo - hi) / (hi - lo), self._band_fit(band))
        return float(out) if out.ndim == 0 else out

    def dn_dwl(self, wl_um: float, step: float = 2e-3) -> float:
        """First wavelength derivative of n_eff in 1/um."""
        band = self._band_of(wl_um) if self.settings.interpolate else None
        if band is not None:
            lo, hi = band
            d = C.chebder(self._band_fit(band))
            return float(C.chebval((2 * wl_um - lo - hi) / (hi - lo), d) * 2 / (hi - lo))
        return float((self.n_eff(wl_um + step) - self.n_eff(wl_um - step)) / (2 * step))

    def group_index(self, wl_um: float) -> float:
        return self.n_eff(wl_um) - wl_um * self.dn_dwl(wl_um)

    def beta(self, wl_nm):
        """Propagation constant in 1/m for vacuum wavelength(s) in nm."""
        wl_nm = np.asarray(wl_nm, dtype=float)
        return 2 * np.pi * self.n_eff(wl_nm * 1e-3) / (wl_nm * 1e-9)
