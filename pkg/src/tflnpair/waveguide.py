"""Rib-waveguide geometry and its rasterisation onto a uniform grid.

Coordinates: x is horizontal with the rib centred on x = 0, y is vertical
with y = 0 at the interface between the buried oxide and the LN film.  All
lengths inside this module are in nanometres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .materials import MaterialSet


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class WaveguideGeometry:
    """Film thickness t, etch depth h, top width w, sidewall angle a, cladding c.

    ``t``, ``h`` and ``c`` are in nm, ``w`` in um and ``a`` in degrees.  By
    default ``a`` is measured from the vertical so the rib base is
    ``w + 2 h tan(a)`` wide; ``angle_from_horizontal=True`` flips that.
    """

    t: float = 607.0
    h: float = 300.0
    w: float = 1.0
    a: float = 30.0
    c: float = 1000.0
    angle_from_horizontal: bool = False

    def __post_init__(self):
        if not (0 < self.h <= self.t):
            raise GeometryError(f"need 0 < h <= t, got h={self.h} nm, t={self.t} nm")
        if not self.w > 0:
            raise GeometryError(f"top width must be positive, got w={self.w} um")
        if self.angle_from_horizontal:
            if not (0 < self.a <= 90):
                raise GeometryError(f"sidewall angle from horizontal must be in (0, 90], got {self.a}")
        elif not (0 <= self.a < 90):
            raise GeometryError(f"sidewall angle must be in [0, 90), got a={self.a}")
        if self.c < 0:
            raise GeometryError(f"cladding thickness must be >= 0, got c={self.c} nm")

    @property
    def slab(self) -> float:
        """Residual slab thickness t - h in nm."""
        return self.t - self.h

    @property
    def run_per_rise(self) -> float:
        a = np.radians(self.a)
        return 1.0 / np.tan(a) if self.angle_from_horizontal else np.tan(a)

    @property
    def base_width_nm(self) -> float:
        return 1000.0 * self.w + 2.0 * self.h * self.run_per_rise

    @property
    def ln_area_per_rib_nm2(self) -> float:
        """Cross-section area of the trapezoidal rib above the slab."""
        return 0.5 * (1000.0 * self.w + self.base_width_nm) * self.h

    def with_(self, **kw) -> "WaveguideGeometry":
        d = dict(t=self.t, h=self.h, w=self.w, a=self.a, c=self.c,
                 angle_from_horizontal=self.angle_from_horizontal)
        d.update(kw)
        return WaveguideGeometry(**d)

    def surface(self, x_nm):
        """Height of the LN top surface above the oxide at horizontal position x."""
        ax = np.abs(np.asarray(x_nm, dtype=float))
        half_top = 500.0 * self.w
        rise = np.clip((half_top + self.h * self.run_per_rise - ax) / max(self.run_per_rise, 1e-300),
                       0.0, self.h) if self.run_per_rise > 0 else np.where(ax <= half_top, self.h, 0.0)
        return self.slab + rise


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: pitch and window extents in nm.

    The window spans ``[-half_width, half_width]`` horizontally and from
    ``-substrate_depth`` below the film to ``air_height`` above the cladding
    top.
    """

    pitch: float = 20.0
    half_width: float = 3000.0
    substrate_depth: float = 1500.0
    air_height: float = 1500.0
    subsamples: int = 16

    def __post_init__(self):
        if not self.pitch > 0:
            raise GeometryError(f"grid pitch must be positive, got {self.pitch}")
        if self.half_width <= 0 or self.substrate_depth < 0 or self.air_height < 0:
            raise GeometryError("grid padding must be non-negative (half_width > 0)")

    def refined(self, factor: float = 0.5) -> "GridSpec":
        return GridSpec(self.pitch * factor, self.half_width, self.substrate_depth,
                        self.air_height, self.subsamples)

    def fitted(self, geometry: "WaveguideGeometry", margin: float = 2000.0) -> "GridSpec":
        """This grid, widened if needed so ``margin`` nm of bare slab flank the rib base."""
        need = geometry.base_width_nm / 2 + margin
        if self.half_width >= need:
            return self
        half = float(self.pitch * np.ceil(need / self.pitch))
        return GridSpec(self.pitch, half, self.substrate_depth, self.air_height, self.subsamples)


@dataclass(frozen=True, eq=False)
class IndexMap:
    """Refractive index sampled at cell centres; ``values[j, i]`` is row y_j, column x_i."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    dx: float
    dy: float
    wavelength_um: float
    temperature: float
    material_indices: dict
    padding: tuple = ()
    core_fraction: np.ndarray | None = None

    @property
    def nx(self) -> int:
        return self.x.size

    @property
    def ny(self) -> int:
        return self.y.size

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path):
        header = "format_version=1; rows=y_nm (bottom to top); cols=x_nm; first row is x, first column is y"
        out = np.empty((self.ny + 1, self.nx + 1))
        out[0, 0] = np.nan
        out[0, 1:] = self.x
        out[1:, 0] = self.y
        out[1:, 1:] = self.values
        np.savetxt(path, out, delimiter=",", header=header, fmt="%.10g")


def _below_fraction(g, y0, dy):
    # per x-subsample fraction of [y0, y0+dy] lying below the curve g: shape (ny, nx, K)
    return np.clip((g[None, :, :] - y0[:, None, None]) / dy, 0.0, 1.0)


def rasterize(geometry: WaveguideGeometry, wl_um: float, T: float,
              grid: GridSpec | None = None, materials: MaterialSet | None = None,
              averaging: str = "directional") -> IndexMap:
    """Paint the cross-section on ``grid`` at wavelength ``wl_um`` and temperature ``T``.

    Cells cut by an interface get an averaged permittivity.  With
    ``averaging="directional"`` (default) each of ``grid.subsamples`` vertical
    strips is averaged arithmetically along y (exact) and the strips are
    combined harmonically along x, which suits the normal field component at
    sidewalls.  ``averaging="area"`` is the plain arithmetic cell average.
    The stored value is the square root of the averaged permittivity.
    """
    grid = grid or GridSpec()
    materials = materials or MaterialSet()
    idx = materials.indices(wl_um, T)
    p = grid.pitch
    nx = int(np.ceil(2 * grid.half_width / p))
    if nx % 2:
        nx += 1
    y_lo = -grid.substrate_depth
    y_hi = geometry.t + geometry.c + grid.air_height
    ny = int(np.ceil((y_hi - y_lo) / p))
    x = (np.arange(nx) - (nx - 1) / 2.0) * p
    y_edges = y_lo + np.arange(ny + 1) * p
    y = 0.5 * (y_edges[:-1] + y_edges[1:])

    K = grid.subsamples
    sub = ((np.arange(K) + 0.5) / K - 0.5) * p
    xs = x[:, None] + sub[None, :]                 # (nx, K)
    s = geometry.surface(xs)
    y0 = y_edges[:-1]
    below_oxide = _below_fraction(np.zeros_like(s), y0, p)
    below_ln = _below_fraction(s, y0, p)
    below_clad = _below_fraction(s + geometry.c, y0, p)
    f_sub = below_oxide
    f_core = below_ln - below_oxide
    f_clad = below_clad - below_ln
    f_top = 1.0 - below_clad
    # each x-strip of a cell is a stack of layers: average the permittivity
    # over y (field tangential), then combine strips harmonically (field normal)
    eps_strip = (f_sub * idx["substrate"] ** 2 + f_core * idx["core"] ** 2
                 + f_clad * idx["cladding"] ** 2 + f_top * idx["top"] ** 2)
    if averaging == "directional":
        eps = 1.0 / (1.0 / eps_strip).mean(axis=2)
    elif averaging == "area":
        eps = eps_strip.mean(axis=2)
    else:
        raise ValueError(f"unknown averaging {averaging!r}")
    f_core = f_core.mean(axis=2)
    # enforce exact left/right symmetry (geometry is symmetric by construction)
    eps = 0.5 * (eps + eps[:, ::-1])
    return IndexMap(x=x, y=y, values=np.sqrt(eps), dx=p, dy=p, wavelength_um=wl_um,
                    temperature=T, material_indices=idx,
                    padding=(grid.half_width, grid.substrate_depth, grid.air_height),
                    core_fraction=0.5 * (f_core + f_core[:, ::-1]))


def uniform_map(n: float, nx: int, ny: int, pitch: float, wl_um: float, T: float = 24.5) -> IndexMap:
    x = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    y = (np.arange(ny) + 0.5) * pitch
    return IndexMap(x=x, y=y, values=np.full((ny, nx), float(n)), dx=pitch, dy=pitch,
                    wavelength_um=wl_um, temperature=T,
                    material_indices={"core": n, "cladding": n, "substrate": n, "top": n})


def ln_area_nm2(m: IndexMap) -> float:
    """Area occupied by the core material according to the cell fractions."""
    if m.core_fraction is None:
        raise ValueError("index map carries no core fraction")
    return float(m.core_fraction.sum() * m.dx * m.dy)
