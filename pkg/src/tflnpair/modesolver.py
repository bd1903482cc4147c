"""Semivectorial finite-difference solver for quasi-TE guided modes.

The dominant field is the horizontal electric component E_x, sampled at cell
centres.  It obeys

    d/dx[ (1/n^2) d(n^2 E_x)/dx ] + d^2 E_x/dy^2 + k0^2 n^2 E_x = beta^2 E_x

which carries the normal-field jump condition across vertical interfaces
(sidewalls) while E_x stays continuous across horizontal ones.  The operator
is scaled by 1/k0^2 so that its eigenvalues are n_eff^2.  Eigenpairs come from
ARPACK in shift-invert mode around just below the largest index in the map;
the shifted operator is factorised once with SuperLU.  The window edges are
Dirichlet walls.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .materials import MaterialSet
from .waveguide import GridSpec, IndexMap, WaveguideGeometry, rasterize

log = logging.getLogger(__name__)


class ModeSolverError(RuntimeError):
    pass


class NotGuidedError(ModeSolverError):
    """No guided mode above cutoff; carries the wavelength that failed."""

    def __init__(self, msg, wavelength_um=None):
        super().__init__(msg)
        self.wavelength_um = wavelength_um


class ConvergenceError(ModeSolverError):
    def __init__(self, msg, sequence=()):
        super().__init__(msg)
        self.sequence = list(sequence)


@dataclass
class GuidedMode:
    n_eff: float
    wavelength_um: float
    temperature: float
    field: np.ndarray
    x: np.ndarray
    y: np.ndarray
    residual: float
    # semivectorial: the whole field is the dominant component
    polarization_fraction: float = 1.0

    @property
    def beta(self) -> float:
        """Propagation constant in 1/m."""
        return 2 * np.pi * self.n_eff / (self.wavelength_um * 1e-6)

    def to_csv(self, path):
        out = np.empty((self.y.size + 1, self.x.size + 1))
        out[0, 0] = np.nan
        out[0, 1:] = self.x
        out[1:, 0] = self.y
        out[1:, 1:] = self.field
        np.savetxt(path, out, delimiter=",", fmt="%.10g",
                   header=f"format_version=1; n_eff={self.n_eff:.10f}; wavelength_um={self.wavelength_um}")


class ModeList(list):
    """Guided modes in descending n_eff plus solver diagnostics.

    An empty list means the structure is below cutoff at this wavelength;
    ``cutoff`` holds the index a mode has to exceed to count as guided.
    """

    def __init__(self, modes=(), cutoff=np.nan, diagnostics=None):
        super().__init__(modes)
        self.cutoff = cutoff
        self.diagnostics = diagnostics or {}

    @property
    def below_cutoff(self) -> bool:
        return len(self) == 0


def _x_coefficients(eps, dx, sym):
    """Off-diagonal and diagonal x-terms of the semivectorial E_x operator.

    ``eps`` has shape (ny, nx).  ``sym`` is 0 (Dirichlet on both sides),
    +1 or -1 (mirror plane on the left edge, even or odd field).
    """
    ny, nx = eps.shape
    ghost_l = eps[:, :1]
    ghost_r = eps[:, -1:]
    e_ext = np.hstack([ghost_l, eps, ghost_r])
    eh_r = 0.5 * (e_ext[:, 1:-1] + e_ext[:, 2:])
    eh_l = 0.5 * (e_ext[:, 1:-1] + e_ext[:, :-2])
    right = e_ext[:, 2:] / eh_r / dx ** 2      # couples E_i to E_{i+1}
    left = e_ext[:, :-2] / eh_l / dx ** 2      # couples E_i to E_{i-1}
    diag = -eps * (1.0 / eh_r + 1.0 / eh_l) / dx ** 2
    if sym:
        diag[:, 0] += sym * left[:, 0]
    right[:, -1] = 0.0
    left[:, 0] = 0.0
    return left, right, diag


def build_operator(eps, dx, dy, k0, sym=0):
    """Sparse operator whose eigenvalues are n_eff^2; lengths in um, ``k0`` in 1/um."""
    ny, nx = eps.shape
    left, right, diag_x = _x_coefficients(eps, dx, sym)
    diag = diag_x - 2.0 / dy ** 2 + k0 ** 2 * eps
    N = nx * ny
    up = np.full(N - nx, 1.0 / dy ** 2)
    A = sp.diags(
        [diag.ravel(), right.ravel()[:-1], left.ravel()[1:], up, up],
        [0, 1, -1, nx, -nx], shape=(N, N), format="csc",
    )
    return A / k0 ** 2


def slab_operator(eps_column, dy, k0):
    """1D TE operator (field tangential to the layers) for a stack sampled along y."""
    n = eps_column.size
    main = -2.0 / dy ** 2 + k0 ** 2 * eps_column
    off = np.full(n - 1, 1.0 / dy ** 2)
    return sp.diags([main, off, off], [0, 1, -1], format="csc") / k0 ** 2


def slab_modes(eps_column, dy_um, wavelength_um, n_modes=1):
    """Effective indices of the TE slab modes of one column, descending.

    Dense solve; the column is small.  Returns indices above the larger of
    the two outer-layer indices only.
    """
    k0 = 2 * np.pi / wavelength_um
    A = slab_operator(np.asarray(eps_column, float), dy_um, k0).toarray()
    w = np.linalg.eigvalsh(A)
    cut = max(eps_column[0], eps_column[-1])
    w = w[w > cut][::-1]
    return np.sqrt(w[:n_modes])


def guiding_cutoff(m: IndexMap) -> float:
    """Index a 2D mode must exceed: outer layers and the lateral slab background."""
    eps = m.values ** 2
    dy = m.dy * 1e-3
    outer = max(eps[0].max(), eps[-1].max())
    bg = []
    for col in (eps[:, 0], eps[:, -1]):
        ns = slab_modes(col, dy, m.wavelength_um, 1)
        if ns.size:
            bg.append(ns[0] ** 2)
    return float(np.sqrt(max([outer] + bg)))


def _start_vector(eps):
    # deterministic: weight by local permittivity excess
    v = eps - eps.min() + 1e-3
    return (v / np.linalg.norm(v)).ravel()


def solve_modes(m: IndexMap, n_modes: int = 1, symmetry: str = "none",
                tol: float = 0.0, maxiter: int = 5000) -> ModeList:
    """Guided quasi-TE modes of ``m`` in descending n_eff.

    ``symmetry`` may be ``"even"`` or ``"odd"`` to solve only the right half
    of a mirror-symmetric map with the corresponding parity of E_x.  Fewer
    than ``n_modes`` (possibly zero) modes come back when fewer are guided.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    sym = {"none": 0, "even": 1, "odd": -1}[symmetry]
    eps_full = m.values ** 2
    if sym:
        if m.nx % 2 or not np.array_equal(eps_full, eps_full[:, ::-1]):
            raise ValueError("symmetry requested for a map that is not mirror symmetric")
        eps = eps_full[:, m.nx // 2:]
    else:
        eps = eps_full
    dx, dy = m.dx * 1e-3, m.dy * 1e-3
    k0 = 2 * np.pi / m.wavelength_um
    cutoff = guiding_cutoff(m)
    n_max = float(np.sqrt(eps.max()))
    diagnostics = dict(cutoff=cutoff, n_max=n_max, shape=list(eps.shape))
    if n_max <= cutoff:
        return ModeList([], cutoff, diagnostics)

    A = build_operator(eps, dx, dy, k0, sym)
    N = A.shape[0]
    k = min(n_modes + 2, N - 2)
    shift = (0.999 * n_max) ** 2
    try:
        vals, vecs = spla.eigs(A, k=k, sigma=shift, which="LM", v0=_start_vector(eps),
                               tol=tol, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise ModeSolverError(f"ARPACK did not converge: {exc}") from exc
    order = np.argsort(-vals.real)
    modes = []
    for idx in order:
        lam = vals[idx].real
        if lam <= cutoff ** 2 or lam > eps.max():
            continue
        v = vecs[:, idx]
        v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
        v = v.real
        resid = np.linalg.norm(A @ v - lam * v) / max(np.linalg.norm(A @ v), 1e-300)
        f = v.reshape(eps.shape)
        if sym:
            f = np.hstack([sym * f[:, ::-1], f])
        f = f / np.sqrt((f ** 2).sum() * dx * dy)
        if f.flat[np.argmax(np.abs(f))] < 0:
            f = -f
        modes.append(GuidedMode(float(np.sqrt(lam)), m.wavelength_um, m.temperature, f,
                                m.x, m.y, float(resid)))
        if len(modes) == n_modes:
            break
    edge = 0.0
    if modes:
        f0 = np.abs(modes[0].field)
        edge = float(max(f0[0].max(), f0[-1].max(), f0[:, 0].max(), f0[:, -1].max()) / f0.max())
    diagnostics.update(found=len(modes), residuals=[md.residual for md in modes], edge_ratio=edge)
    log.debug("solve_modes %s", diagnostics)
    return ModeList(modes, cutoff, diagnostics)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def fundamental_n_eff(geometry: WaveguideGeometry, wl_um: float, T: float, grid: GridSpec,
                      materials: MaterialSet | None = None):
    """Fundamental-mode index on one grid, or None below cutoff.  Memoised."""
    materials = materials or MaterialSet()
    key = (geometry, round(float(wl_um), 12), round(float(T), 9), grid, materials)
    with _CACHE_LOCK:
        if key in _CACHE:
            return _CACHE[key]
    modes = solve_modes(rasterize(geometry, wl_um, T, grid, materials), 1, "even")
    val = modes[0].n_eff if modes else None
    with _CACHE_LOCK:
        _CACHE[key] = val
    return val


def n_eff(geometry: WaveguideGeometry, wl_um: float, T: float = 24.5, convergence: float = 2e-4,
          grid: GridSpec | None = None, materials: MaterialSet | None = None,
          max_refinements: int = 3, extrapolate: bool = True) -> float:
    """Grid-converged effective index of the fundamental quasi-TE mode.

    Halves the pitch of ``grid`` until two successive values differ by less
    than ``convergence`` and returns a Richardson estimate (second order)
    from the last two.  Raises :class:`NotGuidedError` if the mode is below
    cutoff on every grid tried and :class:`ConvergenceError` if the target
    is not met after ``max_refinements`` halvings.
    """
    if convergence < 1e-5:
        raise ValueError("convergence target must be >= 1e-5")
    grid = grid or GridSpec()
    seq = []
    g = grid
    for level in range(max_refinements + 1):
        val = fundamental_n_eff(geometry, wl_um, T, g, materials)
        seq.append((g.pitch, val))
        log.info("n_eff refine wl=%.4f um T=%.2f pitch=%.3g nm -> %s", wl_um, T, g.pitch, val)
        if len(seq) >= 2 and seq[-1][1] is not None and seq[-2][1] is not None:
            prev, cur = seq[-2][1], seq[-1][1]
            if abs(cur - prev) < convergence:
                return cur + (cur - prev) / 3.0 if extrapolate else cur
        g = g.refined(0.5)
    if all(v is None for _, v in seq):
        raise NotGuidedError(f"fundamental mode below cutoff at {wl_um} um on all grids", wl_um)
    raise ConvergenceError(f"n_eff at {wl_um} um did not converge to {convergence}", seq)
