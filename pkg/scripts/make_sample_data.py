"""Regenerate the bundled sample datasets in src/tflnpair/data.

    python scripts/make_sample_data.py [--seed 7]

sample_idler_spectrum_ideal.csv
    Idler spectrum of a uniform 3 mm grating (pump 534 nm, designed period),
    computed with the full simulated mismatch, plus 0.5% Gaussian noise.

sample_idler_spectrum_broadened.csv
    The same waveguide with a slow bow of the film thickness along the
    propagation direction, t(z) = t0 + d * (u^2 - 1/3) with u = 2z/L - 1.
    The bow amplitude d is solved for so that the sinc fit of the resulting
    spectrum returns an effective length of 93% of nominal; the field is
    summed over 600 slices, each with the local mismatch.  1% noise added.

sample_counts.csv
    Noise-free, device-like coincidence counts over seven pump powers.  Rates
    follow power laws with exponents 0.92 (idler singles), 0.96 (signal
    singles), 1.08 (twofolds) and 1.85 (threefolds), anchored so that the
    highest power (544 nW after the waveguide) gives a pair rate of
    15.89 MHz and the lowest gives Klyshko efficiencies of 1.08% / 1.1% and
    g2 = 6.7e-3 from about 37 threefolds.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from tflnpair import photonstats as ps
from tflnpair.qpm.dispersion import ModalDispersion
from tflnpair.qpm.fitting import fit_sinc, mismatch_slope
from tflnpair.qpm.process import conjugate_wavelength, grating_vector, material_mismatch, poling_period
from tflnpair.qpm.spectra import Spectrum
from tflnpair.waveguide import WaveguideGeometry

DATA = Path(__file__).resolve().parents[1] / "src" / "tflnpair" / "data"
PUMP, SIGNAL, L_MM, TARGET_RATIO = 534.0, 815.0, 3.0, 0.93
IDLER_GRID = np.round(np.arange(1500.0, 1600.0001, 0.25), 6)
N_SLICES = 600


def _spectrum(dk0, dk_dt, d_nm):
    """|mean over slices of exp(i phase)|^2 for a thickness bow of amplitude d_nm."""
    L = L_MM * 1e-3
    z = (np.arange(N_SLICES) + 0.5) / N_SLICES
    u = 2 * z - 1
    dt = d_nm * (u ** 2 - 1.0 / 3.0)
    dk = dk0[:, None] + dk_dt[:, None] * dt[None, :]
    phase = np.cumsum(dk * L / N_SLICES, axis=1)
    field = np.exp(1j * phase).mean(axis=1)
    y = np.abs(field) ** 2
    return y / y.max()


def spectra(seed: int):
    g = WaveguideGeometry()
    disp = ModalDispersion(g, 25.0)
    disp_t = ModalDispersion(g.with_(t=g.t + 1.0), 25.0)
    period = poling_period(disp, PUMP, SIGNAL)
    sig = conjugate_wavelength(PUMP, IDLER_GRID)
    dk0 = material_mismatch(disp, PUMP, sig, IDLER_GRID) - grating_vector(period)
    dk_dt = material_mismatch(disp_t, PUMP, sig, IDLER_GRID) - material_mismatch(disp, PUMP, sig, IDLER_GRID)

    def fitted_ratio(y):
        spec = Spectrum(IDLER_GRID, y, "idler")
        c = spec.peak_wavelength
        return fit_sinc(spec, c, L_MM, mismatch_slope(disp, PUMP, c)).length_ratio

    d = brentq(lambda d: fitted_ratio(_spectrum(dk0, dk_dt, d)) - TARGET_RATIO, 0.0, 5.0, xtol=1e-4)
    rng = np.random.default_rng(seed)
    ideal = _spectrum(dk0, dk_dt, 0.0) + 0.005 * rng.standard_normal(IDLER_GRID.size)
    broad = _spectrum(dk0, dk_dt, d) + 0.01 * rng.standard_normal(IDLER_GRID.size)
    return period, d, ideal, broad


def counts():
    powers = np.array([76.0, 110.0, 160.0, 230.0, 330.0, 450.0, 544.0]) * 1e-9
    t_int = np.array([5100.0, 3600.0, 2400.0, 1800.0, 1200.0, 900.0, 600.0])
    p_lo, p_hi = powers[0], powers[-1]
    eta_s = 0.0108 * (powers / p_lo) ** (1.08 - 0.92)
    eta_i = 0.0110 * (powers / p_lo) ** (1.08 - 0.96)
    R = 15.89e6 * (powers / p_hi) ** (0.92 + 0.96 - 1.08)
    C = R * eta_s * eta_i                      # twofold rate
    Ns = C / eta_i
    Ni = C / eta_s
    # idler detectors 0.83 / 0.85: split the idler-side rates accordingly
    f1 = 0.83 / (0.83 + 0.85)
    C1, C2 = f1 * C, (1 - f1) * C
    g2_lo = 6.7e-3
    C12_lo = g2_lo * C1[0] * C2[0] / Ns[0]
    C12 = C12_lo * (powers / p_lo) ** 1.85
    recs = []
    for k in range(powers.size):
        t = t_int[k]
        recs.append(ps.CountRecord(
            N_s=round(Ns[k] * t), N_1=round(f1 * Ni[k] * t), N_2=round((1 - f1) * Ni[k] * t),
            C_s1=round(C1[k] * t), C_s2=round(C2[k] * t), C_s12=round(C12[k] * t),
            t_int=t, tau_c=1e-9, P_meas=float(powers[k])))
    return recs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    DATA.mkdir(parents=True, exist_ok=True)
    period, d, ideal, broad = spectra(args.seed)
    Spectrum(IDLER_GRID, ideal, "idler").to_csv(DATA / "sample_idler_spectrum_ideal.csv")
    Spectrum(IDLER_GRID, broad, "idler").to_csv(DATA / "sample_idler_spectrum_broadened.csv")
    print(f"period {period:.5f} um, thickness bow amplitude {d:.4f} nm")
    ps.write_counts_csv(DATA / "sample_counts.csv", counts(),
                        comment="device-like counts generated by scripts/make_sample_data.py")
    print("wrote", *sorted(p.name for p in DATA.glob("sample_*")))


if __name__ == "__main__":
    main()
