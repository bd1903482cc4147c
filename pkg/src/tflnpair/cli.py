"""Command-line front end.

    tflnpair design                       poling period, tolerance slopes, period range
    tflnpair spectrum pdc|sfg|tune        phase-matching spectra, SFG map, temperature tuning
    tflnpair fit SPECTRUM.csv             sinc fit and effective poled length
    tflnpair counts COUNTS.csv            photon statistics from coincidence counts
    tflnpair counts --simulate            the same on Monte-Carlo counts

Every command writes ``<command>.json`` (a results envelope carrying the
config hash, tool version and input digests) and, with ``--format csv`` or
``both``, CSV tables into ``--out``.  Exit codes: 0 success, 2 config error,
3 numerical failure, 4 input-data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import photonstats as ps
from .config import FORMAT_VERSION, ConfigError, load_config
from .modesolver import solve_modes
from .qpm.dispersion import ModalDispersion
from .qpm.fitting import fit_sinc, mismatch_slope
from .qpm.process import conjugate_wavelength, poling_period
from .qpm.spectra import Spectrum, fwhm, pdc_spectrum, sfg_map, temperature_tuning
from .qpm.tolerance import (PARAMETERS, SlopeSet, candidate_periods, phase_mismatch_sum,
                            poling_period_range, tolerance_slope)
from .waveguide import rasterize

log = logging.getLogger("tflnpair")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INPUT = 0, 2, 3, 4


class InputDataError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, ps.Estimate):
        return _jsonable(obj.as_dict())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects warnings, inputs and artifacts of one command invocation."""

    def __init__(self, args, cfg):
        self.args, self.cfg = args, cfg
        self.out = Path(args.out)
        self.warnings: list[str] = []
        self.inputs: dict[str, str] = {}
        self.csv = args.format in ("csv", "both")
        self.json = args.format in ("json", "both")

    def warn(self, msg):
        log.warning(msg)
        self.warnings.append(msg)

    def add_input(self, path):
        try:
            self.inputs[Path(path).name] = _digest(path)
        except OSError as exc:
            raise InputDataError(f"cannot read {path}: {exc}") from exc

    def write_csv(self, name, header, rows):
        if not self.csv:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        np.savetxt(self.out / name, np.asarray(rows, float), delimiter=",", header=",".join(header),
                   comments="", fmt="%.10g")

    def envelope(self, command, results):
        cfg = self.cfg
        return _jsonable({
            "format_version": FORMAT_VERSION,
            "tool": "tflnpair",
            "version": __version__,
            "command": command,
            "config": {"source": cfg.source, "sha256": cfg.sha256()},
            "inputs": dict(sorted(self.inputs.items())),
            "seed": self.args.seed,
            "warnings": self.warnings,
            "results": results,
        })

    def emit(self, command, results):
        env = self.envelope(command, results)
        if self.json:
            self.out.mkdir(parents=True, exist_ok=True)
            path = self.out / f"{command.replace(' ', '_')}.json"
            path.write_text(json.dumps(env, indent=2, sort_keys=True) + "\n")
        return env


def _dispersion(cfg, T=None):
    return ModalDispersion(cfg.geometry, cfg.process["temperature_C"] if T is None else T,
                           cfg.settings, cfg.materials)


def _spectrum_period(cfg, disp):
    p = cfg.process
    if p["spectrum_period_um"] is not None:
        return float(p["spectrum_period_um"])
    return poling_period(disp, p["pump_nm"], p["signal_nm"])


def guided_modes(cfg, wl_nm, n_max=4) -> dict:
    """Guided quasi-TE modes on the configured grid: indices and the cutoff they clear."""
    m = rasterize(cfg.geometry, wl_nm * 1e-3, cfg.process["temperature_C"],
                  cfg.settings.grid_for(cfg.geometry), cfg.materials)
    ml = solve_modes(m, n_modes=n_max)
    return dict(count=len(ml), n_eff=[md.n_eff for md in ml], cutoff=ml.cutoff)


# ------------------------------------------------------------------ commands

def cmd_design(run: Run) -> dict:
    cfg = run.cfg
    p = cfg.process
    wp, ws = p["design_pump_nm"], p["design_signal_nm"]
    wi = float(conjugate_wavelength(wp, ws))
    disp = _dispersion(cfg)

    modes = {}
    for name, wl in (("pump", wp), ("signal", ws), ("idler", wi)):
        gm = guided_modes(cfg, wl)
        modes[name] = dict(wavelength_nm=wl, n_eff=disp.n_eff(wl * 1e-3),
                           guided_quasi_te_modes=gm["count"], mode_indices=gm["n_eff"],
                           cutoff_index=gm["cutoff"])
    idler = modes["idler"]
    if idler["guided_quasi_te_modes"] != 1:
        margin = idler["mode_indices"][-1] - idler["cutoff_index"]
        run.warn(f"multimode: {idler['guided_quasi_te_modes']} guided quasi-TE modes at the idler "
                 f"wavelength {wi:.1f} nm (highest-order mode {margin:.2e} above cutoff)")

    period = poling_period(disp, wp, ws)
    ref = p["reference_period_um"] or period
    workers = int(cfg.raw["solver"]["workers"])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        fits = list(pool.map(lambda k: tolerance_slope(
            cfg.geometry, k, ref, wp, ws, T=p["temperature_C"], settings=cfg.settings,
            materials=cfg.materials), PARAMETERS))
    fits = dict(zip(PARAMETERS, fits))
    slopes = SlopeSet.from_fits(fits)
    budget = phase_mismatch_sum(slopes, cfg.tolerances)
    dbeta0 = 2 * math.pi / (period * 1e-6)
    literal = poling_period_range(dbeta0, budget, "literal")
    corner = poling_period_range(dbeta0, mode="corner_scan", slopes=slopes, box=cfg.tolerances)
    candidates = candidate_periods(literal)

    thick = abs(slopes.dbeta_dt)
    dominance = thick / max(abs(slopes.dbeta_dw), abs(slopes.dbeta_dh))
    run.write_csv("design_slopes.csv", ["parameter_index", "slope", "intercept", "residual_rms"],
                  [[i, f.slope, f.intercept, f.residual_rms] for i, f in enumerate(fits.values())])
    rows = [[i, x, d] for i, f in enumerate(fits.values()) for x, d in zip(f.samples, f.delta_beta)]
    run.write_csv("design_slope_samples.csv", ["parameter_index", "value", "delta_beta_per_m"], rows)
    print(f"poling period {period:.4f} um; range {literal[0]:.3f}-{literal[1]:.3f} um")
    return dict(
        wavelengths_nm=dict(pump=wp, signal=ws, idler=wi),
        modes=modes,
        poling_period_um=period,
        reference_period_um=ref,
        slopes={k: dict(slope=f.slope, units=f.units, intercept=f.intercept,
                        residual_rms=f.residual_rms, samples=f.samples, delta_beta=f.delta_beta)
                for k, f in fits.items()},
        slope_signs={k: int(np.sign(v)) for k, v in slopes.as_dict().items()},
        thickness_dominance=dominance,
        tolerances=dict(dw_um=cfg.tolerances.dw, dh_um=cfg.tolerances.dh,
                        da_deg=cfg.tolerances.da, dt_um=cfg.tolerances.dt),
        phase_mismatch_sum_per_m=budget,
        delta_beta0_per_m=dbeta0,
        period_range_um=dict(literal=literal, corner_scan=corner),
        candidate_periods_um=candidates,
    )


def cmd_spectrum_pdc(run: Run) -> dict:
    cfg = run.cfg
    p = cfg.process
    disp = _dispersion(cfg)
    L = p["poled_length_mm"]
    grid = cfg.grid("signal_nm")
    per_period = []
    for period in p["poling_periods_um"]:
        spec = pdc_spectrum(disp, period, L, p["pump_nm"], grid, "signal")
        i = int(np.argmax(spec.intensity))
        if i in (0, grid.size - 1):
            run.warn(f"period {period} um: spectrum peak at the edge of the signal grid")
        try:
            width = fwhm(spec)
        except ValueError:
            width = float("nan")
        per_period.append(dict(period_um=period, peak_signal_nm=spec.peak_wavelength,
                               peak_idler_nm=float(conjugate_wavelength(p["pump_nm"], spec.peak_wavelength)),
                               fwhm_nm=width))
        if run.csv:
            run.out.mkdir(parents=True, exist_ok=True)
            spec.to_csv(run.out / f"pdc_signal_{period:.3f}um.csv")

    period = _spectrum_period(cfg, disp)
    idl = pdc_spectrum(disp, period, L, p["pump_nm"], cfg.grid("idler_nm"), "idler")
    if run.csv:
        idl.to_csv(run.out / "pdc_idler.csv")
    bw = dict(period_um=period, peak_idler_nm=idl.peak_wavelength, fwhm_nm=fwhm(idl),
              fwhm_GHz=fwhm(idl, frequency=True))
    print(f"idler FWHM {bw['fwhm_GHz']:.0f} GHz at period {period:.4f} um")
    return dict(pump_nm=p["pump_nm"], poled_length_mm=L, spectra=per_period, idler_bandwidth=bw)


def cmd_spectrum_sfg(run: Run) -> dict:
    cfg = run.cfg
    p = cfg.process
    disp = _dispersion(cfg)
    period = _spectrum_period(cfg, disp)
    m = sfg_map(disp, period, p["poled_length_mm"], cfg.grid("sfg_visible_nm"),
                cfg.grid("sfg_telecom_nm"), cfg.raw["solver"]["sfg_axis_scaling"])
    if run.csv:
        run.out.mkdir(parents=True, exist_ok=True)
        m.to_csv(run.out / "sfg_map.csv")
        run.write_csv("sfg_locus.csv", ["vis_wavelength_nm", "telecom_wavelength_nm"], m.locus)
    print(f"SFG ridge angle {m.angle_deg:.2f} deg ({m.axis_scaling} axes)")
    return dict(period_um=period, shape=list(m.intensity.shape), angle_deg=m.angle_deg,
                axis_scaling=m.axis_scaling, angle_nm_axes_deg=m.angle_nm_deg, locus=m.locus)


def cmd_spectrum_tune(run: Run) -> dict:
    cfg = run.cfg
    p = cfg.process
    period = _spectrum_period(cfg, _dispersion(cfg))
    temps = cfg.grid("tuning_temperatures_C")
    tr = temperature_tuning(cfg.geometry, period, p["pump_nm"], temps, cfg.settings, cfg.materials)
    run.write_csv("tuning.csv", ["temperature_C", "signal_nm", "idler_nm"],
                  np.column_stack([tr.temperatures, tr.signal, tr.idler]))
    print(f"tuning {tr.slope_signal:+.3f} nm/K (signal), {tr.slope_idler:+.3f} nm/K (idler)")
    return dict(period_um=period, pump_nm=p["pump_nm"], table=tr.rows(),
                slope_signal_nm_per_K=tr.slope_signal, slope_idler_nm_per_K=tr.slope_idler,
                frequency_sum_rule_residual=tr.slope_inv_signal + tr.slope_inv_idler)


def cmd_fit(run: Run) -> dict:
    cfg = run.cfg
    p = cfg.process
    path = run.args.spectrum
    run.add_input(path)
    try:
        spec = Spectrum.from_csv(path, "idler")
    except (OSError, ValueError) as exc:
        raise InputDataError(f"cannot parse spectrum: {exc}") from exc
    center = spec.peak_wavelength
    kappa = None
    if not run.args.dispersion_free:
        kappa = mismatch_slope(_dispersion(cfg), p["pump_nm"], center, "idler")
    try:
        res = fit_sinc(spec, center, p["poled_length_mm"], kappa)
    except ValueError as exc:
        raise InputDataError(str(exc)) from exc
    if res.length_ratio is not None:
        print(f"L_eff {res.L_eff:.4f} mm ({100 * res.length_ratio:.1f}% of nominal)")
    return res.as_dict()


def _record_row(d):
    def v(x):
        return float("nan") if x is None else float(x.value if isinstance(x, ps.Estimate) else x)
    return [v(d["power_W"]), v(d["eta_signal"]), v(d["eta_idler"]), v(d["R_pdc_Hz"]),
            v(d["mean_photon_number"]), v(d.get("g2_measured")), v(d["g2_theory"]),
            v(d.get("brightness"))]


RECORD_HEADER = ["power_W", "eta_signal", "eta_idler", "R_pdc_Hz", "mean_photon_number",
                 "g2_measured", "g2_theory", "brightness"]


def cmd_counts(run: Run) -> dict:
    cfg = run.cfg
    c = cfg.raw["counts"]
    bw = c["bandwidth_GHz"] * 1e9
    trunc = int(c["g2_truncation"])
    if run.args.simulate:
        return _counts_simulated(run, trunc)
    path = run.args.counts
    if path is None:
        raise InputDataError("counts needs a CSV file or --simulate")
    run.add_input(path)
    try:
        records, rejected = ps.read_counts_csv(path)
    except (OSError, ValueError) as exc:
        raise InputDataError(f"cannot parse counts: {exc}") from exc
    for line, why in rejected:
        run.warn(f"row at line {line} rejected: {why}")
    if not records:
        raise InputDataError("no valid count records")
    sub = c["subtract_accidentals"]
    table = []
    for r in records:
        d = ps.analyse_record(r, cfg.power_chain, bw, truncation=trunc)
        if sub:
            eta_s, eta_i = ps.klyshko(r, subtract_accidentals=True)
            d.update(eta_signal_bg=eta_s, eta_idler_bg=eta_i,
                     g2_measured_bg=ps.g2_heralded_measured(r, subtract_accidentals=True))
        table.append(d)
    out = dict(records=table, rejected=[dict(line=ln, reason=w) for ln, w in rejected],
               bandwidth_GHz=c["bandwidth_GHz"])
    powers = {r.P_meas for r in records if np.isfinite(r.P_meas)}
    if len(powers) >= 3:
        sweep = ps.power_sweep_analysis(records, cfg.power_chain, bw, truncation=trunc)
        out["power_slopes"] = sweep["slopes"]
    top = max((d for d in table if d.get("brightness") is not None),
              key=lambda d: d["power_W"], default=None)
    if top is not None:
        out["brightness_at_max_power"] = dict(power_W=top["power_W"], P_in_W=top["P_in_W"],
                                              transmission=top["transmission"],
                                              R_pdc_Hz=top["R_pdc_Hz"], brightness=top["brightness"])
        print(f"brightness {top['brightness'].value:.3e} pairs/(s mW GHz) at "
              f"{top['power_W'] * 1e9:.0f} nW")
    run.write_csv("counts_table.csv", RECORD_HEADER, [_record_row(d) for d in table])
    return out


def _counts_simulated(run: Run, trunc: int) -> dict:
    sim = run.cfg.raw["simulation"]
    rng = np.random.default_rng(run.args.seed)
    es, ei = sim["eta_signal"], sim["eta_idler"]
    rows = []
    for n in sim["mean_photon_numbers"]:
        rec = ps.simulate_counts(n, es, ei, int(sim["trials"]), rng, sim["coincidence_window_s"])
        k_s, k_i = ps.klyshko(rec)
        g = ps.g2_heralded_measured(rec)
        exp = ps.expected_counts(n, es, ei, int(sim["trials"]), sim["coincidence_window_s"])
        e_s, e_i = ps.klyshko(exp)
        rows.append(dict(
            n_set=n, counts=rec.to_row(), eta_signal=k_s, eta_idler=k_i, g2_measured=g,
            g2_theory=ps.g2_heralded_theory(n, trunc),
            z_eta_signal_vs_set=(k_s.value - es) / k_s.sigma,
            z_eta_idler_vs_set=(k_i.value - ei) / k_i.sigma,
            z_g2_vs_theory=(g.value - ps.g2_heralded_theory(n, trunc)) / g.sigma,
            z_eta_signal_vs_expected=(k_s.value - e_s.value) / k_s.sigma,
            z_eta_idler_vs_expected=(k_i.value - e_i.value) / k_i.sigma,
            z_g2_vs_expected=(g.value - ps.g2_heralded_measured(exp).value) / g.sigma,
        ))
    run.write_csv("counts_simulated.csv", ["n_set", "eta_signal", "eta_idler", "g2_measured", "g2_theory"],
                  [[r["n_set"], r["eta_signal"].value, r["eta_idler"].value, r["g2_measured"].value,
                    r["g2_theory"]] for r in rows])
    return dict(simulated=True, eta_signal_set=es, eta_idler_set=ei, trials=sim["trials"], records=rows)


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config (default: bundled nominal design)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="tflnpair", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="poling period and tolerance budget")
    sp = sub.add_parser("spectrum", parents=[common], help="spectra, SFG map, tuning")
    sp.add_argument("kind", choices=("pdc", "sfg", "tune"))
    fp = sub.add_parser("fit", parents=[common], help="sinc fit of a measured spectrum")
    fp.add_argument("spectrum", help="two-column CSV (wavelength_nm, intensity) with a header line")
    fp.add_argument("--dispersion-free", action="store_true",
                    help="fit a free width instead of the simulated mismatch slope")
    cp = sub.add_parser("counts", parents=[common], help="photon statistics")
    cp.add_argument("counts", nargs="?", help="counts CSV")
    cp.add_argument("--simulate", action="store_true", help="analyse seeded Monte-Carlo counts")
    return ap


COMMANDS = {
    "design": cmd_design,
    "spectrum pdc": cmd_spectrum_pdc,
    "spectrum sfg": cmd_spectrum_sfg,
    "spectrum tune": cmd_spectrum_tune,
    "fit": cmd_fit,
    "counts": cmd_counts,
}


def _fail(code, kind, exc):
    report = {"format_version": FORMAT_VERSION, "error": kind, "type": type(exc).__name__,
              "message": str(exc), "exit_code": code}
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command + (f" {args.kind}" if args.command == "spectrum" else "")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    run = Run(args, cfg)
    if args.config:
        run.add_input(args.config)
    try:
        results = COMMANDS[command](run)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except InputDataError as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    run.emit(command, results)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
