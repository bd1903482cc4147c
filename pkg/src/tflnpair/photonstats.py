"""Photon-counting analysis for a heralded pair source.

One signal detector heralds; the idler is split 50:50 onto two detectors.
From pre-binned singles, twofold and threefold counts this module derives
Klyshko efficiencies, the efficiency-corrected pair rate, the mean photon
number per coincidence window, the heralded g2(0) and the spectral
brightness.  Uncertainties are first-order Poissonian: every count c
contributes a relative variance 1/c (a zero count is given an absolute
uncertainty of one count).

A brute-force Monte-Carlo simulator of Poissonian pair emission, binomial
loss and threshold detection is included, together with the exact
expectation of every count under the same model, so the estimators can be
checked against known inputs.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.stats import poisson

log = logging.getLogger(__name__)

# stored as metadata only; the estimators below work on raw counts
DETECTOR_EFFICIENCIES = {"signal": 0.83, "idler_1": 0.83, "idler_2": 0.85}

COUNT_COLUMNS = ("power_W", "t_int_s", "tau_c_s", "N_s", "N_1", "N_2", "C_s1", "C_s2", "C_s12")


class StatsDomainError(ValueError):
    pass


class UndefinedEstimateError(StatsDomainError):
    """A zero count appears in a denominator."""


@dataclass(frozen=True)
class Estimate:
    value: float
    sigma: float

    def __float__(self):
        return float(self.value)

    def as_dict(self):
        return {"value": self.value, "sigma": self.sigma}


def _rel_var(*counts):
    return sum(1.0 / max(c, 1.0) if c > 0 else 0.0 for c in counts)


@dataclass(frozen=True)
class CountRecord:
    """Counts accumulated over ``t_int`` seconds at one pump power."""

    N_s: float
    N_1: float
    N_2: float
    C_s1: float
    C_s2: float
    C_s12: float
    t_int: float
    tau_c: float = 1e-9
    P_meas: float = float("nan")

    def __post_init__(self):
        counts = dict(N_s=self.N_s, N_1=self.N_1, N_2=self.N_2, C_s1=self.C_s1,
                      C_s2=self.C_s2, C_s12=self.C_s12)
        for k, v in counts.items():
            if not np.isfinite(v) or v < 0:
                raise StatsDomainError(f"{k} must be a finite count >= 0, got {v}")
        if self.C_s12 > min(self.C_s1, self.C_s2):
            raise StatsDomainError("C_s12 exceeds a twofold count")
        if self.C_s1 > min(self.N_s, self.N_1):
            raise StatsDomainError("C_s1 exceeds a singles count")
        if self.C_s2 > min(self.N_s, self.N_2):
            raise StatsDomainError("C_s2 exceeds a singles count")
        if not self.t_int > 0:
            raise StatsDomainError("t_int must be positive")
        if not self.tau_c > 0:
            raise StatsDomainError("tau_c must be positive")

    def scaled(self, k: float) -> "CountRecord":
        """All counts times ``k`` (same integration time)."""
        return CountRecord(self.N_s * k, self.N_1 * k, self.N_2 * k, self.C_s1 * k,
                           self.C_s2 * k, self.C_s12 * k, self.t_int, self.tau_c, self.P_meas)

    @classmethod
    def from_row(cls, row: dict) -> "CountRecord":
        return cls(N_s=float(row["N_s"]), N_1=float(row["N_1"]), N_2=float(row["N_2"]),
                   C_s1=float(row["C_s1"]), C_s2=float(row["C_s2"]), C_s12=float(row["C_s12"]),
                   t_int=float(row["t_int_s"]), tau_c=float(row["tau_c_s"]),
                   P_meas=float(row["power_W"]))

    def to_row(self) -> dict:
        return dict(power_W=self.P_meas, t_int_s=self.t_int, tau_c_s=self.tau_c, N_s=self.N_s,
                    N_1=self.N_1, N_2=self.N_2, C_s1=self.C_s1, C_s2=self.C_s2, C_s12=self.C_s12)


def read_counts_csv(path):
    """Records plus a list of (line number, reason) for rows that were rejected."""
    records, rejected = [], []
    with open(path, newline="") as fh:
        lines = fh.readlines()
    # comment lines may only precede the header
    skip = 0
    while skip < len(lines) and lines[skip].lstrip().startswith("#"):
        skip += 1
    reader = csv.DictReader(lines[skip:])
    missing = set(COUNT_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise StatsDomainError(f"{path}: missing columns {sorted(missing)}")
    for lineno, row in enumerate(reader, start=skip + 2):
        try:
            records.append(CountRecord.from_row(row))
        except (StatsDomainError, ValueError, TypeError) as exc:
            rejected.append((lineno, str(exc)))
    return records, rejected


def write_counts_csv(path, records, comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.DictWriter(fh, fieldnames=COUNT_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) and k.endswith(("_W", "_s"))
                            else f"{v:.0f}") for k, v in r.to_row().items()})


@dataclass(frozen=True)
class PowerChain:
    """Losses between the waveguide output and the power meter."""

    facet_reflectivity: float = 0.1454
    lens_reflectivity: float = 0.05
    coupling_efficiency: float = 0.40

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "coupling_efficiency":
                ok = 0 < v <= 1
            else:
                ok = 0 <= v < 1
            if not ok:
                raise StatsDomainError(f"{f.name}={v} out of range")

    @property
    def transmission(self) -> float:
        return (1 - self.facet_reflectivity) * (1 - self.lens_reflectivity) * self.coupling_efficiency

    def as_dict(self):
        return asdict(self)


def _accidentals(a, b, rec):
    return a * b * rec.tau_c / rec.t_int


def klyshko(rec: CountRecord, subtract_accidentals: bool = False):
    """(eta_signal, eta_idler) as Estimates.

    eta_signal = (C_s1 + C_s2) / (N_1 + N_2) and eta_idler = (C_s1 + C_s2) / N_s.
    """
    C = rec.C_s1 + rec.C_s2
    if subtract_accidentals:
        C -= _accidentals(rec.N_s, rec.N_1, rec) + _accidentals(rec.N_s, rec.N_2, rec)
        C = max(C, 0.0)
    Ni = rec.N_1 + rec.N_2
    if Ni <= 0 or rec.N_s <= 0:
        raise UndefinedEstimateError("Klyshko efficiency undefined: zero singles")
    eta_s, eta_i = C / Ni, C / rec.N_s
    if C > 0:
        s_s = eta_s * math.sqrt(_rel_var(C, Ni))
        s_i = eta_i * math.sqrt(_rel_var(C, rec.N_s))
    else:
        s_s, s_i = 1.0 / Ni, 1.0 / rec.N_s
    return Estimate(eta_s, s_s), Estimate(eta_i, s_i)


def pair_rate(rec: CountRecord) -> Estimate:
    """Efficiency-corrected pair rate N_s (N_1 + N_2) / ((C_s1 + C_s2) t_int) in Hz."""
    C = rec.C_s1 + rec.C_s2
    if C <= 0:
        raise UndefinedEstimateError("pair rate undefined: no twofold coincidences")
    Ni = rec.N_1 + rec.N_2
    if Ni <= 0 or rec.N_s <= 0:
        raise UndefinedEstimateError("pair rate undefined: zero singles")
    R = rec.N_s * Ni / (C * rec.t_int)
    return Estimate(R, R * math.sqrt(_rel_var(rec.N_s, Ni, C)))


def mean_photon_number(R_pdc, tau_c: float):
    """Pairs per coincidence window; keeps an Estimate an Estimate."""
    if tau_c < 0:
        raise StatsDomainError("tau_c must be >= 0")
    if isinstance(R_pdc, Estimate):
        return Estimate(R_pdc.value * tau_c, R_pdc.sigma * tau_c)
    if R_pdc < 0:
        raise StatsDomainError("rate must be >= 0")
    return R_pdc * tau_c


def poisson_pmf(n, k):
    """Poisson probability of ``k`` pairs at mean ``n`` (log-domain evaluation)."""
    n = np.asarray(n, float)
    k = np.asarray(k)
    if np.any(n < 0) or np.any(k < 0):
        raise StatsDomainError("mean and photon number must be >= 0")
    out = poisson.pmf(k, n)
    return float(out) if out.ndim == 0 else out


def g2_closed_form(n):
    n = np.asarray(n, float)
    out = n * (n + 2) / (n + 1) ** 2
    return float(out) if out.ndim == 0 else out


def g2_heralded_theory(n: float, truncation: int = 200) -> float:
    """Heralded g2(0) of Poissonian pair emission from the truncated series.

    sum k^2 (k-1) p(k) * sum k p(k) / (sum k^2 p(k))^2, which equals
    n (n + 2) / (n + 1)^2.  The first-moment factor makes g2 vanish for
    n -> 0.
    """
    if n < 0:
        raise StatsDomainError("n must be >= 0")
    if truncation < 50:
        raise StatsDomainError("truncation must be >= 50")
    if n == 0:
        return 0.0
    if n < 1e-100:
        # the third moment underflows; the series equals the closed form
        return g2_closed_form(n)
    k = np.arange(truncation + 1, dtype=float)
    p = poisson.pmf(k, n)
    m1 = math.fsum(k * p)
    m2 = math.fsum(k ** 2 * p)
    m3 = math.fsum(k ** 2 * (k - 1) * p)
    return m3 * m1 / m2 ** 2


def g2_heralded_measured(rec: CountRecord, subtract_accidentals: bool = False) -> Estimate:
    """C_s12 N_s / (C_s1 C_s2) with Poissonian propagation over all four counts."""
    C1, C2, C12 = rec.C_s1, rec.C_s2, rec.C_s12
    if subtract_accidentals:
        C1 = max(C1 - _accidentals(rec.N_s, rec.N_1, rec), 0.0)
        C2 = max(C2 - _accidentals(rec.N_s, rec.N_2, rec), 0.0)
        C12 = max(C12 - _accidentals(rec.C_s1, rec.N_2, rec)
                  - _accidentals(rec.C_s2, rec.N_1, rec), 0.0)
    if C1 <= 0 or C2 <= 0:
        raise UndefinedEstimateError("g2 undefined: zero twofold coincidences")
    g = C12 * rec.N_s / (C1 * C2)
    if C12 > 0:
        s = g * math.sqrt(_rel_var(C12, rec.N_s, C1, C2))
    else:
        s = rec.N_s / (C1 * C2)
    return Estimate(g, s)


def pump_power_inside(P_meas: float, chain: PowerChain):
    """(P_in, transmission): power in the waveguide from the power behind it."""
    if P_meas < 0:
        raise StatsDomainError("measured power must be >= 0")
    T = chain.transmission
    if T <= 0:
        raise StatsDomainError("zero transmission")
    return P_meas / T, T


def brightness(R_pdc: float, P_in_W: float, bandwidth_Hz: float) -> float:
    """Pairs per second per mW of pump per GHz of bandwidth."""
    if R_pdc < 0:
        raise StatsDomainError("rate must be >= 0")
    if P_in_W <= 0 or bandwidth_Hz <= 0:
        raise StatsDomainError("power and bandwidth must be positive")
    return R_pdc / (P_in_W * 1e3 * bandwidth_Hz * 1e-9)


def _loglog_slope(P, y):
    x, v = np.log(P), np.log(y)
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, v, rcond=None)
    dof = x.size - 2
    r = v - A @ coef
    s2 = (r @ r) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return Estimate(float(coef[0]), float(np.sqrt(cov[0, 0])))


def power_sweep_analysis(records, chain: PowerChain | None = None,
                         bandwidth_Hz: float | None = None, truncation: int = 200) -> dict:
    """Log-log power slopes of count rates plus per-record derived quantities.

    Records sharing a pump power are merged (counts and integration times
    summed) with a warning.
    """
    groups = {}
    for r in records:
        if not np.isfinite(r.P_meas) or r.P_meas <= 0:
            raise StatsDomainError("every record needs a positive pump power")
        groups.setdefault(r.P_meas, []).append(r)
    merged = []
    for P in sorted(groups):
        rs = groups[P]
        if len(rs) > 1:
            log.warning("merging %d records at %.6g W", len(rs), P)
            if len({r.tau_c for r in rs}) > 1:
                raise StatsDomainError(f"records at {P} W use different coincidence windows")
        merged.append(CountRecord(*(sum(getattr(r, k) for r in rs) for k in
                                    ("N_s", "N_1", "N_2", "C_s1", "C_s2", "C_s12", "t_int")),
                                  tau_c=rs[0].tau_c, P_meas=P))
    if len(merged) < 3:
        raise StatsDomainError("need at least three distinct pump powers")
    P = np.array([r.P_meas for r in merged])
    t = np.array([r.t_int for r in merged])
    series = {
        "idler_singles": np.array([r.N_1 + r.N_2 for r in merged]) / t,
        "signal_singles": np.array([r.N_s for r in merged]) / t,
        "twofolds": np.array([r.C_s1 + r.C_s2 for r in merged]) / t,
        "threefolds": np.array([r.C_s12 for r in merged]) / t,
    }
    slopes = {}
    for k, y in series.items():
        if np.any(y <= 0):
            log.warning("zero %s rate at some power; slope omitted", k)
            continue
        slopes[k] = _loglog_slope(P, y)
    table = [analyse_record(r, chain, bandwidth_Hz, truncation) for r in merged]
    return {"slopes": slopes, "records": table}


def analyse_record(rec: CountRecord, chain: PowerChain | None = None,
                   bandwidth_Hz: float | None = None, truncation: int = 200) -> dict:
    """Every derived quantity for one record, as plain floats and Estimates."""
    eta_s, eta_i = klyshko(rec)
    R = pair_rate(rec)
    n = mean_photon_number(R, rec.tau_c)
    out = dict(power_W=rec.P_meas, eta_signal=eta_s, eta_idler=eta_i, R_pdc_Hz=R,
               mean_photon_number=n, g2_theory=g2_heralded_theory(n.value, truncation))
    try:
        out["g2_measured"] = g2_heralded_measured(rec)
    except UndefinedEstimateError:
        out["g2_measured"] = None
    if chain is not None and np.isfinite(rec.P_meas):
        P_in, T = pump_power_inside(rec.P_meas, chain)
        out.update(P_in_W=P_in, transmission=T)
        if bandwidth_Hz and P_in > 0:
            B = brightness(R.value, P_in, bandwidth_Hz)
            out["brightness"] = Estimate(B, B * R.sigma / R.value)
    return out


# ---------------------------------------------------------------- simulation

def simulate_counts(n: float, eta_s: float, eta_i: float, trials: int,
                    rng: np.random.Generator, tau_c: float = 1e-9, split: float = 0.5,
                    chunk: int = 2_000_000, P_meas: float = float("nan")) -> CountRecord:
    """Brute-force counts for ``trials`` coincidence windows.

    Per window: Poissonian number of pairs, independent binomial loss of
    every signal and idler photon, binomial split of the surviving idlers,
    and threshold (click / no click) detectors.
    """
    if not (n >= 0 and 0 <= eta_s <= 1 and 0 <= eta_i <= 1 and 0 <= split <= 1):
        raise StatsDomainError("invalid simulation parameters")
    tot = np.zeros(6, dtype=np.int64)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        pairs = rng.poisson(n, m)
        s = rng.binomial(pairs, eta_s) > 0
        idl = rng.binomial(pairs, eta_i)
        i1 = rng.binomial(idl, split)
        c1 = i1 > 0
        c2 = (idl - i1) > 0
        tot += [s.sum(), c1.sum(), c2.sum(), (s & c1).sum(), (s & c2).sum(), (s & c1 & c2).sum()]
        done += m
    return CountRecord(*map(float, tot), t_int=trials * tau_c, tau_c=tau_c, P_meas=P_meas)


def expected_counts(n: float, eta_s: float, eta_i: float, trials: float,
                    tau_c: float = 1e-9, split: float = 0.5) -> CountRecord:
    """Exact mean counts of :func:`simulate_counts`.

    Poissonian emission thinned independently per pair leaves the numbers
    of photons reaching each detector jointly Poissonian per outcome class,
    so every "no click on a set of detectors" probability is an exponential
    and the click probabilities follow by inclusion-exclusion.
    """
    q1, q2 = eta_i * split, eta_i * (1 - split)

    def none(s, a, b):
        hit_i = (q1 if a else 0.0) + (q2 if b else 0.0)
        hit = 1 - (1 - (eta_s if s else 0.0)) * (1 - hit_i)
        return math.exp(-n * hit)

    P_s = 1 - none(1, 0, 0)
    P_1 = 1 - none(0, 1, 0)
    P_2 = 1 - none(0, 0, 1)
    P_s1 = 1 - none(1, 0, 0) - none(0, 1, 0) + none(1, 1, 0)
    P_s2 = 1 - none(1, 0, 0) - none(0, 0, 1) + none(1, 0, 1)
    P_s12 = (1 - none(1, 0, 0) - none(0, 1, 0) - none(0, 0, 1)
             + none(1, 1, 0) + none(1, 0, 1) + none(0, 1, 1) - none(1, 1, 1))
    N = float(trials)
    return CountRecord(N * P_s, N * P_1, N * P_2, N * P_s1, N * P_s2, N * P_s12,
                       t_int=N * tau_c, tau_c=tau_c)
