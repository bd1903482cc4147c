import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import poisson_moments
from tflnpair import photonstats as ps
from tflnpair.photonstats import CountRecord, PowerChain, StatsDomainError, UndefinedEstimateError

LOSSLESS = CountRecord(N_s=100, N_1=50, N_2=50, C_s1=50, C_s2=50, C_s12=0, t_int=1.0)


def test_lossless_record():
    eta_s, eta_i = ps.klyshko(LOSSLESS)
    assert (eta_s.value, eta_i.value) == (1.0, 1.0)
    assert ps.pair_rate(LOSSLESS).value == 100.0
    assert ps.g2_heralded_measured(LOSSLESS).value == 0.0


def test_pair_rate_matches_efficiency_form():
    r = CountRecord(N_s=9000, N_1=4000, N_2=4100, C_s1=300, C_s2=310, C_s12=3, t_int=2.0)
    es, ei = ps.klyshko(r)
    R = ps.pair_rate(r).value
    assert R == pytest.approx((r.C_s1 + r.C_s2) / (es.value * ei.value * r.t_int), rel=1e-14)


@pytest.mark.parametrize("k", [2, 3, 10, 1000])
def test_scaling_invariance(k):
    r = CountRecord(N_s=9000, N_1=4000, N_2=4100, C_s1=300, C_s2=310, C_s12=3, t_int=2.0)
    big = r.scaled(k)
    for a, b in zip(ps.klyshko(r), ps.klyshko(big)):
        assert a.value == pytest.approx(b.value, rel=1e-15)
    assert ps.g2_heralded_measured(big).value == pytest.approx(ps.g2_heralded_measured(r).value, rel=1e-14)
    assert ps.pair_rate(big).value == pytest.approx(k * ps.pair_rate(r).value, rel=1e-14)


def test_uncertainties_shrink_with_counts():
    r = CountRecord(N_s=9000, N_1=4000, N_2=4100, C_s1=300, C_s2=310, C_s12=30, t_int=2.0)
    assert ps.g2_heralded_measured(r.scaled(100)).sigma < ps.g2_heralded_measured(r).sigma / 9
    assert ps.klyshko(r.scaled(4))[0].sigma == pytest.approx(ps.klyshko(r)[0].sigma / 2, rel=1e-12)


@pytest.mark.parametrize("kw,match", [
    (dict(C_s12=60), "C_s12"), (dict(C_s1=60), "C_s1"), (dict(N_s=-1), "N_s"),
    (dict(t_int=0.0), "t_int"), (dict(tau_c=0.0), "tau_c"), (dict(N_2=float("nan")), "N_2"),
])
def test_record_invariants(kw, match):
    base = dict(N_s=100, N_1=50, N_2=50, C_s1=50, C_s2=50, C_s12=0, t_int=1.0)
    base.update(kw)
    with pytest.raises(StatsDomainError, match=match):
        CountRecord(**base)


def test_undefined_estimates():
    zero = CountRecord(N_s=10, N_1=0, N_2=0, C_s1=0, C_s2=0, C_s12=0, t_int=1.0)
    with pytest.raises(UndefinedEstimateError):
        ps.klyshko(zero)
    with pytest.raises(UndefinedEstimateError):
        ps.pair_rate(zero)
    with pytest.raises(UndefinedEstimateError):
        ps.g2_heralded_measured(zero)


def test_mean_photon_number():
    assert ps.mean_photon_number(15.89e6, 1e-9) == pytest.approx(0.01589, rel=1e-12)
    assert ps.mean_photon_number(15.89e6, 0.0) == 0.0
    est = ps.mean_photon_number(ps.Estimate(1e6, 1e3), 1e-9)
    assert isinstance(est, ps.Estimate) and est.value == pytest.approx(1e-3)
    with pytest.raises(StatsDomainError):
        ps.mean_photon_number(1.0, -1.0)


def test_poisson_pmf():
    assert ps.poisson_pmf(0.3, 0) == pytest.approx(math.exp(-0.3), rel=1e-15)
    assert ps.poisson_pmf(5.0, 1000) >= 0.0
    with pytest.raises(StatsDomainError):
        ps.poisson_pmf(-1.0, 0)
    with pytest.raises(StatsDomainError):
        ps.poisson_pmf(1.0, -1)


@pytest.mark.parametrize("n", [0.0, 1e-3, 0.5, 3.0, 10.0])
def test_poisson_normalisation_and_mean(n):
    k = np.arange(201)
    p = ps.poisson_pmf(n, k)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(k * p) == pytest.approx(n, abs=1e-10)


def test_g2_theory_values():
    assert ps.g2_heralded_theory(0.0) == 0.0
    assert ps.g2_heralded_theory(1.0) == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(StatsDomainError):
        ps.g2_heralded_theory(-0.1)
    with pytest.raises(StatsDomainError):
        ps.g2_heralded_theory(0.1, truncation=20)


@pytest.mark.parametrize("n", [1e-4, 0.01, 0.3, 2.0, 5.0])
def test_g2_theory_matches_independent_moments(n):
    m1, m2, m3 = poisson_moments(n)
    assert ps.g2_heralded_theory(n) == pytest.approx(m3 * m1 / m2 ** 2, rel=1e-12)


@settings(max_examples=200)
@given(a=st.floats(0, 5), b=st.floats(0, 5))
def test_g2_theory_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    g_lo, g_hi = ps.g2_heralded_theory(lo), ps.g2_heralded_theory(hi)
    assert 0.0 <= g_lo <= g_hi + 1e-15 < 1.0 + 1e-15
    assert g_hi < 1.0


def test_power_chain():
    chain = PowerChain(0.1454, 0.05, 0.40)
    assert chain.transmission == pytest.approx(0.8546 * 0.95 * 0.40, rel=1e-15)
    P_in, T = ps.pump_power_inside(1e-6, PowerChain(0.0, 0.0, 1.0))
    assert (P_in, T) == (1e-6, 1.0)
    with pytest.raises(ValueError):
        PowerChain(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        PowerChain(0.1, 0.0, 0.0)
    with pytest.raises(StatsDomainError):
        ps.pump_power_inside(-1.0, chain)


def test_brightness_definition():
    B = ps.brightness(1e6, 2e-6, 1e12)
    assert B == pytest.approx(1e6 / (2e-3 * 1e3))
    assert ps.brightness(1e6, 4e-6, 1e12) == pytest.approx(B / 2)
    with pytest.raises(StatsDomainError):
        ps.brightness(1e6, 0.0, 1e12)


@given(R=st.floats(1.0, 1e9), P=st.floats(1e-9, 1e-2), bw=st.floats(1e9, 1e13))
def test_brightness_roundtrip(R, P, bw):
    B = ps.brightness(R, P, bw)
    assert B * (P * 1e3) * (bw * 1e-9) == pytest.approx(R, rel=1e-12)


def test_brightness_orders_literature_values():
    # pairs/(s mW GHz) of a few published sources, as plain numbers; order preserved
    table = {"bulk": 2.2e3, "ppln_waveguide": 1.1e6, "tfln_this": 0.44e7}
    ranked = sorted(table, key=table.get)
    assert ranked == ["bulk", "ppln_waveguide", "tfln_this"]


def _power_law_records(exps, powers=(1e-7, 2e-7, 4e-7, 8e-7), base=1e5):
    recs = []
    for P in powers:
        x = P / powers[0]
        Ni, Ns, C, C12 = (f * base * x ** e for f, e in zip((1.0, 1.0, 0.1, 1e-3), exps))
        recs.append(CountRecord(Ns, Ni / 2, Ni / 2, C / 2, C / 2, C12, t_int=1.0, P_meas=P))
    return recs


def test_power_sweep_linear_and_quadratic():
    res = ps.power_sweep_analysis(_power_law_records((1.0, 1.0, 1.0, 2.0)))
    for k in ("idler_singles", "signal_singles", "twofolds"):
        assert res["slopes"][k].value == pytest.approx(1.0, abs=1e-12)
    assert res["slopes"]["threefolds"].value == pytest.approx(2.0, rel=0.05)
    assert len(res["records"]) == 4


def test_power_sweep_merges_duplicates(caplog):
    recs = _power_law_records((1.0, 1.0, 1.0, 2.0))
    res = ps.power_sweep_analysis(recs + [recs[0]])
    assert len(res["records"]) == 4
    assert "merging" in caplog.text
    with pytest.raises(StatsDomainError, match="three"):
        ps.power_sweep_analysis(recs[:2] + recs[:2])


def test_csv_roundtrip_and_rejection(tmp_path):
    recs = _power_law_records((1.0, 1.0, 1.0, 2.0))
    path = tmp_path / "c.csv"
    ps.write_counts_csv(path, recs, comment="test data")
    back, rejected = ps.read_counts_csv(path)
    assert rejected == [] and len(back) == 4
    assert back[2].N_s == pytest.approx(recs[2].N_s)
    lines = path.read_text().splitlines()
    bad = lines[-1].split(",")
    cols = lines[1].split(",")
    bad[cols.index("C_s12")] = "1e12"
    lines.append(",".join(bad))
    lines.append("oops")
    path.write_text("\n".join(lines) + "\n")
    back, rejected = ps.read_counts_csv(path)
    assert len(back) == 4
    assert [ln for ln, _ in rejected] == [len(lines) - 1, len(lines)]
    assert "C_s12" in rejected[0][1]


def test_csv_missing_columns(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("power_W,N_s\n1,2\n")
    with pytest.raises(StatsDomainError, match="missing"):
        ps.read_counts_csv(p)


def test_accidental_subtraction_lowers_estimates():
    r = CountRecord(N_s=3e6, N_1=3e6, N_2=3e6, C_s1=5e4, C_s2=5e4, C_s12=50, t_int=1.0)
    assert ps.klyshko(r, True)[0].value < ps.klyshko(r)[0].value
    assert ps.g2_heralded_measured(r, True).value < ps.g2_heralded_measured(r).value


def test_expected_counts_in_the_single_pair_limit():
    e = ps.expected_counts(1e-6, 0.3, 0.2, 1e9)
    eta_s, eta_i = ps.klyshko(e)
    # eta_signal divides by idler singles, so it returns the signal arm efficiency
    assert eta_s.value == pytest.approx(0.3, rel=1e-5)
    assert eta_i.value == pytest.approx(0.2, rel=1e-5)


def test_simulation_is_seeded_and_matches_expectation():
    a = ps.simulate_counts(0.02, 0.3, 0.2, 2_000_000, np.random.default_rng(5))
    b = ps.simulate_counts(0.02, 0.3, 0.2, 2_000_000, np.random.default_rng(5), chunk=300_000)
    assert a.N_s > 0
    c = ps.simulate_counts(0.02, 0.3, 0.2, 2_000_000, np.random.default_rng(5))
    assert a == c
    e = ps.expected_counts(0.02, 0.3, 0.2, 2_000_000)
    for name in ("N_s", "N_1", "N_2", "C_s1", "C_s2", "C_s12"):
        for rec in (a, b):
            sim, exp = getattr(rec, name), getattr(e, name)
            assert abs(sim - exp) < 4 * math.sqrt(exp) + 1


def test_simulation_rejects_bad_parameters():
    with pytest.raises(StatsDomainError):
        ps.simulate_counts(-1.0, 0.3, 0.2, 10, np.random.default_rng(0))
    with pytest.raises(StatsDomainError):
        ps.simulate_counts(0.1, 1.3, 0.2, 10, np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(5))
def test_estimates_agree_with_exact_expectation(seed):
    rng = np.random.default_rng(1000 + seed)
    n = float(10 ** rng.uniform(-3, -1))
    es, ei = rng.uniform(0.05, 0.9, 2)
    sim = ps.simulate_counts(n, es, ei, 10_000_000, rng)
    exp = ps.expected_counts(n, es, ei, 10_000_000)
    for a, b in zip(ps.klyshko(sim), ps.klyshko(exp)):
        assert abs(a.value - b.value) < 3 * a.sigma
    g, ge = ps.g2_heralded_measured(sim), ps.g2_heralded_measured(exp)
    assert abs(g.value - ge.value) < 3 * g.sigma


def test_analyse_record_fields():
    r = CountRecord(N_s=9000, N_1=4000, N_2=4100, C_s1=300, C_s2=310, C_s12=3, t_int=2.0, P_meas=5e-7)
    d = ps.analyse_record(r, PowerChain(), 2.104e12)
    assert {"eta_signal", "eta_idler", "R_pdc_Hz", "mean_photon_number", "g2_theory", "g2_measured",
            "P_in_W", "transmission", "brightness"} <= set(d)
    assert d["g2_theory"] == pytest.approx(ps.g2_closed_form(d["mean_photon_number"].value), rel=1e-10)
