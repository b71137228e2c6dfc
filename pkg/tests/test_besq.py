import csv
import io
import math

import numpy as np
import pytest

from gammaforms import besq
from gammaforms.streams import RandomStream


def test_zero_start_is_absorbed(stream):
    assert besq.besq0_transition_exact(0.0, 1.0, stream) == besq.BesqState(0.0, True)
    values, absorbed = besq.besq0_transition_sample(0.0, 1.0, stream, 10)
    assert np.all(values == 0) and np.all(absorbed)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_time_must_be_positive(t, stream):
    with pytest.raises(ValueError):
        besq.besq0_transition_sample(1.0, t, stream, 5)
    with pytest.raises(ValueError):
        besq.besq0_transition_exact(1.0, t, stream)


def test_state_guards():
    with pytest.raises(ValueError):
        besq.BesqState(-1.0, False)
    with pytest.raises(ValueError):
        besq.BesqState(1.0, True)


def test_mean_and_variance(stream):
    # E Q_t = x and Var Q_t = 4 x t for dQ = 2 sqrt(Q) dB
    x, t, n = 1.5, 0.7, 200_000
    values, _ = besq.besq0_transition_sample(x, t, stream, n)
    assert abs(values.mean() - x) < 4 * math.sqrt(4 * x * t / n)
    assert values.var() == pytest.approx(4 * x * t, rel=0.03)


def test_small_time_continuity(stream):
    values, absorbed = besq.besq0_transition_sample(2.0, 1e-6, stream, 1000)
    assert not absorbed.any() and np.max(np.abs(values - 2.0)) < 0.05


def test_array_start_values(stream):
    values, absorbed = besq.besq0_transition_sample(np.array([0.0, 1.0, 5.0]), 0.5, stream)
    assert values.shape == (3,) and absorbed[0]
    with pytest.raises(ValueError):
        besq.besq0_transition_sample(np.array([-1.0]), 0.5, stream)


@pytest.mark.parametrize("u", [0.5, 1.0, 2.0])
def test_laplace_verdicts(u, stream):
    v = besq.verify_besq_laplace(1.0, 1.0, u, 50_000, stream)
    assert v.passed and v.rhs == pytest.approx(math.exp(-u / (1 + 2 * u)))


def test_absorption_and_martingale_verdicts(stream):
    assert besq.verify_besq_absorption(1.0, 1.0, 50_000, stream.split(0)).passed
    assert besq.verify_besq_mean(2.0, 0.5, 50_000, stream.split(1)).passed


def test_transformed_time():
    tau, pref = besq.transformed_time("double", 1.0)
    assert tau == pytest.approx((math.e**2 - 1) / 2) and pref == pytest.approx(math.exp(-2))
    tau, pref = besq.transformed_time("halfspeed", 1.0)
    assert tau == pytest.approx((math.e - 1) / 2) and pref == pytest.approx(math.exp(-1))
    with pytest.raises(ValueError):
        besq.transformed_time("quarter", 1.0)


@pytest.mark.parametrize("variant", besq.VARIANTS)
def test_time_changed_mean(variant, stream):
    v = besq.verify_time_changed_mean(variant, 1.0, 0.8, 50_000, stream)
    assert v.passed
    assert isinstance(besq.time_changed_sample(variant, 1.0, 0.8, stream), besq.BesqState)


def test_closed_forms_differ_away_from_small_s():
    assert besq.absorption_closed_form_a(1.0, 1.0) == pytest.approx(math.exp(-1 / (1 - math.exp(-1))))
    assert besq.absorption_transformation("halfspeed", 1.0, 1.0) == pytest.approx(math.exp(-1 / (math.e - 1)))
    # the second closed form for the double variant is exp(-s0 / (e^{2t} - 1))
    assert besq.absorption_transformation("double", 1.0, 1.0) == pytest.approx(math.exp(-1 / (math.e**2 - 1)))


def test_absorption_report_flags_one_closed_form():
    rep = besq.absorption_report("halfspeed", 1.0, 1.0, 200_000, RandomStream(1))
    assert rep["matches"] == ["closed_form_b"] and rep["flag"]
    assert rep["sigma_distance"]["closed_form_a"] > 50
    assert "closed_form_b" in rep["message"]


def test_absorption_report_without_separation():
    # with 20 samples both closed forms are within 4 standard errors
    rep = besq.absorption_report("halfspeed", 1.0, 1.0, 20, RandomStream(0))
    assert rep["matches"] == ["closed_form_a", "closed_form_b"] and not rep["flag"]
    assert "does not separate" in rep["message"]


def test_sweep_monotone_and_consistent(stream):
    times = np.linspace(0.05, 3.0, 30)
    rows = besq.absorption_sweep("double", 1.0, times, 20_000, stream)
    mc = [r[1] for r in rows]
    assert all(b >= a for a, b in zip(mc, mc[1:]))
    for t, freq, se, _, p in rows:
        assert abs(freq - p) <= 4 * max(se, math.sqrt(p * (1 - p) / 20_000)) + 1e-12


def test_sample_path(stream):
    times = np.linspace(0.1, 2.0, 20)
    t, values, absorbed = besq.sample_path("halfspeed", 1.0, times, stream)
    assert np.array_equal(t, times)
    first = np.flatnonzero(absorbed)
    if first.size:
        assert np.all(absorbed[first[0]:]) and np.all(values[first[0]:] == 0)
    text = besq.path_csv(t, values, absorbed)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == besq.PATH_HEADER and len(rows) == 21
    with pytest.raises(ValueError):
        besq.sample_path("halfspeed", 1.0, [0.5, 0.2], stream)


def test_em_guards(stream):
    with pytest.raises(ValueError):
        besq.em_simulate("besq", 1.0, 1.0, 2e-3, stream)
    with pytest.raises(ValueError):
        besq.em_simulate("ou", 1.0, 1.0, 1e-4, stream)
    state = besq.em_simulate("besq", 0.0, 0.1, 1e-3, stream)
    assert state.absorbed


def test_em_absorption_small(stream):
    v = besq.verify_em_absorption(1.0, 1.0, 4000, 1e-3, stream, rel_tol=0.15)
    assert v.passed and v.rule == "relative_tol"


def test_em_distribution_small(stream):
    v = besq.verify_em_distribution("halfspeed", 1.0, 0.5, 3000, 1e-3, stream)
    assert v.passed
