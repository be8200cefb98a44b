import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from swff import kernel
from swff.integrator import (IntegratorOptions, crossing_products, event_time, integrate, region_code, verify_transversality)
from swff.model import ModelState, Regime, initial_state, vector_field
from swff.params import DEFAULT


@pytest.fixture(scope="module")
def default_run():
    X, r = initial_state(DEFAULT)
    return integrate(X, r, 20 * 24.0, DEFAULT)


def test_samples_and_events_ordered(default_run):
    tr = default_run
    assert np.all(np.diff(tr.t) > 0)
    ts = [e.t for e in tr.events]
    assert ts == sorted(ts)
    assert tr.t[0] <= ts[0] and ts[-1] <= tr.t[-1]


def test_gamma_events_alternate(default_run):
    kinds = [e.kind for e in default_run.gamma_events()]
    assert kinds[0] == "sleep_onset"
    assert all(a != b for a, b in zip(kinds, kinds[1:]))


def test_event_states_on_boundary(default_run):
    for e in default_run.gamma_events():
        assert abs(e.state.f_W - DEFAULT.theta_W) < 1e-7
    for e in default_run.of_kind("circadian_minimum"):
        assert e.state.c == pytest.approx(-1.0, abs=1e-9)
        n = (e.state.theta - math.pi) / (2 * math.pi)
        assert n == pytest.approx(round(n), abs=1e-9)


def test_event_direction(default_run):
    p = DEFAULT
    for e in default_run.gamma_events():
        # f_W derivative sign from either field (they agree on Gamma)
        d = vector_field(e.state, Regime(True), p)[0]
        assert (d < 0) == (e.kind == "sleep_onset")


def test_transversality_holds(default_run):
    rep = verify_transversality(default_run, DEFAULT)
    assert rep["violations"] == [] and rep["checked"] > 30
    assert rep["min_product"] >= 0


def test_crossing_products_are_squares():
    rng = np.random.default_rng(0)
    for _ in range(100):
        X = ModelState(DEFAULT.theta_W, *rng.uniform([0, 0, 0, -1, 0], [6, 7, 320, 1, 6]))
        assert crossing_products(X, DEFAULT)["gamma"] >= 0
        for v in crossing_products(X, DEFAULT, chs=True).values():
            assert v >= 0


def test_smooth_segment_matches_scipy():
    # a wake stretch with Gamma events off is a smooth ODE: compare to an independent solver
    X, r = initial_state(DEFAULT)
    opts = IntegratorOptions(gamma_events=False, rtol=1e-11, atol=1e-12)
    tr = integrate(X, r, 6.0, DEFAULT, opts)
    sol = solve_ivp(lambda t, y: vector_field(y, r, DEFAULT), (0, 6.0), np.array(X),
                    method="DOP853", rtol=1e-12, atol=1e-13)
    assert np.allclose(tr.y[-1], sol.y[:, -1], rtol=1e-8, atol=1e-8)


def test_circadian_components_exact(default_run):
    tr = default_run
    assert np.allclose(tr.y[:, 5], DEFAULT.omega * (tr.t - DEFAULT.phi), atol=1e-9)
    assert np.allclose(tr.y[:, 4], np.cos(tr.y[:, 5]), atol=1e-8)


def test_firing_rates_bounded(default_run):
    y = default_run.y[default_run.t > 48]
    assert np.all(y[:, 0] >= 0) and np.all(y[:, 0] <= DEFAULT.W_max)
    assert np.all(y[:, 1] >= 0) and np.all(y[:, 1] <= DEFAULT.S_max)
    assert np.all(y[:, 2] >= 0) and np.all(y[:, 2] <= DEFAULT.SCN_max)


def test_default_durations(default_run):
    wake, sleep = default_run.episodes(after=10 * 24)
    assert wake.mean() == pytest.approx(15.33, abs=0.1)
    assert sleep.mean() == pytest.approx(8.67, abs=0.1)


def test_max_sleep_onsets_stops():
    X, r = initial_state(DEFAULT)
    tr = integrate(X, r, 50 * 24.0, DEFAULT, IntegratorOptions(max_sleep_onsets=3))
    assert tr.status == 1
    assert len(tr.sleep_onsets()) == 3
    assert tr.t[-1] == tr.sleep_onsets()[-1].t


def test_bad_inputs():
    X, r = initial_state(DEFAULT)
    with pytest.raises(ValueError):
        integrate(X, r, 0.0, DEFAULT)
    with pytest.raises(ValueError):
        integrate([1, 2, 3], r, 1.0, DEFAULT)
    with pytest.raises(ValueError):
        IntegratorOptions(rtol=0)
    with pytest.raises(ValueError):
        IntegratorOptions(max_sleep_onsets=-1)


def test_event_time_root():
    assert event_time((0, 2), lambda s: s - math.sqrt(2)) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert event_time((0, 1), lambda y: y - 0.25, dense_eval=lambda s: s * s) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        event_time((0, 1), lambda s: s + 1)


def test_region_codes():
    assert {region_code(w, s) for w in (True, False) for s in (True, False)} == {"F11", "F12", "F21", "F22"}


def test_csv_exports(default_run, tmp_path):
    default_run.to_csv(tmp_path / "t.csv")
    default_run.events_to_csv(tmp_path / "e.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head == "t,f_W,f_S,f_SCN,h,c,theta,regime"
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,kind,f_W,f_S,f_SCN,h,c,theta"
    assert len(lines) == len(default_run.events) + 1


def test_kernels_agree():
    X, r = initial_state(DEFAULT.with_(k=0.45))
    args = (np.array(X), 1, int(r.scn_high), 0.0, 96.0, DEFAULT.with_(k=0.45).packed(), 0,
            1e-9, 1e-11, 1e-9, 1e-3, 1.0, 0, 1, 0)
    a = kernel.run(*args)
    b = kernel.py_run(*args)
    assert a[0] == b[0] == 0
    assert np.allclose(a[2], b[2], rtol=1e-10, atol=1e-10)
    assert len(a[5]) == len(b[5])
    for ea, eb in zip(a[5], b[5]):
        assert ea[1] == eb[1]
        assert ea[0] == pytest.approx(eb[0], abs=1e-9)
    assert a[7] == b[7]


def test_determinism():
    X, r = initial_state(DEFAULT)
    a = integrate(X, r, 72.0, DEFAULT)
    b = integrate(X, r, 72.0, DEFAULT)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.t, b.t)
