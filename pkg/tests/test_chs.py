import math

import numpy as np
import pytest

from swff import chs
from swff.integrator import verify_transversality
from swff.model import Regime, initial_state, scn_levels, steady_state_SCN
from swff.params import DEFAULT
from swff.rotation import onset_phase, simulate_onsets


def test_plateaus_are_smooth_endpoints():
    hi, lo = scn_levels(DEFAULT)
    for a in (0.3, 0.7, 1.5):
        q = DEFAULT.with_(alpha_SCN=a)
        assert steady_state_SCN(1.0, q) == pytest.approx(hi, abs=1e-12)
        assert steady_state_SCN(-1.0, q) == pytest.approx(lo, abs=1e-12)


def test_vector_field_relaxes_to_side_plateau():
    X, r = chs.chs_initial_state(DEFAULT)
    hi, lo = scn_levels(DEFAULT)
    for scn_high in (True, False):
        reg = Regime(r.wake, scn_high)
        target = hi if scn_high else lo
        d = chs.chs_vector_field(np.array(X._replace(f_SCN=target + 1.0)), reg, DEFAULT)
        assert d[2] == pytest.approx(-1.0 / DEFAULT.tau_SCN)
    assert chs.region(Regime(True, True)) != chs.region(Regime(False, True))
    assert len({chs.region(Regime(w, s)) for w in (0, 1) for s in (0, 1)}) == 4


def test_sigma_times_closed_form_and_events():
    ts = chs.sigma_times(0.0, 72.0, DEFAULT)
    assert len(ts) == 6
    assert [d for _, d in ts][:2] in ([-1, 1], [1, -1])
    for t, _ in ts:
        assert math.cos(DEFAULT.omega * (t - DEFAULT.phi)) == pytest.approx(DEFAULT.beta_SCN, abs=1e-12)
    X, r = chs.chs_initial_state(DEFAULT)
    tr = chs.chs_integrate(X, r, 72.0, DEFAULT)
    ev = sorted(e.t for e in tr.events if e.kind.startswith("sigma"))
    assert np.allclose(ev, [t for t, _ in ts], atol=1e-8)


def test_flag_must_match_side():
    X, r = chs.chs_initial_state(DEFAULT)
    with pytest.raises(ValueError):
        chs.chs_integrate(X, Regime(r.wake, not r.scn_high), 24.0, DEFAULT)


def test_transversal_crossings():
    X, r = chs.chs_initial_state(DEFAULT.with_(k=0.5))
    tr = chs.chs_integrate(X, r, 20 * 24.0, DEFAULT.with_(k=0.5))
    rep = verify_transversality(tr, DEFAULT)
    assert rep["checked"] > 40 and not rep["violations"]


def test_locking_two_per_day():
    p = DEFAULT.with_(k=0.449)
    th, _, _ = simulate_onsets(p, 60, chs=True)
    ph = [onset_phase(x) for x in th[-6:]]
    res = chs.locked_phases(ph)
    assert all(ok for _, ok in res.values())


def test_locked_phases_wraps():
    res = chs.locked_phases([0.999], targets=(0.0,), tol=0.01)
    assert res[0.0][1] and res[0.0][0] == pytest.approx(0.001)


def test_fold_levels_flat_and_ordered():
    lv = chs.fold_levels(DEFAULT)
    assert lv["high"][0] > lv["low"][0]
    assert lv["high"][0] > lv["high"][1] and lv["low"][0] > lv["low"][1]


def test_fold_limit():
    gaps = [chs.fold_limit_gap(DEFAULT, a, n=32) for a in (0.3, 0.1, 0.03)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6
