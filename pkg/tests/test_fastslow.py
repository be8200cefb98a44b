import math

import numpy as np
import pytest

from swff import fastslow as fs
from swff.circlemap import upper_fold, fold_key
from swff.integrator import integrate
from swff.model import initial_state, steady_state_SCN
from swff.params import DEFAULT


def _residual(eq, h, c, p=DEFAULT):
    scn = float(steady_state_SCN(c, p))
    return abs(fs._composed(eq.f_W, h, scn, p)[0] - eq.f_W)


def test_bistable_wedge_has_three_roots():
    up, lo = fs.fold_points(0.0, DEFAULT)
    eqs = fs.fast_equilibria(0.5 * (up + lo), 0.0, DEFAULT)
    assert len(eqs) == 3
    assert [e.branch for e in eqs] == ["lower", "middle", "upper"]
    assert [e.stability for e in eqs] == ["stable", "saddle", "stable"]
    assert [e.f_W for e in eqs] == sorted(e.f_W for e in eqs)


def test_above_upper_fold_only_sleep_branch():
    up, _ = fs.fold_points(0.0, DEFAULT)
    eqs = fs.fast_equilibria(up + 20.0, 0.0, DEFAULT)
    assert len(eqs) == 1 and eqs[0].f_W < DEFAULT.theta_W
    # dense-grid root count oracle
    assert fs.count_equilibria(up + 20.0, 0.0, DEFAULT, n=20000) == 1


@pytest.mark.parametrize("c", [-1.0, -0.4, 0.0, 0.5, 1.0])
def test_roots_and_decoupling(c):
    for h in np.linspace(5, 315, 12):
        for eq in fs.fast_equilibria(h, c, DEFAULT):
            assert _residual(eq, h, c) < 1e-10
            assert eq.f_SCN == pytest.approx(float(steady_state_SCN(c, DEFAULT)), abs=1e-12)
            # the closed-form inverse of the z-curve is a root at its own h
            hz = fs.z_curve_h(eq.f_W, c, DEFAULT)
            scn = float(steady_state_SCN(c, DEFAULT))
            assert abs(fs._composed(eq.f_W, hz, scn, DEFAULT)[0] - eq.f_W) < 1e-9


def test_root_count_stable_with_grid():
    for h in np.linspace(0, 320, 33):
        for c in (-1.0, 0.0, 1.0):
            assert fs.count_equilibria(h, c, DEFAULT) == fs.count_equilibria(h, c, DEFAULT, n=40000)


def test_fold_points_ordered_and_move_with_c():
    vals = [fs.fold_points(c, DEFAULT) for c in (-1.0, 0.0, 1.0)]
    for up, lo in vals:
        assert lo < up
    assert len({round(v[0], 6) for v in vals}) == 3
    ups = [v[0] for v in vals]
    assert ups == sorted(ups)


@pytest.mark.parametrize("c", [-0.8, 0.0, 0.7])
def test_fold_conditions(c):
    scn = float(steady_state_SCN(c, DEFAULT))
    for (h, fw) in fs.fold_details(c, DEFAULT):
        w, slope, _ = fs._composed(fw, h, scn, DEFAULT)
        assert abs(w - fw) < 1e-10
        assert abs(slope - 1.0) < 1e-8
    coarse = fs.fold_points(c, DEFAULT, refine=False)
    fine = fs.fold_points(c, DEFAULT)
    assert np.allclose(coarse, fine, atol=1e-6)


def test_fold_bracketing():
    for c in (-0.5, 0.3):
        up, lo = fs.fold_points(c, DEFAULT)
        d = 1e-4 * (DEFAULT.h_max - DEFAULT.h_min)
        assert fs.count_equilibria(lo + d, c, DEFAULT) == 3
        assert fs.count_equilibria(up - d, c, DEFAULT) == 3
        assert fs.count_equilibria(lo - d, c, DEFAULT) == 1
        assert fs.count_equilibria(up + d, c, DEFAULT) == 1


def test_sn_curve_samples_verified():
    fc = fs.sn_curve("upper", 16, DEFAULT)
    assert np.all(np.diff(fc.c) > 0) and fc.c[0] == -1.0 and fc.c[-1] == 1.0
    for c, h, fw in fc.samples[::3]:
        d = 0.05
        assert fs.count_equilibria(h - d, c, DEFAULT) == 3
        assert fs.count_equilibria(h + d, c, DEFAULT) == 1
    with pytest.raises(ValueError):
        fs.sn_curve("upper", 8, DEFAULT)
    with pytest.raises(ValueError):
        fs.sn_curve("middle", 16, DEFAULT)


def test_curvature_grows_for_small_alpha():
    def steep(a):
        fc = fs.sn_curve("upper", 32, DEFAULT.with_(alpha_SCN=a))
        return np.max(np.abs(np.diff(fc.h_fold) / np.diff(fc.c)))
    assert steep(0.3) > steep(1.5)


def test_sn_curve_smooth_and_periodic_in_phase():
    fc = fs.sn_curve("upper", 64, DEFAULT)
    # over one circadian cycle c runs -1 -> 1 -> -1, so h_fold(c(t)) is 24 h periodic by construction;
    # smoothness: second differences bounded
    h = fc.h_at(np.cos(np.linspace(0, 2 * np.pi, 400)))
    assert h[0] == pytest.approx(h[-1])
    assert np.max(np.abs(np.diff(h, 2))) < 1.0


def test_unstable_manifold_ic():
    c = math.cos(math.pi + 2 * math.pi * 0.3)
    st0 = fs.unstable_manifold_ic(c, 0.0, DEFAULT)
    h, fw, fS, scn = fs.fold_state(c, DEFAULT)
    assert np.allclose(st0[:4], [fw, fS, scn, h], atol=1e-12)
    J, lam, v = fs.centre_eigenpair(c, DEFAULT)
    assert np.linalg.norm(J @ v - lam * v) < 1e-10
    st = fs.unstable_manifold_ic(c, 1e-3, DEFAULT)
    assert st.f_W < st0.f_W


def test_manifold_start_reaches_gamma_quickly():
    from swff.circlemap import ReturnMap, theta_of_phase
    m = ReturnMap(DEFAULT, 1)
    for psi in (0.2, 0.3, 0.4):
        assert m.manifold(psi).delay < 2.0


def test_orbit_onsets_on_upper_fold():
    X, r = initial_state(DEFAULT)
    tr = integrate(X, r, 20 * 24.0, DEFAULT)
    fc = upper_fold(fold_key(DEFAULT))
    for e in tr.sleep_onsets()[-5:]:
        # the fall-off starts at the fold: the onset state lies just beyond it in h
        gap = (e.state.h - float(fc.h_at(e.state.c))) / (DEFAULT.h_max - DEFAULT.h_min)
        assert 0.0 <= gap < 0.1


def test_exports(tmp_path):
    fc = fs.sn_curve("upper", 16, DEFAULT)
    fs.write_fold_csv([fc], tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "side,c,h_fold,f_W_fold" and len(lines) == len(fc.c) + 1
    rows = fs.z_surface(DEFAULT, 3, 4)
    fs.write_zsurface_csv(rows, tmp_path / "z.csv")
    assert (tmp_path / "z.csv").read_text().splitlines()[0] == "c,h,f_W,branch"


def test_chs_levels_flat():
    hi = fs.fold_points(0.5, DEFAULT, chs=True)
    hi2 = fs.fold_points(0.9, DEFAULT, chs=True)
    assert np.allclose(hi, hi2, atol=1e-8)
