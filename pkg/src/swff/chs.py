"""Circadian hard-switch (CHS) limit: four smooth regions split by Gamma and Sigma.

The SCN rate relaxes to one of two plateaus, chosen by the side of
``Sigma = {c = beta_SCN}``. Both plateaus equal the smooth model's
endpoint values ``SCN_inf(+-1)``, which do not depend on ``alpha_SCN``. The
same event engine as the smooth model runs this system with Sigma events
switched on. At an exact tie the Sigma event is processed first.
"""
from __future__ import annotations

import math

import numpy as np

from .fastslow import fold_points, sn_curve
from .integrator import DEFAULT_OPTIONS, IntegratorOptions, Trajectory, integrate, region_code
from .model import ModelState, Regime, initial_state, scn_levels, vector_field
from .params import ParameterSet
from .rotation import Staircase, rotation_number, staircase

LOCK_PHASES = (0.75, 0.25)  # Sigma with decreasing / increasing c when beta_SCN = 0

ChsRegime = Regime


def region(r: Regime) -> str:
    return region_code(r.wake, r.scn_high)


def chs_vector_field(X, r: Regime, p: ParameterSet) -> np.ndarray:
    return vector_field(X, r, p, chs=True)


def chs_initial_state(p: ParameterSet, t0: float = 0.0) -> tuple[ModelState, Regime]:
    X, r = initial_state(p, t0)
    hi, lo = scn_levels(p)
    return X._replace(f_SCN=hi if r.scn_high else lo), r


def chs_integrate(X0, r0: Regime, horizon: float, p: ParameterSet,
                  opts: IntegratorOptions = DEFAULT_OPTIONS, t0: float = 0.0) -> Trajectory:
    """Integrate the hard-switch system; crossing products are checked at every Gamma and Sigma event."""
    c0 = float(X0[4])
    if c0 != p.beta_SCN and (c0 > p.beta_SCN) != bool(r0.scn_high):
        raise ValueError("scn_high flag disagrees with the side of Sigma")
    return integrate(X0, r0, horizon, p, opts, t0, chs=True)


def sigma_times(t0: float, t1: float, p: ParameterSet) -> list:
    """Closed-form Sigma crossing times in ``[t0, t1]`` as ``(t, direction)``, direction +1 for rising c."""
    if abs(p.beta_SCN) > 1.0:
        return []
    a = math.acos(p.beta_SCN)  # theta of the falling crossing, mod 2 pi
    out = []
    for base, d in ((a, -1), (2.0 * math.pi - a, 1)):
        n0 = math.floor((p.omega * (t0 - p.phi) - base) / (2.0 * math.pi))
        n = n0
        while True:
            t = p.phi + (base + 2.0 * math.pi * n) / p.omega
            if t > t1:
                break
            if t >= t0:
                out.append((t, d))
            n += 1
    return sorted(out)


def locked_phases(phases, targets=LOCK_PHASES, tol: float = 0.01) -> dict:
    """Distance from each target phase to the nearest onset phase, and whether it is within ``tol``."""
    out = {}
    for tgt in targets:
        d = min(min(abs(x - tgt) % 1.0, 1.0 - abs(x - tgt) % 1.0) for x in phases)
        out[tgt] = (d, d <= tol)
    return out


def chs_rotation(p: ParameterSet, **kw):
    return rotation_number(p, chs=True, **kw)


def chs_staircase(k_grid, p: ParameterSet, jobs: int | None = None, **kw) -> Staircase:
    return staircase(k_grid, p, jobs=jobs, chs=True, **kw)


def fold_levels(p: ParameterSet) -> dict:
    """The two flat upper/lower fold levels of the double Z-surface, one per side of Sigma."""
    out = {}
    for side, c in (("high", 0.5), ("low", -0.5)):
        out[side] = fold_points(c, p, chs=True)
    return out


def fold_limit_gap(p: ParameterSet, alpha: float, c_abs: float = 0.5, n: int = 64) -> float:
    """Largest fold-level gap between the smooth model at ``alpha`` and the hard switch, over ``|c| >= c_abs``.

    Shrinks to zero as ``alpha`` goes to 0 (away from Sigma itself).
    """
    lv = fold_levels(p)
    q = p.with_(alpha_SCN=alpha)
    worst = 0.0
    for pick, side in ((0, "upper"), (1, "lower")):
        fc = sn_curve(side, n, q)
        mask = np.abs(fc.c - p.beta_SCN) >= c_abs
        for c, h in zip(fc.c[mask], fc.h_fold[mask]):
            ref = lv["high" if c > p.beta_SCN else "low"][pick]
            worst = max(worst, abs(h - ref))
    return worst
