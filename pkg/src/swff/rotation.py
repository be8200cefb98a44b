"""Rotation numbers from simulated sleep-onset sequences, and staircases over k.

A pattern is found by walking back from the last sleep onset to the most
recent earlier onset at the same circadian phase (within ``tol``). The onsets
after that one form one period: ``p`` sleeps spanning ``q`` circadian minima.
When no repeat is found the result falls back to days per sleep over a
longer run and is marked inexact.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernel
from .model import initial_state, scn_levels
from .params import ParameterSet

MATCH_TOL = 3e-4
DAYS = 100
FALLBACK_DAYS = 120
CONFIRM_PERIODS = 3
LONG_DAYS = 400  # Farey probes that stay inexact at DAYS are rerun this long, half discarded
RTOL, ATOL, EVENT_TOL = 1e-9, 1e-11, 1e-9


class RotationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RotationResult:
    p: int  # sleeps per period (total sleeps when inexact)
    q: int  # circadian days per period (total days when inexact)
    rho: Fraction | float
    exact: bool
    phases: tuple = ()  # onset phases of one period, in order
    robust: bool = True  # unchanged when the matching tolerance is halved

    @property
    def value(self) -> float:
        return float(self.rho)

    def __str__(self):
        return str(self.rho) if self.exact else f"~{float(self.rho):.6f}"


def onset_phase(theta: float) -> float:
    return float(((theta - math.pi) % (2.0 * math.pi)) / (2.0 * math.pi))


def day_index(theta: float) -> int:
    """Index of the circadian minimum preceding ``theta``."""
    return math.floor((theta - math.pi) / (2.0 * math.pi))


def pattern_from_onsets(phases, days, tol: float = MATCH_TOL):
    """``(p, q, first)`` for the trailing repeat in an onset sequence, or ``None``.

    ``days[i]`` is the index of the circadian minimum preceding onset ``i``.
    ``q`` counts minima in the half-open span ``(t_first, t_last]``, i.e.
    ``days[last] - days[first]``; ``p`` is reduced later, not here.
    """
    n = len(phases)
    if n < 2:
        return None
    last = phases[-1]
    for j in range(n - 2, -1, -1):
        d = abs(phases[j] - last) % 1.0
        if min(d, 1.0 - d) < tol:
            return n - 1 - j, int(days[-1] - days[j]), j
    return None


def reduce(p: int, q: int) -> Fraction:
    if p <= 0:
        raise ValueError("p must be positive")
    return Fraction(q, p)


def _start(params: ParameterSet, chs: bool):
    X, r = initial_state(params)
    if chs:
        hi, lo = scn_levels(params)
        X = X._replace(f_SCN=hi if r.scn_high else lo)
    return np.array(X, dtype=np.float64), r


def simulate_onsets(params: ParameterSet, days: float, chs: bool = False, y0=None, regime=None,
                    t0: float = 0.0):
    """Onset thetas and times over ``days`` days plus the final kernel state."""
    if y0 is None:
        y0, r = _start(params, chs)
        wake, scn = int(r.wake), int(r.scn_high)
    else:
        wake, scn = regime
    status, t, y, w, s, ev, _, _ = kernel.run(
        np.asarray(y0, dtype=np.float64), wake, scn, t0, t0 + days * 24.0, params.packed(),
        int(chs), RTOL, ATOL, EVENT_TOL, 1e-3, 1.0, 0, 1, 0)
    if status < 0:
        raise RotationError(f"integration failed with status {status} at t={t:.3f} h")
    th = [e[2][5] for e in ev if e[1] == kernel.EV_SLEEP]
    tt = [e[0] for e in ev if e[1] == kernel.EV_SLEEP]
    return np.array(th), np.array(tt), (y, (w, s), t)


def _confirm(pattern, final, params, chs, p, q, tol):
    """Continue the run and check the period repeats ``CONFIRM_PERIODS`` more times."""
    y, reg, t = final
    th, _, _ = simulate_onsets(params, CONFIRM_PERIODS * q + 1.0, chs, y, reg, t)
    need = CONFIRM_PERIODS * p
    if len(th) < need:
        return False
    for i in range(need):
        d = abs(onset_phase(th[i]) - pattern[i % p]) % 1.0
        if min(d, 1.0 - d) > tol:
            return False
    return True


def rotation_number(params: ParameterSet, days: float = DAYS, tol: float = MATCH_TOL,
                    chs: bool = False, discard_days: float = 0.0, confirm: bool = True,
                    check_robust: bool = False) -> RotationResult:
    """Rotation number of the attractor reached from the generic start.

    The default is one 100-day run with no separate transient discard.
    ``discard_days`` ignores onsets before that time (the stricter mode
    uses 50).
    """
    if not days > 0 or not tol > 0:
        raise ValueError("days and tol must be positive")
    th, tt, final = simulate_onsets(params, days, chs)
    keep = tt >= discard_days * 24.0
    th = th[keep]
    if len(th) == 0:
        raise RotationError("no sleep onsets in the horizon")
    phases = [onset_phase(x) for x in th]
    dayi = [day_index(x) for x in th]
    found = pattern_from_onsets(phases, dayi, tol)
    if found is not None:
        p, q, j = found
        pattern = tuple(phases[j + 1:])
        ok = q > 0 and (not confirm or _confirm(pattern, final, params, chs, p, q, tol))
        if ok:
            rho = reduce(p, q)
            # report the primitive period
            pp = rho.denominator
            robust = True
            if check_robust:
                half = pattern_from_onsets(phases, dayi, tol / 2)
                robust = half is not None and reduce(half[0], half[1]) == rho
            return RotationResult(pp, rho.numerator, rho, True, pattern[-pp:], robust)
    # averaged fallback over a longer run
    th2, _, _ = simulate_onsets(params, FALLBACK_DAYS, chs)
    if len(th2) == 0:
        raise RotationError("no sleep onsets in the horizon")
    return RotationResult(len(th2), FALLBACK_DAYS, FALLBACK_DAYS / len(th2), False)


@dataclass
class Plateau:
    k_lo: float
    k_hi: float
    rho: Fraction

    @property
    def p(self):
        return self.rho.denominator

    @property
    def q(self):
        return self.rho.numerator

    @property
    def width(self):
        return self.k_hi - self.k_lo

    def as_dict(self):
        return {"k_lo": self.k_lo, "k_hi": self.k_hi, "p": self.p, "q": self.q}


@dataclass
class Staircase:
    cells: list  # (k, RotationResult), k strictly decreasing
    plateaus: list = field(default_factory=list)
    inexact: list = field(default_factory=list)  # k values of fallback cells
    alpha_scn: float = float("nan")
    chs: bool = False

    def rho_at(self, k: float):
        for kk, r in self.cells:
            if abs(kk - k) < 1e-12:
                return r
        raise KeyError(k)

    def plateau(self, rho) -> list:
        rho = Fraction(rho)
        return [pl for pl in self.plateaus if pl.rho == rho]

    def measure(self, lo, hi) -> float:
        """Total k-width of plateaus with ``lo < rho < hi``."""
        return sum(pl.width for pl in self.plateaus if lo < pl.rho < hi)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "rho_num", "rho_den", "rho", "exact"])
            for k, r in self.cells:
                if r.exact:
                    w.writerow([repr(k), r.rho.numerator, r.rho.denominator, repr(float(r.rho)), 1])
                else:
                    w.writerow([repr(k), r.q, r.p, repr(float(r.rho)), 0])

    def plateaus_json(self) -> str:
        return json.dumps([pl.as_dict() for pl in self.plateaus], indent=2, sort_keys=True)


def plateaus_of(cells) -> tuple[list, list]:
    """Maximal runs of equal exact rho; inexact cells break runs and are listed apart."""
    out, inexact = [], []
    cur = None
    for k, r in cells:
        if not r.exact:
            inexact.append(k)
            cur = None
            continue
        if cur is not None and cur.rho == r.rho:
            cur.k_lo = k
        else:
            cur = Plateau(k, k, r.rho)
            out.append(cur)
    return out, inexact


def _cell(args):
    k, params, chs, kw = args
    return k, rotation_number(params.with_(k=k), chs=chs, **kw)


def default_jobs() -> int:
    env = os.environ.get("SWFF_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_cells(fn, items, jobs: int | None = None) -> list:
    """Ordered ``map`` over a process pool; ``jobs=1`` stays in process."""
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def k_grid(k_hi: float, k_lo: float, step: float = 1e-3) -> list:
    if not step > 0 or not k_hi >= k_lo:
        raise ValueError("need k_hi >= k_lo and a positive step")
    n = int(round((k_hi - k_lo) / step))
    return [round(k_hi - i * step, 12) for i in range(n + 1)]


def staircase(k_grid_desc, params_base: ParameterSet, jobs: int | None = None,
              chs: bool = False, **kw) -> Staircase:
    ks = [float(k) for k in k_grid_desc]
    if not ks:
        raise ValueError("empty k grid")
    if any(not 0 < k <= 1 for k in ks):
        raise ValueError("k values must lie in (0, 1]")
    if any(b >= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k grid must be strictly decreasing")
    cells = map_cells(_cell, [(k, params_base, chs, kw) for k in ks], jobs)
    plats, inexact = plateaus_of(cells)
    return Staircase(cells, plats, inexact, params_base.alpha_SCN, chs)


def _mediant(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(a.numerator + b.numerator, a.denominator + b.denominator)


def farey_check(s: Staircase, params_base: ParameterSet | None = None, budget: int = 12,
                **kw) -> list:
    """Look for the Farey mediant between each pair of neighbouring plateaus.

    Each pair ``a/b`` (larger k) and ``c/d`` with ``|ad - bc| = 1`` is searched
    by bisection in the k-gap between them, steered by the monotone trend of
    rho in k. A probe that finds no repeat within the standard run is
    repeated over ``LONG_DAYS`` with the first half discarded. Pairs that
    fail the unimodularity condition are skipped.
    """
    out = []
    pl = s.plateaus
    for hi, lo in zip(pl, pl[1:]):
        r1, r2 = hi.rho, lo.rho
        det = r1.numerator * r2.denominator - r1.denominator * r2.numerator
        rec = {"upper": str(r1), "lower": str(r2), "k_gap": [lo.k_hi, hi.k_lo]}
        if abs(det) != 1:
            rec.update(status="skipped", reason=f"|ad - bc| = {abs(det)}")
            out.append(rec)
            continue
        med = _mediant(r1, r2)
        rec["mediant"] = str(med)
        # cells already computed inside the gap
        seen = [(k, r) for k, r in s.cells if lo.k_hi < k < hi.k_lo]
        hit = [k for k, r in seen if r.exact and r.rho == med]
        a, b = hi.k_lo, lo.k_hi
        evals = 0
        if params_base is not None:
            # shrink the gap with known cells
            for k, r in seen:
                if r.value > float(med):
                    a = min(a, k)
                elif r.value < float(med):
                    b = max(b, k)
            while not hit and evals < budget and a - b > 1e-6:
                m = 0.5 * (a + b)
                r = rotation_number(params_base.with_(k=m), chs=s.chs, **kw)
                if not r.exact:
                    # long periods near the mediant converge slowly
                    r = rotation_number(params_base.with_(k=m), days=LONG_DAYS,
                                        discard_days=LONG_DAYS / 2, chs=s.chs, **kw)
                evals += 1
                if r.exact and r.rho == med:
                    hit.append(m)
                elif r.value > float(med):
                    a = m
                else:
                    b = m
        rec.update(status="found" if hit else "not_found", k=hit[0] if hit else None,
                   evaluations=evals)
        out.append(rec)
    return out
