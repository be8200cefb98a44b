"""Event-driven integration of the piecewise-smooth SWFF system.

The heavy lifting happens in the compiled kernel (``swff.kernel.run``): a
Dormand-Prince 5(4) stepper with dense output that restarts at every switching
event. This module wraps it in value types, checks the crossing condition at
each event and writes the CSV exports.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernel
from .model import ModelState, Regime, vector_field
from .params import ParameterSet

EVENT_KINDS = ("sleep_onset", "wake_onset", "circadian_minimum",
               "sigma_crossing_up", "sigma_crossing_down")
STATE_COLUMNS = ("f_W", "f_S", "f_SCN", "h", "c", "theta")


class IntegrationError(RuntimeError):
    """Numerical failure inside the integrator."""


class StepUnderflow(IntegrationError):
    pass


class EventBracketError(IntegrationError):
    pass


class SlidingDetected(IntegrationError):
    """A switching event violated the crossing condition."""


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-9
    atol: float = 1e-11
    event_tol: float = 1e-9
    first_step: float = 1e-3
    max_step: float = 1.0
    max_sleep_onsets: int = 0  # stop after this many sleep onsets; 0 = no limit
    record: bool = True
    gamma_events: bool = True
    check_crossing: bool = True
    eps_num: float = 1e-10

    def __post_init__(self):
        for name in ("rtol", "atol", "event_tol", "first_step", "max_step", "eps_num"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_sleep_onsets < 0:
            raise ValueError("max_sleep_onsets must be >= 0")


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: str
    state: ModelState


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    regime: np.ndarray  # (n, 2) int8: wake flag, scn-high flag
    events: list
    params: ParameterSet
    chs: bool = False
    status: int = 0
    final_regime: Regime = Regime(True, False)
    nsteps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def samples(self):
        return [(float(t), ModelState.from_array(y)) for t, y in zip(self.t, self.y)]

    @property
    def final_state(self) -> ModelState:
        return ModelState.from_array(self.y[-1])

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    def sleep_onsets(self) -> list:
        return self.of_kind("sleep_onset")

    def gamma_events(self) -> list:
        return [e for e in self.events if e.kind in ("sleep_onset", "wake_onset")]

    def episodes(self, after: float = -math.inf):
        """Completed ``(wake_durations, sleep_durations)`` starting after time ``after``."""
        ev = [e for e in self.gamma_events() if e.t >= after]
        wake, sleep = [], []
        for a, b in zip(ev[:-1], ev[1:]):
            (wake if a.kind == "wake_onset" else sleep).append(b.t - a.t)
        return np.array(wake), np.array(sleep)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t", *STATE_COLUMNS, "regime"]
            if self.chs:
                head.append("region")
            w.writerow(head)
            for t, y, r in zip(self.t, self.y, self.regime):
                row = [repr(float(t)), *(repr(float(v)) for v in y), "wake" if r[0] else "sleep"]
                if self.chs:
                    row.append(region_code(bool(r[0]), bool(r[1])))
                w.writerow(row)

    def events_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "kind", *STATE_COLUMNS])
            for e in self.events:
                w.writerow([repr(e.t), e.kind, *(repr(float(v)) for v in e.state)])


def region_code(wake: bool, scn_high: bool) -> str:
    """Hard-switch subregion label: F11 (high, wake), F12 (low, wake), F21 (low, sleep), F22 (high, sleep)."""
    if wake:
        return "F11" if scn_high else "F12"
    return "F22" if scn_high else "F21"


def crossing_products(state, p: ParameterSet, chs: bool = False) -> dict:
    """Products of the boundary-normal components of the fields on either side.

    Gamma uses ``g = f_W - theta_W`` and compares the wake and sleep fields;
    Sigma (hard switch only) uses ``g = c - beta_SCN``. Non-negative means
    the flow crosses; a negative value would mean sliding.
    """
    scn = bool(state[4] > p.beta_SCN)
    out = {}
    if chs:
        for s in (True, False):
            f1 = vector_field(state, Regime(True, s), p, chs=True)
            f2 = vector_field(state, Regime(False, s), p, chs=True)
            out["gamma_high" if s else "gamma_low"] = float(f1[0] * f2[0])
        for wk in (True, False):
            f1 = vector_field(state, Regime(wk, True), p, chs=True)
            f2 = vector_field(state, Regime(wk, False), p, chs=True)
            out["sigma_wake" if wk else "sigma_sleep"] = float(f1[4] * f2[4])
    else:
        f1 = vector_field(state, Regime(True, scn), p)
        f2 = vector_field(state, Regime(False, scn), p)
        out["gamma"] = float(f1[0] * f2[0])
    return out


def integrate(X0, r0: Regime, horizon: float, p: ParameterSet,
              opts: IntegratorOptions = DEFAULT_OPTIONS, t0: float = 0.0,
              chs: bool = False) -> Trajectory:
    """Integrate from ``X0`` in regime ``r0`` for ``horizon`` hours."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    y0 = np.asarray(X0, dtype=np.float64)
    if y0.shape != (6,) or not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be 6 finite numbers")
    status, t, y, wake, scn, raw, samples, nsteps = kernel.run(
        y0, int(bool(r0.wake)), int(bool(r0.scn_high)), float(t0), float(t0 + horizon),
        p.packed(), int(chs), opts.rtol, opts.atol, opts.event_tol, opts.first_step,
        opts.max_step, opts.max_sleep_onsets, int(opts.gamma_events), int(opts.record))
    if status == -1:
        raise StepUnderflow(f"step size underflow at t={t:.6f} h")
    if status == -2:
        raise EventBracketError(f"event refinement failed at t={t:.6f} h")
    events = [EventRecord(float(te), EVENT_KINDS[kind], ModelState(*st)) for te, kind, st in raw]
    if samples is None:
        ts = np.array([t0, t])
        ys = np.vstack([y0, y])
        rs = np.array([[r0.wake, r0.scn_high], [wake, scn]], dtype=np.int8)
    else:
        ts, ys, rs = samples
    tr = Trajectory(ts, ys, rs, events, p, chs, status, Regime(bool(wake), bool(scn)), nsteps)
    if opts.check_crossing:
        bad = verify_transversality(tr, p, opts.eps_num)
        if bad["violations"]:
            v = bad["violations"][0]
            raise SlidingDetected(f"crossing condition violated at t={v['t']:.9f} h ({v['boundary']}: {v['product']:.3e})")
    return tr


def verify_transversality(tr: Trajectory, p: ParameterSet, eps_num: float = 1e-10) -> dict:
    """Evaluate the crossing products at every switching event of ``tr``."""
    violations = []
    checked = 0
    min_product = math.inf
    for e in tr.events:
        if e.kind == "circadian_minimum":
            continue
        checked += 1
        for name, val in crossing_products(e.state, p, tr.chs).items():
            if e.kind.startswith("sigma") != name.startswith("sigma"):
                continue
            min_product = min(min_product, val)
            if val < -eps_num:
                violations.append({"t": e.t, "kind": e.kind, "boundary": name, "product": val})
    return {"checked": checked, "violations": violations,
            "min_product": None if checked == 0 else min_product}


def event_time(bracket, event_fn, dense_eval=None, tol: float = 1e-12) -> float:
    """Root of ``event_fn`` (optionally composed with ``dense_eval``) inside ``bracket``."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo <= hi:
        raise ValueError("bracket must be ordered")
    g = (lambda s: event_fn(dense_eval(s))) if dense_eval is not None else event_fn
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise ValueError("event function does not change sign over the bracket")
    return float(brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))
