"""Vector field and steady-state response functions of the SWFF model.

Time is in hours. The circadian phase variable ``theta`` is kept unwrapped
and satisfies ``c = cos(theta)`` along exact solutions, so circadian minima
sit at ``theta = pi (mod 2 pi)``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .params import ParameterSet

SCN_REF_ALPHA = 0.7


class ModelState(NamedTuple):
    f_W: float
    f_S: float
    f_SCN: float
    h: float
    c: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ModelState":
        return cls(*(float(v) for v in arr))


class Regime(NamedTuple):
    """Which smooth field is active: Gamma side (wake) and Sigma side (CHS only)."""

    wake: bool
    scn_high: bool = False

    @classmethod
    def of(cls, state: ModelState, p: ParameterSet) -> "Regime":
        return cls(state.f_W > p.theta_W, state.c > p.beta_SCN)


def steady_state_W(x, p: ParameterSet):
    return p.W_max * 0.5 * (1.0 + np.tanh((x - p.beta_W) / p.alpha_W))


def beta_S(h, p: ParameterSet):
    return p.k2 * h + p.k1


def steady_state_S(x, h, p: ParameterSet):
    return p.S_max * 0.5 * (1.0 + np.tanh((x - beta_S(h, p)) / p.alpha_S))


def scn_gain(alpha_scn: float) -> float:
    return math.tanh(1.0 / SCN_REF_ALPHA) / math.tanh(1.0 / alpha_scn)


def steady_state_SCN(x, p: ParameterSet):
    if not p.alpha_SCN > 0:
        raise ValueError("alpha_SCN must be positive; use the hard-switch model for the step limit")
    return p.SCN_max * 0.5 * (
        1.0 + scn_gain(p.alpha_SCN) * np.tanh((x - p.beta_SCN) / p.alpha_SCN))


def scn_levels(p: ParameterSet) -> tuple[float, float]:
    """High and low SCN plateaus of the hard-switch limit."""
    t = math.tanh(1.0 / SCN_REF_ALPHA)
    return p.SCN_max * 0.5 * (1.0 + t), p.SCN_max * 0.5 * (1.0 - t)


def circadian(t, p: ParameterSet):
    """Closed-form circadian drive: returns ``(c, theta mod 2 pi)``."""
    theta = p.omega * (np.asarray(t, dtype=float) - p.phi)
    return np.cos(theta), np.mod(theta, 2.0 * np.pi)


def theta_at(t: float, p: ParameterSet) -> float:
    return p.omega * (t - p.phi)


def circadian_minimum_before(theta: float) -> float:
    """Elapsed time (h) since the last circadian minimum, given unwrapped theta."""
    return math.fmod(theta - math.pi, 2.0 * math.pi) % (2.0 * math.pi) / (2.0 * math.pi) * 24.0


def vector_field(X, r: Regime, p: ParameterSet, chs: bool = False) -> np.ndarray:
    """Right-hand side of the region selected by ``r``.

    With ``chs=True`` the SCN target is the hard-switch plateau picked by
    ``r.scn_high``; otherwise the smooth response to ``c`` is used.
    """
    fW, fS, fSCN, h, c, th = (float(v) for v in X)
    dfW = (steady_state_W(p.g_scnw * fSCN - p.g_sw * fS, p) - fW) / p.tau_W
    dfS = (steady_state_S(-p.g_ws * fW - p.g_scns * fSCN, h, p) - fS) / p.tau_S
    if chs:
        hi, lo = scn_levels(p)
        target = hi if r.scn_high else lo
    else:
        target = steady_state_SCN(c, p)
    dfSCN = (target - fSCN) / p.tau_SCN
    if r.wake:
        dh = (p.h_max - h) / (p.k * p.tau_hw)
    else:
        dh = (p.h_min - h) / (p.k * p.tau_hs)
    dc = -p.omega * math.sin(th)
    return np.array([dfW, dfS, dfSCN, dh, dc, p.omega])


def initial_state(p: ParameterSet, t0: float = 0.0, h0: float = 150.0) -> tuple[ModelState, Regime]:
    """A generic awake starting point at time ``t0``."""
    th = theta_at(t0, p)
    c = math.cos(th)
    return ModelState(5.5, 0.05, float(steady_state_SCN(c, p)), h0, c, th), Regime(True, c > p.beta_SCN)
