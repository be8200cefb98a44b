"""Sleep-onset circle maps built by integration from the upper fold curve.

A map sample starts at initial phase ``psi`` (circadian minimum at 0, so
``theta = pi + 2 pi psi``) on the upper saddle-node curve, runs until
``order + 1`` sleep onsets and records the first onset phase ``Phi_n`` and
the phase ``Phi_{n+p}`` of the last one. Samples also carry the lift
``Phi_n + (advance in days)``, which is continuous and increasing along a
branch and jumps at a discontinuity.

Inside the gap window the direct fold start stalls on the wake plane, so it
is replaced by a start displaced along the fold's centre direction (the
unstable manifold). Both kinds of start land on the same map graph.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import fastslow as fs
from . import kernel
from .model import ModelState, Regime
from .params import ParameterSet

TWO_PI = 2.0 * math.pi
BASE_GRID = 512
GAP_DELAY = 1.0  # h; a fold start slower than this to reach Gamma is in the gap
MANIFOLD_OFFSET = 0.5  # Hz along the centre direction
ONSET_CAP_DAYS = 40
JUMP_FACTOR = 10.0
JUMP_TOL = 1e-4  # smallest jump (in phase) still called a discontinuity after localisation
FAMILY_WINDOW = 0.02  # near a jump only manifold samples are kept; fold starts drift there
INF_SLOPE = 1e3
FIXED_POINT_TOL = 1e-9
APPROACH_LEAD = 4.0  # h on the upper sheet before the fold passage

RTOL, ATOL, EVENT_TOL = 1e-9, 1e-11, 1e-9


class MapError(RuntimeError):
    pass


def phase_of_event(t_event: float, t_prev_min: float) -> float:
    """Circadian phase of an event given the time of the preceding minimum."""
    d = t_event - t_prev_min
    if d < 0:
        raise ValueError("event precedes its circadian minimum")
    if d >= 24.0 + 1e-9:
        raise ValueError("minimum is more than one period before the event")
    return min(d / 24.0, math.nextafter(1.0, 0.0))


def phase_of_theta(theta: float) -> float:
    return ((theta - math.pi) % TWO_PI) / TWO_PI


def theta_of_phase(phi: float) -> float:
    return math.pi + TWO_PI * phi


def start_time(state, p: ParameterSet) -> float:
    return p.phi + state[5] / p.omega


def fold_key(p: ParameterSet) -> ParameterSet:
    """Fold curves do not depend on ``k`` or ``phi``; cache on the rest."""
    return p.with_(k=1.0, phi=0.0)


@lru_cache(maxsize=64)
def upper_fold(pkey: ParameterSet) -> fs.FoldCurve:
    return fs.sn_curve("upper", 65, pkey)


@lru_cache(maxsize=200_000)
def _fold_start(pkey: ParameterSet, psi: float, kind: str, offset: float):
    th = theta_of_phase(psi)
    c = math.cos(th)
    curve = upper_fold(pkey)
    guess = (float(curve.h_at(c)), float(curve.f_W_at(c)))
    if kind == "manifold":
        st = fs.unstable_manifold_ic(c, offset, pkey, theta=th, guess=guess)
    else:
        h, fW, fS, scn = fs.fold_state(c, pkey, "upper", guess=guess)
        st = ModelState(fW, fS, scn, h, c, th)
    return tuple(st)


@lru_cache(maxsize=200_000)
def _approach_start(pkey: ParameterSet, k: float, psi: float, lead: float):
    """Upper-sheet equilibrium ``lead`` hours of wake flow before the fold at ``psi``.

    The homeostat is run backwards in closed form, so the slow flow would
    reach the fold height at phase ``psi``; the trajectory then arrives with
    the fast variables lagging as they do along a real orbit.
    """
    th = theta_of_phase(psi)
    hf = float(upper_fold(pkey).h_at(math.cos(th)))
    ths = th - pkey.omega * lead
    cs = math.cos(ths)
    hs = pkey.h_max - (pkey.h_max - hf) * math.exp(lead / (k * pkey.tau_hw))
    eqs = [e for e in fs.fast_equilibria(hs, cs, pkey)
           if e.stability == "stable" and e.f_W > pkey.theta_W]
    if not eqs:
        raise MapError(f"no upper equilibrium {lead} h before phase {psi}")
    e = max(eqs, key=lambda q: q.f_W)
    return (e.f_W, e.f_S, e.f_SCN, hs, cs, ths)


def _onsets(y0, t0, p: ParameterSet, n: int, packed=None, cap_days=ONSET_CAP_DAYS):
    """Thetas of the first ``n`` sleep onsets from a wake start."""
    packed = p.packed() if packed is None else packed
    status, t, y, w, s, ev, _, _ = kernel.run(
        np.asarray(y0, dtype=np.float64), 1, 0, t0, t0 + cap_days * 24.0, packed, 0,
        RTOL, ATOL, EVENT_TOL, 1e-3, 1.0, n, 1, 0)
    if status < 0:
        raise MapError(f"integration failed (status {status})")
    th = [e[2][5] for e in ev if e[1] == kernel.EV_SLEEP]
    if len(th) < n:
        raise MapError(f"fewer than {n} sleep onsets within {cap_days} days")
    return th, [e[0] for e in ev if e[1] == kernel.EV_SLEEP]


def fold_delay(psi: float, p: ParameterSet, limit: float = GAP_DELAY) -> float:
    """Time (h) from the direct fold start at ``psi`` to its first sleep onset, capped at ``limit``."""
    st = _fold_start(fold_key(p), float(psi), "fold", 0.0)
    t0 = start_time(st, p)
    status, t, y, w, s, ev, _, _ = kernel.run(
        np.array(st), 1, 0, t0, t0 + limit, p.packed(), 0, RTOL, ATOL, EVENT_TOL, 1e-3, 1.0, 1, 1, 0)
    on = [e[0] for e in ev if e[1] == kernel.EV_SLEEP]
    return on[0] - t0 if on else math.inf


def detect_gap(p: ParameterSet, n: int = 128, delay: float = GAP_DELAY):
    """Phase windows where direct fold starts take longer than ``delay`` to fall asleep.

    Returns ``(lo, hi)`` psi intervals spanning the slow grid phases; ``hi``
    exceeds 1 when a window wraps through 0.
    """
    slow = [fold_delay(i / n, p, delay) > delay for i in range(n)]
    if not any(slow):
        return []
    if all(slow):
        return [(0.0, 1.0)]
    start = slow.index(False)
    out, run = [], None
    for i in range(start + 1, start + n + 1):
        if slow[i % n]:
            run = [i, i] if run is None else [run[0], i]
        elif run is not None:
            out.append(run)
            run = None
    wins = []
    for a, b in out:
        lo = (a % n) / n
        wins.append((lo, lo + (b - a) / n))
    return sorted(wins)


def _in_windows(psi, windows):
    for lo, hi in windows:
        if lo <= psi <= hi or lo <= psi + 1.0 <= hi or lo <= psi - 1.0 <= hi:
            return True
    return False


def map_initial_condition(phi: float, fold: fs.FoldCurve | None, p: ParameterSet,
                          gap="auto", offset: float = MANIFOLD_OFFSET):
    """Wake start on the upper fold curve at phase ``phi``.

    ``gap`` selects where the unstable-manifold start replaces the direct one:
    ``"auto"`` tests the direct start (slower than ``GAP_DELAY`` means gap), a
    list of ``(lo, hi)`` windows fixes it, ``None`` never substitutes and
    ``"all"`` always does.
    """
    psi = float(phi) % 1.0
    pkey = fold_key(p)
    if fold is not None and fold.side != "upper":
        raise ValueError("map starts need the upper fold curve")
    if gap == "all":
        use = True
    elif gap is None:
        use = False
    elif gap == "auto":
        use = fold_delay(psi, p) > GAP_DELAY
    else:
        use = _in_windows(psi, gap)
    try:
        st = _fold_start(pkey, psi, "manifold" if use else "fold", offset if use else 0.0)
    except fs.FoldNotFound as exc:
        raise MapError(f"fold curve undefined at phase {psi}: {exc}") from exc
    return ModelState(*st), Regime(True, st[4] > p.beta_SCN)


@dataclass(frozen=True)
class MapSample:
    psi: float
    phi_n: float  # first onset phase, unwrapped so that it follows psi continuously
    lift: float  # phi_n + days advanced over ``order`` onsets
    kind: str  # "fold" | "manifold" | "approach"
    delay: float  # h from start to first onset

    @property
    def value(self) -> float:
        return self.lift % 1.0

    @property
    def advance(self) -> float:
        return self.lift - self.phi_n


class ReturnMap:
    """On-demand sampler of the ``order``-th return sleep-onset map."""

    def __init__(self, params: ParameterSet, order: int = 1, gap="auto",
                 offset: float = MANIFOLD_OFFSET):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.params = params
        self.order = int(order)
        self.gap = gap
        self.offset = offset
        self._packed = params.packed()
        self._pkey = fold_key(params)
        self._cache: dict = {}

    def kind_at(self, psi: float) -> str:
        g = self.gap
        if g == "all":
            return "manifold"
        if g is None:
            return "fold"
        if g == "auto":
            return "manifold" if fold_delay(psi % 1.0, self.params) > GAP_DELAY else "fold"
        return "manifold" if _in_windows(psi % 1.0, g) else "fold"

    def __call__(self, psi: float, kind: str | None = None) -> MapSample:
        psi = float(psi)
        kind = kind or self.kind_at(psi)
        key = (psi, kind)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        base = math.floor(psi)
        frac = psi - base
        try:
            if kind == "approach":
                st = _approach_start(self._pkey, self.params.k, frac, APPROACH_LEAD)
            else:
                st = _fold_start(self._pkey, frac, kind, self.offset if kind == "manifold" else 0.0)
        except fs.FoldNotFound as exc:
            raise MapError(f"fold curve undefined at phase {frac}: {exc}") from exc
        t0 = start_time(st, self.params)
        th, times = _onsets(st, t0, self.params, self.order + 1, self._packed)
        phi_n = base + frac + (th[0] - theta_of_phase(frac)) / TWO_PI
        lift = phi_n + (th[-1] - th[0]) / TWO_PI
        out = MapSample(psi, phi_n, lift, kind, times[0] - t0)
        self._cache[key] = out
        return out

    def manifold(self, psi: float) -> MapSample:
        return self(psi, "manifold")

    def approach(self, psi: float) -> MapSample:
        """Start on the attracting upper sheet; raises ``MapError`` where the fold is not reached."""
        s = self(psi, "approach")
        if s.delay > APPROACH_LEAD + GAP_DELAY:
            raise MapError(f"approach start at {psi} misses the fold")
        return s


@dataclass(frozen=True)
class PhaseGrid:
    phases: tuple
    base: int
    refinements: tuple = ()

    @classmethod
    def uniform(cls, n: int = BASE_GRID) -> "PhaseGrid":
        if n < 4:
            raise ValueError("grid needs at least 4 phases")
        return cls(tuple(i / n for i in range(n)), n)

    def refined(self, new, note: str) -> "PhaseGrid":
        extra = sorted(set(float(x) % 1.0 for x in new) - set(self.phases))
        return PhaseGrid(tuple(sorted(self.phases + tuple(extra))), self.base,
                         self.refinements + ((note, len(extra)),))


@dataclass(frozen=True)
class Discontinuity:
    phi_left: float
    phi_right: float
    jump: float
    left_slope_class: str
    right_slope_class: str
    left_value: float
    right_value: float
    left_slope: float
    right_slope: float
    psi: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SampledCircleMap:
    order: int
    points: list  # (phi_n, phi_{n+p}) sorted by phi_n
    branches: list  # (i0, i1) index ranges into points, inclusive; i0 > i1 wraps
    discontinuities: list
    branch_id: list = field(default_factory=list)
    lifts: np.ndarray | None = None
    kinds: list = field(default_factory=list)
    sampler: ReturnMap | None = None
    grid: PhaseGrid | None = None
    meta: dict = field(default_factory=dict)

    @property
    def params(self):
        return None if self.sampler is None else self.sampler.params

    @property
    def phi(self) -> np.ndarray:
        return np.array([a for a, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([b for _, b in self.points])

    def max_jump(self) -> float:
        return max((d.jump for d in self.discontinuities), default=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "phi_n", "phi_np", "branch_id"])
            for (a, b), bid in zip(self.points, self.branch_id):
                w.writerow([self.order, repr(float(a)), repr(float(b)), bid])

    def discontinuities_json(self) -> str:
        return json.dumps([d.as_dict() for d in self.discontinuities], indent=2, sort_keys=True)


@dataclass(frozen=True)
class MapFixedPoint:
    phi: float
    stability: str  # "stable" | "unstable"
    slope_estimate: float
    q: int = 0  # days advanced per ``order`` onsets
    psi: float = float("nan")
    branch: int = -1


@dataclass(frozen=True)
class BifurcationRecord:
    kind: str  # "SN" | "BC_S" | "BC_U"
    k: float
    alpha_scn: float
    evidence: str
    k_bracket: tuple = ()
    detail: dict = field(default_factory=dict, compare=False)

    @property
    def parameter(self):
        return (self.k, self.alpha_scn)

    @property
    def label(self) -> str:
        return self.kind.replace("_", "-")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "alpha_scn": self.alpha_scn,
                "evidence": self.evidence, "k_bracket": list(self.k_bracket),
                "detail": self.detail}


EVIDENCE = {"SN": "slope->1 bracketing", "BC_S": "fixed point reaches branch endpoint",
            "BC_U": "fixed point reaches branch endpoint"}


def _bisect_jump(m: ReturnMap, psi_a: float, psi_b: float, width: float = 1e-10):
    """Narrow ``[psi_a, psi_b]`` onto its largest lift increment (manifold starts)."""
    a, b = m.manifold(psi_a), m.manifold(psi_b)
    while b.psi - a.psi > width:
        c = m.manifold(0.5 * (a.psi + b.psi))
        if abs(c.lift - a.lift) >= abs(b.lift - c.lift):
            b = c
        else:
            a = c
    return a, b


def manifold_at(m: ReturnMap, x: float, iters: int = 3) -> MapSample:
    """Manifold-start sample whose first onset phase is (nearly) ``x``.

    ``phi_n - psi`` is a slowly varying delay, so a few fixed-point updates suffice.
    """
    s = m.manifold(x)
    for _ in range(iters):
        err = s.phi_n - x
        if abs(err) < 1e-12:
            break
        s = m.manifold(s.psi - err)
    return s


def approach_at(m: ReturnMap, x: float, iters: int = 6) -> MapSample:
    """Approach-start sample whose first onset phase is ``x``."""
    s = m.approach(x - 0.02)
    for _ in range(iters):
        err = s.phi_n - x
        if abs(err) < 1e-12:
            break
        s = m.approach(s.psi - err)
    if abs(s.phi_n - x) > 1e-6:
        raise MapError(f"approach starts do not reach onset phase {x}")
    return s


def _circ(d: float) -> float:
    d = d % 1.0
    return min(d, 1.0 - d)


def _one_sided_slope(m: ReturnMap, s: MapSample, delta: float) -> float:
    t = m.manifold(s.psi + delta)
    return (t.lift - s.lift) / (t.phi_n - s.phi_n)


def localize_discontinuity(m: ReturnMap, psi_a: float, psi_b: float,
                           jump_tol: float = JUMP_TOL, delta: float = 1e-6):
    """Discontinuity between two manifold start phases, or ``None`` if the map is continuous there."""
    a, b = _bisect_jump(m, psi_a, psi_b)
    jump = _circ(b.lift - a.lift)
    if jump <= jump_tol or abs(b.phi_n - a.phi_n) > 1e-6:
        return None
    ls = _one_sided_slope(m, a, -delta)
    rs = _one_sided_slope(m, b, delta)
    return Discontinuity(
        phi_left=a.phi_n % 1.0, phi_right=b.phi_n % 1.0, jump=jump,
        left_slope_class="infinite" if abs(ls) > INF_SLOPE else "finite",
        right_slope_class="infinite" if abs(rs) > INF_SLOPE else "finite",
        left_value=a.value, right_value=b.value, left_slope=ls, right_slope=rs,
        psi=0.5 * (a.psi + b.psi) % 1.0)


def _local_median(x: np.ndarray, i: int, half: int = 8) -> float:
    n = len(x)
    idx = [(i + j) % n for j in range(-half, half + 1)]
    return float(np.median(x[idx]))


def build_map(p_order: int = 1, grid: PhaseGrid | None = None, params: ParameterSet | None = None,
              fold: fs.FoldCurve | None = None, gap="auto", offset: float = MANIFOLD_OFFSET,
              refine: bool = True, sampler: ReturnMap | None = None) -> SampledCircleMap:
    """Sample the ``p_order``-th return map on ``grid`` and annotate its branches.

    Jumps larger than ``JUMP_FACTOR`` times the local median increment are
    refined twice; survivors are localised by bisection and kept when the
    limiting values still differ by more than ``JUMP_TOL``.
    """
    if p_order < 1:
        raise ValueError("p_order must be >= 1")
    if params is None:
        from .params import DEFAULT as params
    if fold is not None and fold.side != "upper":
        raise ValueError("map starts need the upper fold curve")
    m = sampler or ReturnMap(params, p_order, gap, offset)
    grid = grid or PhaseGrid.uniform()
    samples = [m(psi) for psi in grid.phases]
    def graph(ss):
        pts = sorted(((s.phi_n % 1.0, s.lift - math.floor(s.phi_n), s) for s in ss), key=lambda r: r[0])
        x = np.array([r[0] for r in pts])
        y = np.array([r[1] for r in pts])
        return x, y, [r[2] for r in pts]

    x, y, ss = graph(samples)
    n = len(x)
    inc = np.abs(np.diff(np.append(y, y[0] + 1.0)))
    cands = [i for i in range(n) if inc[i] > JUMP_FACTOR * _local_median(inc, i) and inc[i] > 1e-12]
    disc = []
    added = []
    if refine:
        for i in cands:
            med = _local_median(inc, i)
            # fold and manifold starts place a jump slightly differently, so
            # scan a widened bracket with manifold starts only
            h = 3.0 / n
            sa = manifold_at(m, x[i] - h)
            sb = manifold_at(m, x[i] + (x[(i + 1) % n] - x[i]) % 1.0 + h)
            psis = np.linspace(sa.psi, sb.psi if sb.psi > sa.psi else sb.psi + 1.0, 17)
            loc = [m.manifold(ps) for ps in psis]
            added.extend(loc)
            for sa, sb in zip(loc[:-1], loc[1:]):
                if abs(sb.lift - sa.lift) <= JUMP_FACTOR * med * (psis[1] - psis[0]) * n:
                    continue
                d = localize_discontinuity(m, sa.psi, sb.psi)
                if d is not None and all(abs(d.phi_left - e.phi_left) > 1e-7 for e in disc):
                    disc.append(d)
        # small branches hide next to big jumps: rescan each neighbourhood finely
        for d in list(disc):
            for side in (-1, 1):
                xs = [d.phi_left + side * (j + 0.5) / (8 * n) for j in range(32)]
                loc = sorted((manifold_at(m, xv) for xv in xs), key=lambda s: s.phi_n)
                added.extend(loc)
                li = np.abs(np.diff([s.lift for s in loc]))
                med = float(np.median(li))
                for j in np.nonzero(li > JUMP_FACTOR * med)[0]:
                    e = localize_discontinuity(m, loc[j].psi, loc[j + 1].psi)
                    if e is not None and all(abs(e.phi_left - f.phi_left) > 1e-7 for f in disc):
                        disc.append(e)
    if added:
        grid = grid.refined([s.psi for s in added], "jump")
        uniq = {(s.psi, s.kind): s for s in samples + added}
        keep = [s for s in uniq.values()
                if s.kind == "manifold" or all(abs(_circ(s.phi_n - d.phi_left)) > FAMILY_WINDOW for d in disc)]
        x, y, ss = graph(keep)
        n = len(x)
    disc.sort(key=lambda d: d.phi_left)
    # branch ids: number of discontinuities at or left of each point
    cuts = [d.phi_right for d in disc]
    bid = [int(np.searchsorted(cuts, xi, side="right")) % max(len(cuts), 1) for xi in x]
    branches = []
    if disc:
        for b in range(len(cuts)):
            idx = [i for i in range(n) if bid[i] == b]
            if not idx:
                continue
            # a wrapping branch starts after the last cut
            if b == 0 and len(cuts) > 0:
                tail = [i for i in idx if x[i] >= cuts[-1]]
                head = [i for i in idx if x[i] < cuts[0]]
                branches.append((tail[0] if tail else head[0], head[-1] if head else tail[-1]))
            else:
                branches.append((idx[0], idx[-1]))
    else:
        branches.append((0, n - 1))
    out = SampledCircleMap(
        order=p_order, points=[(float(a), float(b % 1.0)) for a, b in zip(x, y)],
        branches=branches, discontinuities=disc, branch_id=bid, lifts=y,
        kinds=[s.kind for s in ss], sampler=m, grid=grid,
        meta={"jump_factor": JUMP_FACTOR, "jump_tol": JUMP_TOL, "inf_slope": INF_SLOPE,
              "gap": gap if gap in ("auto", "all", None) else list(gap), "offset": offset})
    out.meta["monotone"] = branch_monotone(out)
    out.meta["monotone_defect"] = monotone_defect(out)
    return out


def branch_monotone(m: SampledCircleMap) -> bool:
    """True when the lift increases strictly along every branch."""
    x, y = m.phi, m.lifts
    n = len(x)
    for i in range(n - 1):
        if m.branch_id[i] == m.branch_id[i + 1] and not y[i + 1] > y[i]:
            return False
    if n > 1 and m.branch_id[-1] == m.branch_id[0] and not y[0] + 1.0 > y[-1]:
        return False
    return True


def monotone_defect(m: SampledCircleMap) -> float:
    """Largest drop of the lift below its running maximum along any branch (0 if monotone)."""
    x, y = m.phi, m.lifts
    n = len(x)
    worst = 0.0
    for i0, i1 in m.branches:
        idx = list(range(i0, i1 + 1)) if i0 <= i1 else list(range(i0, n)) + list(range(0, i1 + 1))
        top = -math.inf
        for i in idx:
            v = y[i] + (1.0 if i0 > i1 and i <= i1 else 0.0)
            top = max(top, v)
            worst = max(worst, float(top - v))
    return worst


def _family(m: ReturnMap, family: str):
    if family == "approach":
        return m.approach, lambda x: approach_at(m, x)
    return m.manifold, lambda x: manifold_at(m, x)


def _slope_at(m: ReturnMap, psi: float, lo: float, hi: float, delta: float = 1e-6,
              family: str = "manifold") -> float:
    """Map slope ``dPhi_{n+p}/dPhi_n`` at ``psi``, kept inside ``[lo, hi]``."""
    get, _ = _family(m, family)
    a, b = max(lo, psi - delta), min(hi, psi + delta)
    sa, sb = get(a), get(b)
    return (sb.lift - sa.lift) / (sb.phi_n - sa.phi_n)


def _sampled_zero(m: ReturnMap, q: int, xa: float, xb: float, tol: float,
                  family: str = "manifold"):
    """Refine ``advance = q`` between two graph abscissae; None across a jump."""
    from scipy.optimize import brentq

    get, at = _family(m, family)
    # fold samples sit slightly off the manifold graph; widen until bracketed
    w = xb - xa
    for grow in (0.0, 1.0, 2.0, 4.0, 8.0):
        sa, sb = at(xa - grow * w), at(xb + grow * w)
        if sb.psi < sa.psi:
            sb = get(sb.psi + 1.0)
        if (sa.advance - q) * (sb.advance - q) <= 0:
            break
    else:
        return None
    psi = brentq(lambda s: get(s).advance - q, sa.psi, sb.psi, xtol=min(tol, 1e-11))
    d = 1e-7
    left, right = get(max(sa.psi, psi - d)), get(min(sb.psi, psi + d))
    if abs(right.lift - left.lift) > JUMP_TOL:
        return None
    slope = _slope_at(m, psi, sa.psi, sb.psi, family=family)
    return get(psi).phi_n % 1.0, slope, psi


def find_fixed_points(m: SampledCircleMap, tol: float = FIXED_POINT_TOL) -> list:
    """Diagonal crossings of every branch, refined by re-integration when a sampler is attached."""
    x, y = m.phi, m.lifts
    n = len(x)
    adv = y - x
    out = []
    if n and np.all(np.abs(adv - np.round(adv)) < tol):
        warnings.warn("map coincides with the diagonal at every sample; slopes are degenerate",
                      RuntimeWarning, stacklevel=2)
        return [MapFixedPoint(float(xi), "unstable", 1.0, int(round(a)), branch=int(b))
                for xi, a, b in zip(x, adv, m.branch_id)]
    seen = []
    for i in range(n):
        j = (i + 1) % n
        if m.branch_id[i] != m.branch_id[j] or n == 1:
            continue
        xa, xb = x[i], x[j] + (1.0 if j == 0 else 0.0)
        aa = adv[i]
        ab = y[j] + (1.0 if j == 0 else 0.0) - xb
        lo, hi = min(aa, ab), max(aa, ab)
        for q in range(math.ceil(lo), math.floor(hi) + 1):
            da, db = aa - q, ab - q
            if da * db > 0 or db == 0.0:
                continue
            if m.sampler is not None:
                fp = _sampled_zero(m.sampler, q, xa, xb, tol)
                if fp is None:
                    continue
                if abs(fp[1]) < 1.0:
                    # stable points are orbits: re-solve with starts that reach
                    # the fold along the upper sheet, as a real orbit does
                    try:
                        fp = _sampled_zero(m.sampler, q, fp[0] - 2e-3, fp[0] + 2e-3, tol,
                                           family="approach") or fp
                    except MapError:
                        pass
                phi, slope, psi = fp
            else:
                phi = xa if da == 0.0 else xa - da * (xb - xa) / (db - da)
                slope = (ab - aa) / (xb - xa) + 1.0
                psi = float("nan")
                phi %= 1.0
            if any(abs(_circ(phi - f)) < 10 * tol for f in seen):
                continue
            seen.append(phi)
            out.append(MapFixedPoint(float(phi), "stable" if abs(slope) < 1 else "unstable",
                                     float(slope), int(q), psi, int(m.branch_id[i])))
    out.sort(key=lambda f: f.phi)
    return out


# ---------------------------------------------------------------- bifurcations

EDGE = 1e-9  # psi offset used for one-sided limits at a branch end


@dataclass(frozen=True)
class BranchZero:
    psi: float
    phi: float
    slope: float  # map slope dPhi_{n+p}/dPhi_n

    @property
    def stable(self) -> bool:
        return abs(self.slope) < 1.0


@dataclass
class BranchState:
    """Signed distance ``D = advance - q`` to the diagonal along one map branch."""
    k: float
    alpha_scn: float
    order: int
    q: int
    psi_a: float  # branch ends (manifold start phase); psi_b may exceed 1
    psi_b: float
    phi_a: float
    phi_b: float
    d_a: float  # one-sided limits of D at the ends
    d_b: float
    slope_a: float  # one-sided map slopes at the ends
    slope_b: float
    zeros: list
    continuous: bool = False
    min_abs_d: float = math.inf

    @property
    def stable(self) -> list:
        return [z for z in self.zeros if z.stable]

    @property
    def unstable(self) -> list:
        return [z for z in self.zeros if not z.stable]

    def contains(self, phi: float) -> bool:
        if self.continuous:
            return True
        return (phi - self.phi_a) % 1.0 <= (self.phi_b - self.phi_a) % 1.0

    @property
    def signature(self) -> tuple:
        return (len(self.stable), len(self.unstable))


def _select_branch(discs: list, ref_phi: float):
    """Consecutive discontinuities ``(left, right)`` enclosing ``ref_phi``."""
    ds = sorted(discs, key=lambda d: d.phi_left)
    n = len(ds)
    for i in range(n):
        lo, hi = ds[i], ds[(i + 1) % n]
        width = (hi.phi_left - lo.phi_right) % 1.0 if n > 1 else 1.0
        if (ref_phi - lo.phi_right) % 1.0 <= width:
            return lo, hi
    return ds[0], ds[0]


def _local_slope(m: ReturnMap, s: float, h: float) -> float:
    s0, s1 = m.manifold(s - h), m.manifold(s + h)
    return (s1.lift - s0.lift) / (s1.phi_n - s0.phi_n)


def _effective_end(m: ReturnMap, end: float, other: float, sign: int) -> float:
    """Pull ``end`` inward to where the map slope drops to ``INF_SLOPE``.

    Inside that layer the map is numerically vertical; a fixed point that
    enters it has reached the border. Finite-slope ends are returned as is.
    """
    width = abs(other - end)
    def slope(delta):
        return abs(_local_slope(m, end + sign * delta, 0.25 * delta))
    lo = 4 * EDGE
    if slope(lo) <= INF_SLOPE:
        return end
    hi = min(1e-2, 0.25 * width)
    if slope(hi) > INF_SLOPE:
        return end + sign * hi
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if slope(mid) > INF_SLOPE:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-6:
            break
    return end + sign * hi


def branch_state(params: ParameterSet, order: int, q: int, ref_phi: float,
                 grid_n: int = 256, nodes: int = 48, sampler: ReturnMap | None = None,
                 smap: SampledCircleMap | None = None) -> BranchState:
    """Fixed points of the ``order``-th return map on the branch holding ``ref_phi``.

    Built from manifold starts only, so that ends, zeros and slopes all come
    from the same family of initial conditions.
    """
    from scipy.optimize import brentq, minimize_scalar

    m = sampler or ReturnMap(params, order)
    smap = smap or build_map(order, PhaseGrid.uniform(grid_n), params, sampler=m)
    discs = smap.discontinuities
    if discs:
        lo, hi = _select_branch(discs, ref_phi % 1.0)
        a = lo.psi + EDGE
        b = hi.psi - EDGE
        if b <= a:
            b += 1.0
        continuous = False
    else:
        a = manifold_at(m, ref_phi).psi - 0.5
        b = a + 1.0
        continuous = True

    def D(s):
        return m.manifold(s).advance - q

    # on an infinite-slope end the border is where the slope passes INF_SLOPE
    a = _effective_end(m, a, b, +1)
    b = _effective_end(m, b, a, -1)
    span = b - a
    ss = [a + span * 0.5 * (1.0 - math.cos(math.pi * j / nodes)) for j in range(nodes + 1)]
    ss[0], ss[-1] = a, b
    ds = [D(s) for s in ss]
    roots = []
    for j in range(nodes):
        if ds[j] == 0.0:
            roots.append(ss[j])
        elif ds[j] * ds[j + 1] < 0:
            roots.append(brentq(D, ss[j], ss[j + 1], xtol=1e-12))
    # a pair of zeros can hide between two nodes near a tangency
    min_abs = float(np.min(np.abs(ds)))
    for j in range(1, nodes):
        if ds[j - 1] * ds[j] > 0 and ds[j] * ds[j + 1] > 0 and abs(ds[j]) < min(abs(ds[j - 1]), abs(ds[j + 1])):
            sgn = math.copysign(1.0, ds[j])
            r = minimize_scalar(lambda s: sgn * D(s), bounds=(ss[j - 1], ss[j + 1]),
                                method="bounded", options={"xatol": 1e-12})
            min_abs = min(min_abs, abs(r.fun))
            if r.fun < 0:
                roots.append(brentq(D, ss[j - 1], r.x, xtol=1e-12))
                roots.append(brentq(D, r.x, ss[j + 1], xtol=1e-12))
    if continuous:
        roots = [r for r in roots if r < b - 1e-9] if len(roots) > 1 else roots
    zeros = []
    for r in sorted(roots):
        h = min(1e-7, 0.25 * (r - a), 0.25 * (b - r))
        s0, s1 = m.manifold(r - h), m.manifold(r + h)
        z = m.manifold(r)
        zeros.append(BranchZero(r, z.phi_n % 1.0, (s1.lift - s0.lift) / (s1.phi_n - s0.phi_n)))

    def end_slope(s, sign):
        s0 = m.manifold(s)
        s1 = m.manifold(s + sign * 1e-7)
        return (s1.lift - s0.lift) / (s1.phi_n - s0.phi_n)

    ea, eb = m.manifold(a), m.manifold(b)
    return BranchState(
        k=params.k, alpha_scn=params.alpha_SCN, order=order, q=q, psi_a=a, psi_b=b,
        phi_a=ea.phi_n % 1.0, phi_b=eb.phi_n % 1.0, d_a=ds[0], d_b=ds[-1],
        slope_a=end_slope(a, 1), slope_b=end_slope(b, -1), zeros=zeros,
        continuous=continuous, min_abs_d=min_abs)


class UnresolvedTransition(RuntimeError):
    """Changes between two maps could not be separated within the bisection budget."""


def _changes(s1: BranchState, s2: BranchState) -> list:
    """Elementary differences between two branch states (``s1`` at the larger ``k``)."""
    out = []
    if not (s1.continuous or s2.continuous):
        if (s1.d_a > 0) != (s2.d_a > 0):
            out.append("left")
        if (s1.d_b > 0) != (s2.d_b > 0):
            out.append("right")
    n1, n2 = len(s1.zeros), len(s2.zeros)
    border = len(out)
    if (n2 - n1 - border) % 2 == 0 and abs(n2 - n1) != border:
        out.append("interior")
    elif abs(n2 - n1) > border:
        out.append("interior")
    return out


def _classify_leaf(change: str, s1: BranchState, s2: BranchState, k_lo: float, k_hi: float):
    k = 0.5 * (k_lo + k_hi)
    detail = {"k_lo": k_lo, "k_hi": k_hi, "zeros_before": s1.signature, "zeros_after": s2.signature,
              "continuous": s1.continuous or s2.continuous}
    if change == "interior":
        kind = "SN"
        pair = s1.zeros if len(s1.zeros) > len(s2.zeros) else s2.zeros
        slopes = sorted(z.slope for z in pair)
        detail.update({"slopes": slopes, "created": len(s2.zeros) > len(s1.zeros),
                       "phi": [z.phi for z in pair]})
    else:
        slope = 0.5 * ((s1.slope_a + s2.slope_a) if change == "left" else (s1.slope_b + s2.slope_b))
        # named by the fixed point that hits the border; the slope at the
        # border end only decides when the counts do not
        ds = s2.signature[0] - s1.signature[0]
        du = s2.signature[1] - s1.signature[1]
        if ds and not du:
            kind = "BC_S"
        elif du and not ds:
            kind = "BC_U"
        else:
            kind = "BC_S" if abs(slope) < 1.0 else "BC_U"
        detail.update({"border": change, "border_slope": slope,
                       "phi_border": s1.phi_a if change == "left" else s1.phi_b})
    return BifurcationRecord(kind, k, s1.alpha_scn, EVIDENCE[kind], (k_lo, k_hi), detail)


def classify_transition(seq, q: int | None = None, ref_phi: float | None = None,
                        k_tol: float = 1e-4, grid_n: int = 256, max_depth: int = 40) -> list:
    """Bifurcations of a tracked fixed point along a descending ``k`` sequence.

    ``seq`` holds ``(k, SampledCircleMap)`` pairs at fixed alpha and order.
    The branch holding the stable fixed point of the first map is followed;
    any change in its zero set between neighbours is bisected in ``k`` to
    ``k_tol`` and classified: a sign change of ``D`` at a branch end is a
    border collision (stable or unstable by the end slope), a change by a
    pair in the interior is a saddle-node.
    """
    seq = sorted(seq, key=lambda r: -r[0])
    if len(seq) < 2:
        raise ValueError("need at least two maps")
    first = seq[0][1]
    order = first.order
    base = first.params
    if q is None or ref_phi is None:
        fps = [f for f in find_fixed_points(first) if f.stability == "stable"]
        if not fps:
            raise ValueError("first map has no stable fixed point to follow")
        q = fps[0].q if q is None else q
        ref_phi = fps[0].phi if ref_phi is None else ref_phi
    cache: dict = {}

    def state(k, ref):
        key = round(k, 12)
        if key not in cache:
            smap = next((m for kk, m in seq if abs(kk - k) < 1e-14), None)
            p = base.with_(k=k)
            cache[key] = branch_state(p, order, q, ref, grid_n=grid_n,
                                      sampler=smap.sampler if smap is not None else None, smap=smap)
        return cache[key]

    def follow(st, ref):
        return st.stable[0].phi if st.stable else ref

    records = []

    def resolve(k_hi, k_lo, s_hi, s_lo, ref, depth):
        ch = _changes(s_hi, s_lo)
        if not ch:
            return
        if k_hi - k_lo <= k_tol or depth >= max_depth:
            if len(ch) > 1 and k_hi - k_lo > k_tol:
                raise UnresolvedTransition(f"changes {ch} not separated in [{k_lo}, {k_hi}]")
            for c in ch:
                records.append(_classify_leaf(c, s_hi, s_lo, k_lo, k_hi))
            return
        k_mid = 0.5 * (k_hi + k_lo)
        s_mid = state(k_mid, ref)
        resolve(k_hi, k_mid, s_hi, s_mid, ref, depth + 1)
        resolve(k_mid, k_lo, s_mid, s_lo, follow(s_mid, ref), depth + 1)

    ref = ref_phi
    prev_k = seq[0][0]
    prev = state(prev_k, ref)
    ref = follow(prev, ref)
    for k, _ in seq[1:]:
        cur = state(k, ref)
        resolve(prev_k, k, prev, cur, ref, 0)
        ref = follow(cur, ref)
        prev_k, prev = k, cur
    records.sort(key=lambda r: -r.k)
    return records


def k_sequence(params: ParameterSet, order: int, k_hi: float, k_lo: float, step: float,
               grid_n: int = 256) -> list:
    """Descending ``(k, map)`` pairs for ``classify_transition``."""
    n = max(1, int(round((k_hi - k_lo) / step)))
    ks = [k_hi - (k_hi - k_lo) * i / n for i in range(n + 1)]
    return [(k, build_map(order, PhaseGrid.uniform(grid_n), params.with_(k=k))) for k in ks]


# ---------------------------------------------------------------- tangency

@dataclass(frozen=True)
class TangencyRecord:
    distance: float  # signed, normalized (c, h); negative below the fold (still on the wake sheet)
    angle: float  # radians between orbit and fold directions at the closest point
    t: float
    c: float
    h: float
    onset_angle: float = float("nan")  # smallest crossing angle at a sleep onset

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _norm(c, h, p):
    return np.asarray(c) / 2.0, np.asarray(h) / (p.h_max - p.h_min)


def _angle(u, v) -> float:
    nu, nv = math.hypot(*u), math.hypot(*v)
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    cosv = abs(u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return math.acos(min(1.0, cosv))


def tangency_witness(orbit, fold: fs.FoldCurve, p: ParameterSet | None = None) -> TangencyRecord:
    """Closest approach of wake segments to the upper fold curve, away from the fall-off itself.

    The gap ``g = h - h_fold(c)`` is negative while the orbit rides the upper
    sheet and reaches 0 where it falls off. Interior maxima of ``g`` within
    wake segments are where the orbit runs parallel to the fold; a maximum at
    ``g = 0`` is the tangency behind a border collision. Without an interior
    maximum the distance is ``-inf``. ``orbit`` may also be a FoldCurve,
    which lies on ``fold`` at distance 0.
    """
    if isinstance(orbit, fs.FoldCurve):
        h = fold.h_at(orbit.c)
        d = np.abs(orbit.h_fold - h)
        i = int(np.argmin(d))
        p = p or getattr(orbit, "params", None)
        span = (p.h_max - p.h_min) if p is not None else 1.0
        return TangencyRecord(float(d[i] / span), 0.0, float("nan"), float(orbit.c[i]),
                              float(orbit.h_fold[i]))
    p = p or orbit.params
    t, y, reg = orbit.t, orbit.y, orbit.regime
    c, h = y[:, 4], y[:, 3]
    g = (h - fold.h_at(c)) / (p.h_max - p.h_min)
    wake = reg[:, 0].astype(bool)
    dfc = np.gradient(fold.h_fold, fold.c)
    best = None
    for i in range(1, len(t) - 1):
        if not (wake[i - 1] and wake[i] and wake[i + 1]):
            continue
        if g[i] >= g[i - 1] and g[i] >= g[i + 1] and g[i] < 0:
            if best is None or g[i] > g[best]:
                best = i
    onset = [e for e in orbit.events if e.kind == "sleep_onset"]
    on_ang = math.nan
    for e in onset:
        X = e.state
        slope = float(np.interp(X.c, fold.c, dfc))
        v = (-p.omega * math.sin(X.theta) / 2.0, (p.h_max - X.h) / (p.k * p.tau_hw) / (p.h_max - p.h_min))
        a = _angle(v, (0.5, slope / (p.h_max - p.h_min)))
        on_ang = a if math.isnan(on_ang) else min(on_ang, a)
    if best is None:
        # the orbit only meets the fold where it falls off
        return TangencyRecord(-math.inf, float("nan"), float("nan"), float("nan"), float("nan"), on_ang)
    i = best
    # parabolic refinement of the maximum of g
    den = g[i - 1] - 2 * g[i] + g[i + 1]
    frac = 0.5 * (g[i - 1] - g[i + 1]) / den if den != 0 else 0.0
    gm = g[i] - 0.25 * (g[i - 1] - g[i + 1]) * frac
    slope = float(np.interp(c[i], fold.c, dfc))
    cn, hn = _norm([c[i - 1], c[i + 1]], [h[i - 1], h[i + 1]], p)
    a = _angle((cn[1] - cn[0], hn[1] - hn[0]), (0.5, slope / (p.h_max - p.h_min)))
    return TangencyRecord(float(gm), a, float(t[i]), float(c[i]), float(h[i]), on_ang)
