"""Two-parameter (k, alpha_SCN) atlas: tongue edges, bifurcation sequences,
the bistability island and the map-continuity transition zone.

Edges come from bisection in ``k`` on rotation-number membership; the
bifurcation kinds at each edge come from ``circlemap.classify_transition``
on the ``p``-th return map, with ``p`` the denominator of the tongue's rho.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import circlemap as cm
from .params import ParameterSet
from .rotation import RotationError, map_cells, rotation_number, simulate_onsets, onset_phase

EDGE_TOL = 1e-3
MERGE_TOL = 1e-3  # events closer than this in k are reported as coincident
ORBIT_TOL = 2e-3  # spread of one orbit's records on a continuous map

GRAMMARS = (
    ("BC_U", "SN"),
    ("BC_S",),
    ("SN", "BC_U", "BC_S"),
    ("SN", "SN"),
    ("SN", "BC_U", "BC_U", "SN"),
    ("SN", "BC_U", "SN", "SN", "BC_S"),
    ("SN", "BC_U", "SN", "BC_S+SN"),
    ("SN", "BC_U", "SN", "BC_S", "SN"),
    ("SN", "BC_U", "SN", "BC_S", "BC_U", "SN"),
)


def _member(params: ParameterSet, k: float, rho: Fraction) -> bool:
    try:
        r = rotation_number(params.with_(k=k))
    except RotationError:
        return False
    return r.exact and r.rho == rho


def bisect_edge(params: ParameterSet, rho: Fraction, k_in: float, k_out: float,
                tol: float = EDGE_TOL) -> float:
    """Last ``k`` inside the tongue between ``k_in`` (member) and ``k_out`` (not), to ``tol``."""
    while abs(k_in - k_out) > tol:
        mid = 0.5 * (k_in + k_out)
        if _member(params, mid, rho):
            k_in = mid
        else:
            k_out = mid
    return k_in


def _orbit_events(records, orbit_tol: float = ORBIT_TOL) -> list:
    """Collapse same-kind records of a continuous map that belong to one orbit.

    On a continuous ``p``-th return map all ``p`` points of an orbit share the
    one branch, so each orbit-level event appears ``p`` times at nearly the
    same ``k``.
    """
    out = []
    for r in sorted(records, key=lambda r: -r.k):
        prev = out[-1] if out else None
        if (prev is not None and r.detail.get("continuous") and prev[-1].detail.get("continuous")
                and r.kind == prev[-1].kind and prev[0].k - r.k <= orbit_tol):
            prev.append(r)
        else:
            out.append([r])
    return out


def sequence_tokens(records, merge_tol: float = MERGE_TOL) -> tuple:
    """Kinds in descending ``k``; distinct events closer than ``merge_tol`` merge into ``"A+B"``."""
    events = [(g[0].k, g[-1].k, g[0].kind) for g in _orbit_events(records)]
    out, group = [], []
    for e in events:
        if group and group[-1][1] - e[0] > merge_tol:
            out.append("+".join(sorted(x[2] for x in group)))
            group = []
        group.append(e)
    if group:
        out.append("+".join(sorted(x[2] for x in group)))
    return tuple(out)


def grammar_check(tokens) -> tuple[str, tuple | None]:
    """``("known", grammar)`` when ``tokens`` is an observed sequence, else ``("novel", None)``."""
    tokens = tuple(tokens)
    for g in GRAMMARS:
        if tokens == g:
            return "known", g
    return "novel", None


@dataclass
class TongueEdge:
    alpha_scn: float
    k_gain: float | None  # None when the tongue reaches the top of the scanned range
    k_loss: float | None
    records: list = field(default_factory=list)
    ref_phi: float = float("nan")

    @property
    def labels(self) -> tuple:
        return tuple(r.kind for r in sorted(self.records, key=lambda r: -r.k))

    @property
    def tokens(self) -> tuple:
        return sequence_tokens(self.records)

    def as_dict(self) -> dict:
        status, _ = grammar_check(self.tokens)
        return {"alpha_scn": self.alpha_scn, "k_gain": self.k_gain, "k_loss": self.k_loss,
                "sequence": list(self.tokens), "grammar": status,
                "records": [r.as_dict() for r in self.records]}


@dataclass
class Tongue:
    rho: Fraction
    edges: list = field(default_factory=list)
    gaps: list = field(default_factory=list)  # alphas where the plateau was not found

    @property
    def boundary(self) -> list:
        return [(e.alpha_scn, e.k_gain, e.k_loss) for e in self.edges]

    @property
    def sequence_labels(self) -> dict:
        return {e.alpha_scn: e.labels for e in self.edges}

    def edge(self, alpha: float) -> TongueEdge:
        for e in self.edges:
            if abs(e.alpha_scn - alpha) < 1e-12:
                return e
        raise KeyError(alpha)

    def as_dict(self) -> dict:
        return {"rho": str(self.rho), "p": self.rho.denominator, "q": self.rho.numerator,
                "edges": [e.as_dict() for e in self.edges], "gaps": self.gaps}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha_scn", "k_gain", "k_loss", "sequence"])
            for e in sorted(self.edges, key=lambda e: e.alpha_scn):
                w.writerow([repr(e.alpha_scn), "" if e.k_gain is None else repr(e.k_gain),
                            "" if e.k_loss is None else repr(e.k_loss), "->".join(e.tokens)])


def _scan_cell(args):
    k, params = args
    try:
        return k, rotation_number(params.with_(k=k))
    except RotationError:
        return k, None


def _reference_phase(params: ParameterSet, k: float, rho: Fraction) -> float:
    r = rotation_number(params.with_(k=k))
    if not (r.exact and r.rho == rho):
        raise RotationError(f"rho {rho} not found at k={k}")
    return r.phases[0]


def tongue_edge(rho, alpha: float, params: ParameterSet, k_hi: float, k_lo: float,
                scan_step: float = 0.005, tol: float = EDGE_TOL, classify: bool = True,
                map_step: float = 0.005, margin: float = 0.01, jobs: int | None = 1,
                grid_n: int = 256) -> TongueEdge | None:
    """Edges of one tongue at one alpha; ``None`` when the plateau is absent from the scan."""
    rho = Fraction(rho)
    p = params.with_(alpha_SCN=alpha)
    n = max(1, int(round((k_hi - k_lo) / scan_step)))
    ks = [k_hi - (k_hi - k_lo) * i / n for i in range(n + 1)]
    cells = map_cells(_scan_cell, [(k, p) for k in ks], jobs)
    inside = [i for i, (_, r) in enumerate(cells) if r is not None and r.exact and r.rho == rho]
    if not inside:
        return None
    # the longest run of member cells is the tongue
    runs, start = [], inside[0]
    for a, b in zip(inside, inside[1:] + [None]):
        if b != a + 1:
            runs.append((start, a))
            start = b
    i0, i1 = max(runs, key=lambda r: r[1] - r[0])
    k_gain = None if i0 == 0 else bisect_edge(p, rho, ks[i0], ks[i0 - 1], tol)
    k_loss = None if i1 == len(ks) - 1 else bisect_edge(p, rho, ks[i1], ks[i1 + 1], tol)
    edge = TongueEdge(alpha, k_gain, k_loss)
    mid = 0.5 * (ks[i0] + ks[i1])
    edge.ref_phi = _reference_phase(p, ks[min(range(i0, i1 + 1), key=lambda i: abs(ks[i] - mid))], rho)
    if classify:
        top = min(1.0, (k_gain if k_gain is not None else ks[i0]) + margin)
        if k_gain is None:
            top = ks[i0]
        bottom = max(1e-3, (k_loss if k_loss is not None else ks[i1]) - margin)
        seq = cm.k_sequence(p, rho.denominator, top, bottom, map_step, grid_n)
        edge.records = cm.classify_transition(seq, q=rho.numerator, ref_phi=edge.ref_phi,
                                              grid_n=grid_n)
    return edge


def tongue_boundaries(rho, alpha_grid, params: ParameterSet, k_range=(1.0, 0.2), **kw) -> Tongue:
    """Trace one tongue over ``alpha_grid``; plateaus missing at an alpha are recorded as gaps."""
    t = Tongue(Fraction(rho))
    for a in alpha_grid:
        e = tongue_edge(rho, float(a), params, k_range[0], k_range[1], **kw)
        if e is None:
            t.gaps.append(float(a))
        else:
            t.edges.append(e)
    t.edges.sort(key=lambda e: e.alpha_scn)
    return t


# ---------------------------------------------------------------- bistability

@dataclass
class BistabilityIsland:
    region: list = field(default_factory=list)  # (alpha, k_lo, k_hi)
    cells: list = field(default_factory=list)  # (alpha, k, [phases of coexisting stable points], confirmed)

    def as_dict(self) -> dict:
        return {"region": [list(r) for r in self.region],
                "cells": [{"alpha_scn": a, "k": k, "phases": ph, "confirmed": ok}
                          for a, k, ph, ok in self.cells]}


def settle(params: ParameterSet, phi: float, order: int, days: float = 60.0) -> list:
    """Onset phases of the last ``order`` sleeps after a long run from the orbit starting near ``phi``."""
    m = cm.ReturnMap(params, order)
    s = cm.approach_at(m, phi)
    y0 = cm._approach_start(cm.fold_key(params), params.k, s.psi % 1.0, cm.APPROACH_LEAD)
    t0 = cm.start_time(y0, params)
    th, _, _ = simulate_onsets(params, days, False, np.array(y0), (1, int(y0[4] > params.beta_SCN)), t0)
    return sorted(onset_phase(x) for x in th[-order:])


def _close(a: float, b: float, tol: float) -> bool:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d) < tol


def coexisting_stable(params: ParameterSet, order: int = 2, q: int = 1, grid_n: int = 256,
                      confirm: bool = True, tol: float = 1e-3) -> tuple[list, bool]:
    """Stable ``order``-th return fixed points with advance ``q`` that belong to distinct orbits.

    Points of one periodic orbit appear once per branch; two or more orbits
    on the same set of branches mean bistability. With ``confirm`` each
    orbit is integrated for 60 days and must return to its own phases.
    """
    smap = cm.build_map(order, cm.PhaseGrid.uniform(grid_n), params)
    fps = [f for f in cm.find_fixed_points(smap) if f.stability == "stable" and f.q == q]
    by_branch: dict = {}
    for f in fps:
        by_branch.setdefault(f.branch, []).append(f.phi)
    most = max((len(v) for v in by_branch.values()), default=0)
    if most < 2:
        return [f.phi for f in fps], False
    reps = max(by_branch.values(), key=len)
    if not confirm:
        return reps, True
    orbits = []
    for phi in reps:
        ph = settle(params, phi, order)
        if not any(_close(x, phi, tol) for x in ph):
            return reps, False
        orbits.append(ph)
    distinct = all(not any(_close(a, b, tol) for a in o1 for b in o2)
                   for i, o1 in enumerate(orbits) for o2 in orbits[i + 1:])
    return reps, distinct


def _island_cell(args):
    a, k, params, order, q, grid_n = args
    ph, ok = coexisting_stable(params.with_(alpha_SCN=a, k=k), order, q, grid_n)
    return a, k, ph, ok


def bistability_scan(alpha_grid, k_grid, params: ParameterSet, order: int = 2, q: int = 1,
                     grid_n: int = 256, jobs: int | None = 1) -> BistabilityIsland:
    """Cells of the (alpha, k) grid where two stable period-``order`` orbits coexist."""
    items = [(float(a), float(k), params, order, q, grid_n)
             for a in sorted(alpha_grid) for k in sorted(k_grid)]
    cells = map_cells(_island_cell, items, jobs)
    isl = BistabilityIsland(cells=[c for c in cells if c[3]])
    for a in sorted(set(c[0] for c in cells)):
        ks = sorted(c[1] for c in cells if c[0] == a)
        flags = {c[1]: c[3] for c in cells if c[0] == a}
        run = None
        for k in ks:
            if flags[k]:
                run = [k, k] if run is None else [run[0], k]
            elif run is not None:
                isl.region.append((a, run[0], run[1]))
                run = None
        if run is not None:
            isl.region.append((a, run[0], run[1]))
    return isl


def island_from_records(records) -> tuple[float, float] | None:
    """``(k_lo, k_hi)`` between an SN that adds a stable point and the next SN that removes one."""
    recs = sorted(records, key=lambda r: -r.k)
    for i, r in enumerate(recs):
        if r.kind != "SN" or not r.detail.get("created"):
            continue
        before = r.detail["zeros_before"][0]
        after = r.detail["zeros_after"][0]
        if after <= before or before == 0:
            continue
        for s in recs[i + 1:]:
            if s.kind == "SN" and not s.detail.get("created"):
                return s.k, r.k
    return None


def coincidence_gap(records) -> float | None:
    """``k(last SN) - k(BC-S)`` at the bottom of a sequence; changes sign where they coincide."""
    sn = [r.k for r in records if r.kind == "SN" and not r.detail.get("created")]
    bcs = [r.k for r in records if r.kind == "BC_S"]
    if not sn or not bcs:
        return None
    return min(sn) - min(bcs)


def bottom_records(params: ParameterSet, alpha: float, order: int, q: int, ref_phi: float,
                   k_hi: float, k_lo: float, step: float = 0.005, grid_n: int = 256) -> list:
    seq = cm.k_sequence(params.with_(alpha_SCN=alpha), order, k_hi, k_lo, step, grid_n)
    return cm.classify_transition(seq, q=q, ref_phi=ref_phi, grid_n=grid_n)


def locate_coincidence(params: ParameterSet, alpha_lo: float, alpha_hi: float, order: int,
                       q: int, k_window, ref_phi: float, tol: float = 0.005,
                       step: float = 0.005, grid_n: int = 256) -> dict:
    """Bisect alpha on the sign of ``coincidence_gap``; the gap is positive at ``alpha_hi``."""
    def gap(a):
        recs = bottom_records(params, a, order, q, ref_phi, k_window[0], k_window[1], step, grid_n)
        return coincidence_gap(recs), recs

    g_hi, r_hi = gap(alpha_hi)
    g_lo, r_lo = gap(alpha_lo)
    if g_hi is None or g_lo is None or g_hi <= 0 or g_lo >= 0:
        return {"status": "not_bracketed", "gap_hi": g_hi, "gap_lo": g_lo}
    while alpha_hi - alpha_lo > tol:
        mid = 0.5 * (alpha_lo + alpha_hi)
        g, r = gap(mid)
        if g is None:
            return {"status": "lost", "alpha": mid}
        if g > 0:
            alpha_hi, g_hi, r_hi = mid, g, r
        else:
            alpha_lo, g_lo, r_lo = mid, g, r
    k_bcs = 0.5 * (min(x.k for x in r_hi if x.kind == "BC_S") + min(x.k for x in r_lo if x.kind == "BC_S"))
    return {"status": "found", "alpha": 0.5 * (alpha_lo + alpha_hi), "alpha_bracket": [alpha_lo, alpha_hi],
            "k": k_bcs, "gap_bracket": [g_lo, g_hi]}


# ---------------------------------------------------------------- regime switch

def loss_kind(records) -> str | None:
    """How the tracked stable point is lost: the last record in descending ``k``."""
    if not records:
        return None
    return min(records, key=lambda r: r.k).kind


def locate_regime_switch(params: ParameterSet, rho, alpha_lo: float, alpha_hi: float,
                         k_window, ref_phi: float, tol: float = 0.005, step: float = 0.005,
                         grid_n: int = 256) -> dict:
    """Alpha where a tongue's loss changes between BC-S (below) and SN (above).

    Reports the border slope of the nearest border collision on each side;
    it passes through 1 at the switch.
    """
    rho = Fraction(rho)

    def run(a):
        recs = bottom_records(params, a, rho.denominator, rho.numerator, ref_phi,
                              k_window[0], k_window[1], step, grid_n)
        return loss_kind(recs), recs

    kind_lo, r_lo = run(alpha_lo)
    kind_hi, r_hi = run(alpha_hi)
    if kind_lo != "BC_S" or kind_hi != "SN":
        return {"status": "not_bracketed", "low": kind_lo, "high": kind_hi}
    while alpha_hi - alpha_lo > tol:
        mid = 0.5 * (alpha_lo + alpha_hi)
        kind, r = run(mid)
        if kind == "BC_S":
            alpha_lo, r_lo = mid, r
        else:
            alpha_hi, r_hi = mid, r

    def bc(recs):
        return max((x for x in recs if x.kind.startswith("BC")), key=lambda x: x.k, default=None)

    b_lo, b_hi = bc(r_lo), bc(r_hi)
    return {"status": "found", "alpha": 0.5 * (alpha_lo + alpha_hi), "alpha_bracket": [alpha_lo, alpha_hi],
            "k": 0.5 * (min(x.k for x in r_lo) + min(x.k for x in r_hi)),
            "border_slope_low": None if b_lo is None else b_lo.detail["border_slope"],
            "border_slope_high": None if b_hi is None else b_hi.detail["border_slope"],
            "sequence_low": list(sequence_tokens(r_lo)), "sequence_high": list(sequence_tokens(r_hi))}


# ---------------------------------------------------------------- transition zone

def map_continuous(params: ParameterSet, order: int = 1, grid_n: int = 256) -> bool:
    """True when no jump above ``JUMP_TOL`` survives localisation."""
    m = cm.build_map(order, cm.PhaseGrid.uniform(grid_n), params)
    return m.max_jump() < cm.JUMP_TOL


def transition_point(params: ParameterSet, alpha: float, k_hi: float, k_lo: float,
                     tol: float = EDGE_TOL, probes: int = 5, order: int = 1,
                     grid_n: int = 256) -> dict:
    """Largest ``k`` below which the map is continuous, at one alpha.

    A few evenly spaced probes first check that continuity is monotone in
    ``k`` (continuous below, discontinuous above); otherwise the cell is flagged.
    """
    p = params.with_(alpha_SCN=alpha)
    ks = np.linspace(k_lo, k_hi, probes)
    flags = [map_continuous(p.with_(k=float(k)), order, grid_n) for k in ks]
    changes = sum(1 for a, b in zip(flags, flags[1:]) if a != b)
    if changes == 0:
        return {"alpha_scn": alpha, "k_transition": None, "flag": "continuous" if flags[0] else "discontinuous"}
    if changes > 1 or not flags[0]:
        return {"alpha_scn": alpha, "k_transition": None, "flag": "non_monotone",
                "probes": [[float(k), f] for k, f in zip(ks, flags)]}
    j = flags.index(False)
    lo, hi = float(ks[j - 1]), float(ks[j])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if map_continuous(p.with_(k=mid), order, grid_n):
            lo = mid
        else:
            hi = mid
    return {"alpha_scn": alpha, "k_transition": 0.5 * (lo + hi), "flag": None}


def _zone_cell(args):
    return transition_point(*args)


def transition_zone(alpha_grid, params: ParameterSet, k_hi: float = 0.6, k_lo: float = 0.1,
                    tol: float = EDGE_TOL, jobs: int | None = 1) -> list:
    """``[(alpha, k_transition)]`` with flagged cells reported as ``k_transition = None``."""
    items = [(params, float(a), k_hi, k_lo, tol) for a in sorted(alpha_grid)]
    res = map_cells(_zone_cell, items, jobs)
    return [(r["alpha_scn"], r["k_transition"], r["flag"]) for r in res]


# ---------------------------------------------------------------- export

@dataclass
class Atlas:
    tongues: list = field(default_factory=list)
    island: BistabilityIsland | None = None
    zone: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"tongues": [t.as_dict() for t in sorted(self.tongues, key=lambda t: -t.rho)],
                "island": None if self.island is None else self.island.as_dict(),
                "transition_zone": [{"alpha_scn": a, "k_transition": k, "flag": f} for a, k, f in self.zone],
                **self.extras}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable)

    def write(self, outdir) -> list:
        import os
        os.makedirs(outdir, exist_ok=True)
        paths = [os.path.join(outdir, "atlas.json")]
        with open(paths[0], "w") as fh:
            fh.write(self.to_json())
        for t in self.tongues:
            path = os.path.join(outdir, f"tongue_{t.rho.numerator}_{t.rho.denominator}.csv")
            t.to_csv(path)
            paths.append(path)
        return paths


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(type(o))
