"""Fast-subsystem equilibria and the saddle-node (fold) curves of the Z-surface.

With ``h`` and ``c`` frozen, the SCN rate decouples (``f_SCN = SCN_inf(c)``)
and the remaining equilibrium condition reduces to a scalar fixed point in
``f_W``::

    f_W = W_inf(g_scnw * SCN - g_sw * S_inf(-g_ws * f_W - g_scns * SCN, h))

Folds are where the composed map also has unit slope.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import ModelState, scn_levels, steady_state_S, steady_state_SCN, steady_state_W
from .params import ParameterSet

ROOT_GRID = 2000
FOLD_TOL = 1e-10


class FoldNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class FastEquilibrium:
    f_W: float
    f_S: float
    f_SCN: float
    stability: str  # "stable" | "saddle"
    branch: str  # "upper" | "middle" | "lower"
    slope: float  # derivative of the composed map at the root


@dataclass(frozen=True)
class FoldCurve:
    side: str
    c: np.ndarray
    h_fold: np.ndarray
    f_W_fold: np.ndarray
    alpha_scn: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def samples(self):
        return list(zip(self.c.tolist(), self.h_fold.tolist(), self.f_W_fold.tolist()))

    def h_at(self, c):
        return np.interp(c, self.c, self.h_fold)

    def f_W_at(self, c):
        return np.interp(c, self.c, self.f_W_fold)


def scn_drive(c: float, p: ParameterSet, chs: bool = False) -> float:
    if chs:
        hi, lo = scn_levels(p)
        return hi if c > p.beta_SCN else lo
    return float(steady_state_SCN(c, p))


def _composed(fW, h, scn, p: ParameterSet):
    """Composed map value and its derivative in f_W."""
    v = -p.g_ws * fW - p.g_scns * scn
    s = steady_state_S(v, h, p)
    u = p.g_scnw * scn - p.g_sw * s
    w = steady_state_W(u, p)
    # sigmoid derivatives: d/dx [M/2 (1 + tanh((x-b)/a))] = M/(2a) sech^2
    ds = s * (p.S_max - s) * 2.0 / (p.S_max * p.alpha_S)
    dw = w * (p.W_max - w) * 2.0 / (p.W_max * p.alpha_W)
    return w, p.g_sw * p.g_ws * dw * ds, s


def fast_jacobian(fW, fS, fSCN, h, p: ParameterSet, chs: bool = False) -> np.ndarray:
    u = p.g_scnw * fSCN - p.g_sw * fS
    v = -p.g_ws * fW - p.g_scns * fSCN
    w = steady_state_W(u, p)
    s = steady_state_S(v, h, p)
    dw = w * (p.W_max - w) * 2.0 / (p.W_max * p.alpha_W)
    ds = s * (p.S_max - s) * 2.0 / (p.S_max * p.alpha_S)
    return np.array([
        [-1.0 / p.tau_W, -p.g_sw * dw / p.tau_W, p.g_scnw * dw / p.tau_W],
        [-p.g_ws * ds / p.tau_S, -1.0 / p.tau_S, -p.g_scns * ds / p.tau_S],
        [0.0, 0.0, -1.0 / p.tau_SCN],
    ])


def _roots(h, scn, p: ParameterSet, n: int = ROOT_GRID):
    grid = np.linspace(0.0, p.W_max, n)
    g = _composed(grid, h, scn, p)[0] - grid
    idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]
    roots = []
    for i in idx:
        a, b = grid[i], grid[i + 1]
        if g[i] == 0.0:
            roots.append(a)
            continue
        if g[i + 1] == 0.0:
            continue  # picked up as the left end of the next interval
        roots.append(brentq(lambda x: _composed(x, h, scn, p)[0] - x, a, b, xtol=1e-14, rtol=1e-15))
    return roots


def count_equilibria(h, c, p: ParameterSet, chs: bool = False, n: int = ROOT_GRID) -> int:
    return len(_roots(h, scn_drive(c, p, chs), p, n))


def fast_equilibria(h: float, c: float, p: ParameterSet, chs: bool = False,
                    n: int = ROOT_GRID) -> list[FastEquilibrium]:
    """Equilibria of the fast subsystem at frozen ``(h, c)``, ordered by ``f_W``."""
    scn = scn_drive(c, p, chs)
    roots = _roots(h, scn, p, n)
    out = []
    for j, r in enumerate(roots):
        w, slope, s = _composed(r, h, scn, p)
        eig = np.linalg.eigvals(fast_jacobian(r, s, scn, h, p))
        stable = bool(np.all(eig.real < 0)) and slope < 1.0
        if len(roots) == 1:
            branch = "upper" if r > p.theta_W else "lower"
        else:
            branch = ("lower", "middle", "upper")[min(j, 2)] if len(roots) == 3 else (
                "lower" if j == 0 else "upper")
        out.append(FastEquilibrium(float(r), float(s), scn, "stable" if stable else "saddle",
                                   branch, float(slope)))
    return out


def z_curve_h(fW, c, p: ParameterSet, chs: bool = False):
    """Closed-form ``h`` on the equilibrium curve as a function of ``f_W``.

    Inverts the two sigmoids; NaN where the required sleep rate leaves
    ``(0, S_max)``. Independent of the root-finding path, so used as a check.
    """
    scn = scn_drive(c, p, chs)
    fW = np.asarray(fW, dtype=float)
    u = p.beta_W + p.alpha_W * np.arctanh(2.0 * fW / p.W_max - 1.0)
    s = (p.g_scnw * scn - u) / p.g_sw
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = np.where((s > 0) & (s < p.S_max), 2.0 * s / p.S_max - 1.0, np.nan)
        bs = -p.g_ws * fW - p.g_scns * scn - p.alpha_S * np.arctanh(arg)
    return (bs - p.k1) / p.k2


def _refine_fold(fW0, h0, scn, p: ParameterSet, tol: float = FOLD_TOL, max_iter: int = 60):
    """Damped Newton on (composed(f_W) - f_W, slope - 1) in the unknowns (f_W, h)."""
    x = np.array([fW0, h0], dtype=float)

    def F(z):
        w, sl, _ = _composed(z[0], z[1], scn, p)
        return np.array([w - z[0], sl - 1.0])

    fx = F(x)
    for _ in range(max_iter):
        if np.max(np.abs(fx)) < tol:
            return x
        J = np.empty((2, 2))
        for j, step in enumerate((1e-7, 1e-5)):
            e = np.zeros(2)
            e[j] = step
            J[:, j] = (F(x + e) - F(x - e)) / (2 * step)
        try:
            dx = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError as exc:
            raise FoldNotFound("singular Jacobian while refining fold") from exc
        lam = 1.0
        while lam > 1e-6:
            xn = x + lam * dx
            if 0.0 < xn[0] < p.W_max:
                fn = F(xn)
                if np.max(np.abs(fn)) < np.max(np.abs(fx)) or np.max(np.abs(fn)) < tol:
                    x, fx = xn, fn
                    break
            lam *= 0.5
        else:
            break
    if np.max(np.abs(fx)) < tol * 100:
        return x
    raise FoldNotFound(f"fold refinement did not converge (residual {np.max(np.abs(fx)):.2e})")


def _count_bisect(lo, hi, count_lo, scn, p, iters=60):
    """Bisect ``h`` between a point with ``count_lo`` roots and one without."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if len(_roots(mid, scn, p)) == count_lo:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-9 * max(1.0, abs(hi)):
            break
    return lo, hi


def fold_points(c: float, p: ParameterSet, chs: bool = False, refine: bool = True,
                n_scan: int = 129) -> tuple[float, float]:
    """``(h_upper, h_lower)``: where the upper (wake) and lower (sleep) branches end.

    Found by bisection on the equilibrium count over ``[h_min, h_max]`` and, with
    ``refine``, polished by the 2-D fold solve.
    """
    return tuple(e[0] for e in fold_details(c, p, chs, refine, n_scan))


def fold_details(c, p: ParameterSet, chs=False, refine=True, n_scan=129):
    """Both folds as ``((h, f_W), (h, f_W))`` for the upper and lower side."""
    scn = scn_drive(c, p, chs)
    hs = np.linspace(p.h_min, p.h_max, n_scan)
    counts = np.array([len(_roots(h, scn, p)) for h in hs])
    three = np.nonzero(counts >= 3)[0]
    if three.size == 0:
        raise FoldNotFound(f"no bistable h-interval in [h_min, h_max] at c={c}")
    i0, i1 = three[0], three[-1]
    if i0 == 0 or i1 == len(hs) - 1:
        raise FoldNotFound(f"fold lies outside [h_min, h_max] at c={c}")
    # lower fold: count goes 1 -> 3 as h increases through it
    lo_a, lo_b = _count_bisect(hs[i0], hs[i0 - 1], 3, scn, p)
    up_a, up_b = _count_bisect(hs[i1], hs[i1 + 1], 3, scn, p)
    out = []
    for (a, b), side in (((up_a, up_b), "upper"), ((lo_a, lo_b), "lower")):
        roots = _roots(a, scn, p)
        # the two roots about to merge: upper pair for the upper fold
        pair = roots[-2:] if side == "upper" else roots[:2]
        h0, f0 = 0.5 * (a + b), 0.5 * (pair[0] + pair[1])
        if refine:
            f0, h0 = _refine_fold(f0, h0, scn, p)
        out.append((float(h0), float(f0)))
    return out[0], out[1]


def fold_state(c: float, p: ParameterSet, side: str = "upper", chs: bool = False,
               guess: tuple[float, float] | None = None) -> tuple[float, float, float, float]:
    """Fold equilibrium ``(h, f_W, f_S, f_SCN)`` at drive value ``c``."""
    scn = scn_drive(c, p, chs)
    if guess is not None:
        try:
            fW, h = _refine_fold(guess[1], guess[0], scn, p)
        except FoldNotFound:
            guess = None
        else:
            # a guess can slide to the other fold; accept only the requested side
            if (side == "upper") == (fW > _fold_split(h, scn, p)):
                return float(h), float(fW), float(_composed(fW, h, scn, p)[2]), scn
    up, lo = fold_details(c, p, chs)
    h, fW = up if side == "upper" else lo
    return h, fW, float(_composed(fW, h, scn, p)[2]), scn


def _fold_split(h, scn, p):
    roots = _roots(h, scn, p)
    return roots[len(roots) // 2] if len(roots) >= 2 else p.W_max / 2


def sn_curve(side: str, n: int, p: ParameterSet, chs: bool = False, max_insert: int = 400) -> FoldCurve:
    """Fold curve over ``c`` in [-1, 1] with refinement where ``h_fold`` changes fastest."""
    if n < 16:
        raise ValueError("need at least 16 samples")
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    pick = 0 if side == "upper" else 1
    cs = list(np.linspace(-1.0, 1.0, n))
    if chs:
        # two flat levels; keep samples off the switch itself
        cs = [c for c in cs if c != p.beta_SCN]
    vals = {c: fold_details(c, p, chs)[pick] for c in cs}
    span = p.h_max - p.h_min
    inserted = 0
    changed = True
    while changed and inserted < max_insert:
        changed = False
        keys = sorted(vals)
        for a, b in zip(keys[:-1], keys[1:]):
            if abs(vals[a][0] - vals[b][0]) > 0.01 * span and b - a > 1e-9:
                if chs and a < p.beta_SCN < b:
                    continue
                mid = 0.5 * (a + b)
                vals[mid] = fold_details(mid, p, chs)[pick]
                inserted += 1
                changed = True
    keys = np.array(sorted(vals))
    return FoldCurve(side, keys, np.array([vals[c][0] for c in keys]),
                     np.array([vals[c][1] for c in keys]), p.alpha_SCN,
                     {"inserted": inserted, "chs": chs})


def unstable_manifold_ic(c: float, offset: float, p: ParameterSet, theta: float | None = None,
                         guess: tuple[float, float] | None = None) -> ModelState:
    """Upper-fold equilibrium pushed ``offset`` (in f_W units) along its centre direction toward Gamma."""
    h, fW, fS, scn = fold_state(c, p, "upper", guess=guess)
    J = fast_jacobian(fW, fS, scn, h, p)
    try:
        lam, vec = np.linalg.eig(J)
    except np.linalg.LinAlgError as exc:
        raise FoldNotFound("eigen-decomposition failed at fold") from exc
    j = int(np.argmin(np.abs(lam)))
    v = np.real(vec[:, j])
    if abs(v[0]) < 1e-14:
        raise FoldNotFound("centre direction has no f_W component")
    v = v / -v[0]  # unit decrease in f_W
    th = math.acos(max(-1.0, min(1.0, c))) if theta is None else theta
    return ModelState(fW + offset * v[0], fS + offset * v[1], scn + offset * v[2], h, c, th)


def centre_eigenpair(c: float, p: ParameterSet):
    h, fW, fS, scn = fold_state(c, p, "upper")
    J = fast_jacobian(fW, fS, scn, h, p)
    lam, vec = np.linalg.eig(J)
    j = int(np.argmin(np.abs(lam)))
    return J, lam[j], vec[:, j]


def z_surface(p: ParameterSet, n_c: int = 41, n_h: int = 81, chs: bool = False):
    """Equilibria on a rectangular (c, h) grid: rows ``(c, h, f_W, branch)``."""
    rows = []
    for c in np.linspace(-1.0, 1.0, n_c):
        for h in np.linspace(p.h_min, p.h_max, n_h):
            for eq in fast_equilibria(h, c, p, chs):
                rows.append((float(c), float(h), eq.f_W, eq.branch))
    return rows


def write_fold_csv(curves, path) -> None:
    """FoldCurve export: one row per sample, columns side, c, h_fold, f_W_fold."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "c", "h_fold", "f_W_fold"])
        for fc in curves:
            for c, h, f in fc.samples:
                w.writerow([fc.side, repr(c), repr(h), repr(f)])


def write_zsurface_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "h", "f_W", "branch"])
        for c, h, f, b in rows:
            w.writerow([repr(c), repr(h), repr(f), b])
